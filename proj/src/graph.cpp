#include "brainet/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace brainet::graph {

namespace {

bool in(std::span<const int> sorted, int v) { return std::binary_search(sorted.begin(), sorted.end(), v); }

std::vector<int> sorted_copy(std::span<const int> s) {
    std::vector<int> out(s.begin(), s.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

// Calls f on every size-k subset of `pool` in lexicographic order until f returns true.
template <typename F>
bool for_each_subset(const std::vector<int>& pool, int k, F&& f) {
    const int m = static_cast<int>(pool.size());
    if (k > m) return false;
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[static_cast<std::size_t>(i)] = i;
    std::vector<int> subset(static_cast<std::size_t>(k));
    while (true) {
        for (int i = 0; i < k; ++i) subset[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
        if (f(subset)) return true;
        int i = k - 1;
        while (i >= 0 && idx[static_cast<std::size_t>(i)] == m - k + i) --i;
        if (i < 0) return false;
        ++idx[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < k; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
    }
}

// Which edges the orientation pass may direct, and in which direction.
struct OrientScope {
    std::vector<int> endogenous;
    std::vector<int> exogenous;
    bool everything = false;

    bool is_endo(int v) const { return everything || in(endogenous, v); }
    bool is_exo(int v) const { return !everything && in(exogenous, v); }
    bool may_orient(int from, int to) const {
        if (everything) return true;
        if (is_endo(from) && is_endo(to)) return true;
        return is_exo(from) && is_endo(to);
    }
};

bool try_orient(Cpdag& g, const OrientScope& scope, int from, int to) {
    if (!g.undirected(from, to) || !scope.may_orient(from, to)) return false;
    if (g.has_directed_path(to, from)) return false;
    g.orient(from, to);
    return true;
}

void orient(Cpdag& g, const OrientScope& scope) {
    const auto& nodes = g.nodes();
    for (auto [a, b] : g.directed_edges()) {
        if (scope.is_endo(a) && scope.is_endo(b)) g.make_undirected(a, b);
    }

    // v-structures a -> c <- b for non-adjacent a, b whose separating set excludes c
    for (int c : nodes) {
        if (!scope.is_endo(c)) continue;
        const auto adj = g.adjacents(c);
        for (std::size_t i = 0; i < adj.size(); ++i) {
            for (std::size_t j = i + 1; j < adj.size(); ++j) {
                const int a = adj[i];
                const int b = adj[j];
                if (g.adjacent(a, b)) continue;
                const auto* sep = g.separating_set(a, b);
                if (sep == nullptr || std::find(sep->begin(), sep->end(), c) != sep->end()) continue;
                try_orient(g, scope, a, c);
                try_orient(g, scope, b, c);
            }
        }
    }

    // Meek rules 1-3 until nothing changes
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto [u, v] : g.undirected_edges()) {
            for (int dir = 0; dir < 2; ++dir) {
                const int a = dir == 0 ? u : v;
                const int b = dir == 0 ? v : u;
                if (!g.undirected(a, b) || !scope.may_orient(a, b)) continue;
                bool fire = false;
                for (int c : g.parents(a)) {
                    if (c != b && !g.adjacent(c, b)) {
                        fire = true;
                        break;
                    }
                }
                if (!fire) {
                    for (int c : g.children(a)) {
                        if (g.directed(c, b)) {
                            fire = true;
                            break;
                        }
                    }
                }
                if (!fire) {
                    std::vector<int> into_b;
                    for (int c : g.neighbors(a)) {
                        if (c != b && g.directed(c, b)) into_b.push_back(c);
                    }
                    for (std::size_t i = 0; i < into_b.size() && !fire; ++i) {
                        for (std::size_t j = i + 1; j < into_b.size(); ++j) {
                            if (!g.adjacent(into_b[i], into_b[j])) {
                                fire = true;
                                break;
                            }
                        }
                    }
                }
                if (fire && try_orient(g, scope, a, b)) changed = true;
            }
        }
    }
}

}  // namespace

Cpdag::Cpdag(std::vector<int> nodes) : nodes_(sorted_copy(nodes)) { marks_.assign(nodes_.size() * nodes_.size(), kNone); }

bool Cpdag::contains(int v) const { return in(nodes_, v); }

std::size_t Cpdag::index(int v) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), v);
    if (it == nodes_.end() || *it != v) throw ContractError("node " + std::to_string(v) + " not in graph");
    return static_cast<std::size_t>(it - nodes_.begin());
}

void Cpdag::set(int a, int b, Mark ab, Mark ba) {
    if (a == b) throw ContractError("self-loops are not allowed");
    const std::size_t n = nodes_.size();
    marks_[index(a) * n + index(b)] = ab;
    marks_[index(b) * n + index(a)] = ba;
}

void Cpdag::add_undirected(int a, int b) { set(a, b, kUndirected, kUndirected); }
void Cpdag::orient(int from, int to) { set(from, to, kOut, kIn); }
void Cpdag::make_undirected(int a, int b) {
    if (adjacent(a, b)) set(a, b, kUndirected, kUndirected);
}
void Cpdag::remove_edge(int a, int b) { set(a, b, kNone, kNone); }

std::vector<Edge> Cpdag::directed_edges() const {
    std::vector<Edge> out;
    for (int a : nodes_)
        for (int b : nodes_)
            if (a != b && directed(a, b)) out.emplace_back(a, b);
    return out;
}

std::vector<Edge> Cpdag::undirected_edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        for (std::size_t j = i + 1; j < nodes_.size(); ++j)
            if (undirected(nodes_[i], nodes_[j])) out.emplace_back(nodes_[i], nodes_[j]);
    return out;
}

std::size_t Cpdag::edge_count() const {
    std::size_t c = 0;
    for (auto m : marks_) c += m != kNone;
    return c / 2;
}

std::vector<int> Cpdag::adjacents(int v) const {
    std::vector<int> out;
    for (int u : nodes_)
        if (u != v && adjacent(u, v)) out.push_back(u);
    return out;
}

std::vector<int> Cpdag::parents(int v) const {
    std::vector<int> out;
    for (int u : nodes_)
        if (u != v && directed(u, v)) out.push_back(u);
    return out;
}

std::vector<int> Cpdag::children(int v) const {
    std::vector<int> out;
    for (int u : nodes_)
        if (u != v && directed(v, u)) out.push_back(u);
    return out;
}

std::vector<int> Cpdag::neighbors(int v) const {
    std::vector<int> out;
    for (int u : nodes_)
        if (u != v && undirected(u, v)) out.push_back(u);
    return out;
}

bool Cpdag::has_directed_path(int from, int to) const {
    std::vector<char> seen(nodes_.size(), 0);
    std::deque<int> queue{from};
    seen[index(from)] = 1;
    while (!queue.empty()) {
        int v = queue.front();
        queue.pop_front();
        for (int c : children(v)) {
            if (c == to) return true;
            if (!seen[index(c)]) {
                seen[index(c)] = 1;
                queue.push_back(c);
            }
        }
    }
    return false;
}

const std::vector<int>* Cpdag::separating_set(int a, int b) const {
    auto it = sepsets_.find({std::min(a, b), std::max(a, b)});
    return it == sepsets_.end() ? nullptr : &it->second;
}

void Cpdag::set_separating_set(int a, int b, std::vector<int> s) {
    std::sort(s.begin(), s.end());
    sepsets_[{std::min(a, b), std::max(a, b)}] = std::move(s);
}

Cpdag complete_graph(std::vector<int> nodes) {
    if (nodes.empty()) throw ContractError("complete_graph requires at least one node");
    Cpdag g(std::move(nodes));
    const auto& ns = g.nodes();
    for (std::size_t i = 0; i < ns.size(); ++i)
        for (std::size_t j = i + 1; j < ns.size(); ++j) g.add_undirected(ns[i], ns[j]);
    g.set_resolution(-1);
    return g;
}

Cpdag increase_resolution(const Cpdag& cpdag, int n, const data::DataView& view, std::span<const int> endogenous,
                          std::span<const int> exogenous, const indtest::CiTest& test, Trace* trace) {
    if (cpdag.resolution() != n - 1) {
        throw ContractError("increase_resolution: graph resolution " + std::to_string(cpdag.resolution()) +
                            " is not " + std::to_string(n - 1));
    }
    const auto endo = sorted_copy(endogenous);
    const auto exo = sorted_copy(exogenous);
    std::vector<int> scope = endo;
    scope.insert(scope.end(), exo.begin(), exo.end());
    std::sort(scope.begin(), scope.end());
    scope.erase(std::unique(scope.begin(), scope.end()), scope.end());

    auto local_adjacency = [&](int v, int other) {
        std::vector<int> out;
        for (int u : cpdag.adjacents(v))
            if (u != other && in(scope, u)) out.push_back(u);
        return out;
    };

    struct Removal {
        int a, b;
        std::vector<int> sepset;
    };
    std::vector<Removal> removals;
    for (std::size_t i = 0; i < scope.size(); ++i) {
        for (std::size_t j = i + 1; j < scope.size(); ++j) {
            const int a = scope[i];
            const int b = scope[j];
            if (!cpdag.adjacent(a, b) || (!in(endo, a) && !in(endo, b))) continue;
            std::set<std::vector<int>> tested;
            std::optional<std::vector<int>> found;
            for (int side = 0; side < 2 && !found; ++side) {
                const auto pool = side == 0 ? local_adjacency(a, b) : local_adjacency(b, a);
                for_each_subset(pool, n, [&](const std::vector<int>& s) {
                    if (!tested.insert(s).second) return false;
                    if (trace != nullptr) {
                        ++trace->ci_tests;
                        trace->max_order = std::max(trace->max_order, n);
                    }
                    if (test(view, a, b, s).independent) {
                        found = s;
                        return true;
                    }
                    return false;
                });
            }
            if (found) removals.push_back({a, b, std::move(*found)});
        }
    }

    Cpdag out = cpdag;
    for (auto& r : removals) {
        out.remove_edge(r.a, r.b);
        out.set_separating_set(r.a, r.b, std::move(r.sepset));
    }
    orient(out, OrientScope{endo, exo, false});
    out.set_resolution(n);
    return out;
}

Cpdag increase_resolution(const Cpdag& cpdag, int n, const data::DataView& view, const indtest::CiTest& test,
                          Trace* trace) {
    return increase_resolution(cpdag, n, view, cpdag.nodes(), {}, test, trace);
}

void orient_from_scratch(Cpdag& cpdag) { orient(cpdag, OrientScope{{}, {}, true}); }

namespace {

// Connected components of `nodes` under the given adjacency predicate.
template <typename Linked>
std::vector<std::vector<int>> components(const std::vector<int>& nodes, Linked linked) {
    std::vector<std::vector<int>> out;
    std::vector<char> seen(nodes.size(), 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (seen[i]) continue;
        std::vector<int> component;
        std::deque<std::size_t> queue{i};
        seen[i] = 1;
        while (!queue.empty()) {
            const std::size_t k = queue.front();
            queue.pop_front();
            component.push_back(nodes[k]);
            for (std::size_t m = 0; m < nodes.size(); ++m) {
                if (!seen[m] && linked(nodes[k], nodes[m])) {
                    seen[m] = 1;
                    queue.push_back(m);
                }
            }
        }
        std::sort(component.begin(), component.end());
        out.push_back(std::move(component));
    }
    return out;
}

}  // namespace

Decomposition find_autonomous(const Cpdag& cpdag, std::span<const int> endogenous, std::span<const int> exogenous) {
    const auto endo = sorted_copy(endogenous);
    Decomposition d;
    d.exogenous = sorted_copy(exogenous);
    // nodes joined by undirected edges share a topological order
    std::vector<int> rest;
    for (const auto& chain : components(endo, [&](int a, int b) { return cpdag.undirected(a, b); })) {
        bool outgoing = false;
        for (int v : chain) {
            for (int c : cpdag.children(v)) outgoing = outgoing || in(endo, c);
        }
        auto& target = outgoing ? rest : d.descendant;
        target.insert(target.end(), chain.begin(), chain.end());
    }
    std::sort(d.descendant.begin(), d.descendant.end());
    std::sort(rest.begin(), rest.end());
    d.ancestors = components(rest, [&](int a, int b) { return cpdag.adjacent(a, b); });
    return d;
}

int max_indegree(const Cpdag& cpdag, std::span<const int> nodes) { return max_indegree(cpdag, nodes, cpdag.nodes()); }

int max_indegree(const Cpdag& cpdag, std::span<const int> nodes, std::span<const int> scope) {
    const auto sc = sorted_copy(scope);
    int best = 0;
    for (int v : nodes) {
        int count = 0;
        for (int u : cpdag.adjacents(v)) {
            if (in(sc, u) && !cpdag.directed(v, u)) ++count;
        }
        best = std::max(best, count);
    }
    return best;
}

nlohmann::json to_json(const Cpdag& cpdag) {
    nlohmann::json doc;
    doc["nodes"] = cpdag.nodes();
    doc["directed"] = nlohmann::json::array();
    for (auto [a, b] : cpdag.directed_edges()) doc["directed"].push_back({a, b});
    doc["undirected"] = nlohmann::json::array();
    for (auto [a, b] : cpdag.undirected_edges()) doc["undirected"].push_back({a, b});
    doc["resolution"] = cpdag.resolution();
    doc["sepsets"] = nlohmann::json::array();
    for (const auto& [edge, s] : cpdag.separating_sets()) doc["sepsets"].push_back({edge.first, edge.second, s});
    return doc;
}

namespace {

const nlohmann::json& field(const nlohmann::json& doc, const char* key, const std::string& path) {
    if (!doc.is_object() || !doc.contains(key)) throw SchemaError(path + "." + key + ": missing");
    return doc.at(key);
}

Edge edge_of(const nlohmann::json& e, const std::string& path) {
    if (!e.is_array() || e.size() < 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
        throw SchemaError(path + ": expected [int, int]");
    }
    return {e[0].get<int>(), e[1].get<int>()};
}

}  // namespace

Cpdag cpdag_from_json(const nlohmann::json& doc, const std::string& path) {
    try {
        Cpdag g(field(doc, "nodes", path).get<std::vector<int>>());
        const auto& dir = field(doc, "directed", path);
        for (std::size_t i = 0; i < dir.size(); ++i) {
            auto [a, b] = edge_of(dir[i], path + ".directed[" + std::to_string(i) + "]");
            g.orient(a, b);
        }
        const auto& und = field(doc, "undirected", path);
        for (std::size_t i = 0; i < und.size(); ++i) {
            auto [a, b] = edge_of(und[i], path + ".undirected[" + std::to_string(i) + "]");
            g.add_undirected(a, b);
        }
        const auto& res = field(doc, "resolution", path);
        if (!res.is_number_integer()) throw SchemaError(path + ".resolution: expected integer");
        g.set_resolution(res.get<int>());
        const auto& seps = field(doc, "sepsets", path);
        for (std::size_t i = 0; i < seps.size(); ++i) {
            const std::string p = path + ".sepsets[" + std::to_string(i) + "]";
            auto [a, b] = edge_of(seps[i], p);
            if (seps[i].size() != 3 || !seps[i][2].is_array()) throw SchemaError(p + ": expected [a, b, [set]]");
            g.set_separating_set(a, b, seps[i][2].get<std::vector<int>>());
        }
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    } catch (const ContractError& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

}  // namespace brainet::graph
