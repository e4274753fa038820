#pragma once

// Independent reference implementations and generators used by the unit and acceptance
// tests. Nothing here calls into the library code it checks.

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "brainet/data.hpp"
#include "brainet/graph.hpp"
#include "brainet/structure.hpp"
#include "json.hpp"

namespace oracle {

using Edge = std::pair<int, int>;
using Parents = std::vector<std::vector<int>>;

// --- datasets --------------------------------------------------------------

inline brainet::data::Dataset make_dataset(const std::vector<std::vector<int>>& columns, std::vector<int> cards = {}) {
    brainet::data::Dataset ds;
    const std::size_t c = columns.size();
    const std::size_t n = columns.empty() ? 0 : columns[0].size();
    for (std::size_t j = 0; j < c; ++j) {
        ds.column_names.push_back("X" + std::to_string(j));
        int k = cards.empty() ? 2 : cards[j];
        if (cards.empty()) {
            for (int v : columns[j]) k = std::max(k, v + 1);
        }
        ds.cardinalities.push_back(k);
    }
    ds.values.resize(n * c);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) ds.values[r * c + j] = columns[j][r];
    ds.continuous.assign(c, false);
    ds.excluded.assign(c, false);
    return ds;
}

inline std::vector<int> random_binary(std::size_t n, std::mt19937_64& rng, double p = 0.5) {
    std::bernoulli_distribution coin(p);
    std::vector<int> v(n);
    for (auto& x : v) x = coin(rng) ? 1 : 0;
    return v;
}

// --- d-separation ----------------------------------------------------------

// Moralized ancestral graph criterion.
inline bool d_separated(const Parents& parents, int x, int y, const std::vector<int>& given) {
    const int n = static_cast<int>(parents.size());
    std::vector<char> anc(n, 0);
    std::vector<int> stack{x, y};
    stack.insert(stack.end(), given.begin(), given.end());
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (anc[v]) continue;
        anc[v] = 1;
        for (int p : parents[v]) stack.push_back(p);
    }
    std::vector<std::set<int>> adj(n);
    for (int v = 0; v < n; ++v) {
        if (!anc[v]) continue;
        const auto& pa = parents[v];
        for (int p : pa) {
            adj[v].insert(p);
            adj[p].insert(v);
        }
        for (std::size_t i = 0; i < pa.size(); ++i)
            for (std::size_t j = i + 1; j < pa.size(); ++j) {
                adj[pa[i]].insert(pa[j]);
                adj[pa[j]].insert(pa[i]);
            }
    }
    std::set<int> blocked(given.begin(), given.end());
    std::vector<char> seen(n, 0);
    stack = {x};
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        if (v == y) return false;
        if (seen[v]) continue;
        seen[v] = 1;
        for (int w : adj[v])
            if (!blocked.count(w)) stack.push_back(w);
    }
    return true;
}

// --- Markov equivalence ----------------------------------------------------

struct Pattern {
    std::set<Edge> directed;
    std::set<Edge> undirected;  // (a, b) with a < b
    bool operator==(const Pattern&) const = default;
};

inline bool acyclic(int n, const std::vector<Edge>& edges) {
    std::vector<int> indeg(n, 0);
    for (auto [a, b] : edges) ++indeg[b];
    std::vector<int> q;
    for (int i = 0; i < n; ++i)
        if (!indeg[i]) q.push_back(i);
    int seen = 0;
    while (!q.empty()) {
        int v = q.back();
        q.pop_back();
        ++seen;
        for (auto [a, b] : edges)
            if (a == v && --indeg[b] == 0) q.push_back(b);
    }
    return seen == n;
}

inline std::set<std::tuple<int, int, int>> v_structures(const std::vector<Edge>& edges) {
    std::set<Edge> adj;
    for (auto [a, b] : edges) {
        adj.insert({a, b});
        adj.insert({b, a});
    }
    std::set<std::tuple<int, int, int>> out;
    for (auto [a, c] : edges)
        for (auto [b, c2] : edges)
            if (c == c2 && a < b && !adj.count({a, b})) out.insert({a, b, c});
    return out;
}

// Edges oriented identically in every DAG of the class are directed; the rest undirected.
inline Pattern mec_pattern(int n, const std::vector<Edge>& dag) {
    const auto ref = v_structures(dag);
    const std::size_t m = dag.size();
    std::map<Edge, int> count;
    int members = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
        std::vector<Edge> d;
        for (std::size_t i = 0; i < m; ++i) {
            auto [a, b] = dag[i];
            d.push_back(((mask >> i) & 1) ? Edge{b, a} : Edge{a, b});
        }
        if (!acyclic(n, d) || v_structures(d) != ref) continue;
        ++members;
        for (auto e : d) ++count[e];
    }
    Pattern p;
    for (auto [a, b] : dag) {
        if (count[{a, b}] == members) p.directed.insert({a, b});
        else if (count[{b, a}] == members) p.directed.insert({b, a});
        else p.undirected.insert({std::min(a, b), std::max(a, b)});
    }
    return p;
}

inline Pattern pattern_of(const brainet::graph::Cpdag& g) {
    Pattern p;
    for (auto e : g.directed_edges()) p.directed.insert(e);
    for (auto [a, b] : g.undirected_edges()) p.undirected.insert({std::min(a, b), std::max(a, b)});
    return p;
}

// Pattern of every DAG on `skeleton` whose v-structures are exactly `required`; empty
// when no such DAG exists.
inline std::optional<Pattern> pattern_with_v_structures(int n, const std::vector<Edge>& skeleton,
                                                        const std::set<std::tuple<int, int, int>>& required) {
    const std::size_t m = skeleton.size();
    std::map<Edge, int> count;
    int members = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
        std::vector<Edge> d;
        for (std::size_t i = 0; i < m; ++i) {
            auto [a, b] = skeleton[i];
            d.push_back(((mask >> i) & 1) ? Edge{b, a} : Edge{a, b});
        }
        if (!acyclic(n, d) || v_structures(d) != required) continue;
        ++members;
        for (auto e : d) ++count[e];
    }
    if (members == 0) return std::nullopt;
    Pattern p;
    for (auto [a, b] : skeleton) {
        if (count[{a, b}] == members) p.directed.insert({a, b});
        else if (count[{b, a}] == members) p.directed.insert({b, a});
        else p.undirected.insert({std::min(a, b), std::max(a, b)});
    }
    return p;
}

// PC-stable skeleton search: at each order every adjacent pair is tested against all
// size-n subsets of either endpoint's adjacency as it stood when the order began.
// Returns the surviving skeleton and, per removed pair, every separating subset found
// at the removal order.
template <typename Test>
std::pair<std::set<Edge>, std::map<Edge, std::vector<std::vector<int>>>> pc_skeleton(int nodes, int max_order, Test&& independent) {
    std::set<Edge> edges;
    for (int a = 0; a < nodes; ++a)
        for (int b = a + 1; b < nodes; ++b) edges.insert({a, b});
    std::map<Edge, std::vector<std::vector<int>>> seps;
    for (int order = 0; order <= max_order; ++order) {
        auto adj = [&](int v, int other) {
            std::vector<int> out;
            for (auto [a, b] : edges) {
                if (a == v && b != other) out.push_back(b);
                if (b == v && a != other) out.push_back(a);
            }
            std::sort(out.begin(), out.end());
            return out;
        };
        std::set<Edge> removed;
        for (auto [a, b] : edges) {
            std::set<std::vector<int>> found;
            for (const auto& pool : {adj(a, b), adj(b, a)}) {
                if (static_cast<int>(pool.size()) < order) continue;
                for (std::size_t mask = 0; mask < (std::size_t{1} << pool.size()); ++mask) {
                    if (std::popcount(mask) != order) continue;
                    std::vector<int> s;
                    for (std::size_t i = 0; i < pool.size(); ++i)
                        if ((mask >> i) & 1) s.push_back(pool[i]);
                    if (independent(a, b, s)) found.insert(s);
                }
            }
            if (!found.empty()) {
                removed.insert({a, b});
                seps[{a, b}] = {found.begin(), found.end()};
            }
        }
        for (auto e : removed) edges.erase(e);
    }
    return {edges, seps};
}

inline std::vector<Edge> dag_edges(const Parents& parents) {
    std::vector<Edge> out;
    for (int v = 0; v < static_cast<int>(parents.size()); ++v)
        for (int p : parents[v]) out.push_back({p, v});
    return out;
}

// Skeleton of the moral graph: true edges plus edges between co-parents.
inline std::set<Edge> moral_closure(const Parents& parents) {
    std::set<Edge> out;
    for (int v = 0; v < static_cast<int>(parents.size()); ++v) {
        const auto& pa = parents[v];
        for (int p : pa) out.insert({std::min(p, v), std::max(p, v)});
        for (std::size_t i = 0; i < pa.size(); ++i)
            for (std::size_t j = i + 1; j < pa.size(); ++j) out.insert({std::min(pa[i], pa[j]), std::max(pa[i], pa[j])});
    }
    return out;
}

// --- marginal likelihood ---------------------------------------------------

// Dirichlet-multinomial evidence computed as a product of sequential predictive
// probabilities, one row at a time.
inline double sequential_bdeu(const brainet::data::Dataset& ds, int child, const std::vector<int>& parents, double ess) {
    int q = 1;
    for (int p : parents) q *= ds.cardinalities[p];
    const int r = ds.cardinalities[child];
    const double a_jk = ess / (q * r), a_j = ess / q;
    std::map<int, std::vector<int>> counts;
    double log_ml = 0.0;
    for (std::size_t row = 0; row < ds.rows(); ++row) {
        int j = 0;
        for (int p : parents) j = j * ds.cardinalities[p] + ds.value(row, p);
        auto& c = counts[j];
        if (c.empty()) c.assign(r, 0);
        const int k = ds.value(row, child);
        const int nj = std::accumulate(c.begin(), c.end(), 0);
        log_ml += std::log((a_jk + c[k]) / (a_j + nj));
        ++c[k];
    }
    return log_ml;
}

// --- ranking metrics by exhaustive threshold enumeration ---------------------

struct Operating {
    double tpr, fpr, precision;
    bool any_accepted;
};

// One operating point per candidate threshold "accept score >= t", plus reject-all.
inline std::vector<Operating> operating_points(const std::vector<double>& s, const std::vector<bool>& pos) {
    std::vector<double> th(s.begin(), s.end());
    th.push_back(std::numeric_limits<double>::infinity());
    std::vector<Operating> out;
    double P = 0, N = 0;
    for (bool b : pos) (b ? P : N) += 1;
    for (double t : th) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) (pos[i] ? tp : fp) += 1;
        out.push_back({tp / P, fp / N, tp + fp > 0 ? tp / (tp + fp) : 1.0, tp + fp > 0});
    }
    return out;
}

inline double brute_auc(const std::vector<double>& s, const std::vector<bool>& pos) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (pos[i] && !pos[j]) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return wins / pairs;
}

// Average precision: precision at each distinct threshold weighted by its recall step.
inline double brute_average_precision(const std::vector<double>& s, const std::vector<bool>& pos) {
    std::set<double, std::greater<>> distinct(s.begin(), s.end());
    double P = 0;
    for (bool b : pos) P += b;
    double ap = 0, prev = 0;
    for (double t : distinct) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (s[i] >= t) (pos[i] ? tp : fp) += 1;
        ap += (tp / P - prev) * tp / (tp + fp);
        prev = tp / P;
    }
    return ap;
}

inline double brute_fpr_at_tpr(const std::vector<double>& s, const std::vector<bool>& pos, double target) {
    double best = 1.0;
    for (const auto& o : operating_points(s, pos))
        if (o.tpr >= target - 1e-12) best = std::min(best, o.fpr);
    return best;
}

inline double brute_detection_error(const std::vector<double>& s, const std::vector<bool>& pos) {
    double best = 1.0;
    for (const auto& o : operating_points(s, pos)) best = std::min(best, 0.5 * (1 - o.tpr) + 0.5 * o.fpr);
    return best;
}

// --- generative-graph trees --------------------------------------------------

struct TreeShape {
    int max_depth = 3;
    int max_branches = 3;
    int max_ancestors = 2;
    double leaf_bias = 0.3;  // chance of stopping early at each internal site
};

// Random tree obeying the learner's id and field-of-view conventions: every branch
// partitions its node's variables into ancestor sets and one descendant set.
inline brainet::structure::GgtNode random_tree(std::vector<int> vars, std::mt19937_64& rng, const TreeShape& shape,
                                               const std::string& id = "r", int depth = 0) {
    using brainet::structure::GgtNode;
    GgtNode node;
    node.id = id;
    node.variables = vars;
    node.order = depth;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (depth >= shape.max_depth || vars.size() < 2 || (depth > 0 && u(rng) < shape.leaf_bias)) {
        node.kind = GgtNode::Kind::leaf;
        node.score = -1.0 - 10.0 * u(rng);
        return node;
    }
    node.kind = GgtNode::Kind::internal;
    const int s = 1 + static_cast<int>(rng() % shape.max_branches);
    for (int t = 0; t < s; ++t) {
        brainet::structure::BranchRecord br;
        br.branch_index = t;
        br.container_id = id + "/" + std::to_string(t);
        br.cpdag = brainet::graph::Cpdag(vars);
        auto shuffled = vars;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const int k = static_cast<int>(std::min<std::size_t>(rng() % (shape.max_ancestors + 1), vars.size() - 1));
        // cut points: k ancestor sets, descendant takes the rest (at least one variable)
        std::vector<std::vector<int>> parts(k + 1);
        for (std::size_t i = 0; i < shuffled.size(); ++i) {
            const std::size_t slot = i < static_cast<std::size_t>(k) ? i : rng() % (k + 1);
            parts[slot].push_back(shuffled[i]);
        }
        if (parts[k].empty()) {
            for (int i = 0; i < k; ++i)
                if (parts[i].size() > 1) {
                    parts[k].push_back(parts[i].back());
                    parts[i].pop_back();
                    break;
                }
        }
        if (parts[k].empty()) {  // every ancestor holds one variable
            parts[k].push_back(parts[k - 1].back());
            parts.erase(parts.begin() + (k - 1));
        }
        for (auto& p : parts) std::sort(p.begin(), p.end());
        const std::string pre = id + "." + std::to_string(t);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i)
            br.ancestor_children.push_back(random_tree(parts[i], rng, shape, pre + ".a" + std::to_string(i), depth + 1));
        br.descendant_child = random_tree(parts.back(), rng, shape, pre + ".d", depth + 1);
        node.branches.push_back(std::move(br));
    }
    return node;
}

inline brainet::structure::GgtNode leaf(std::string id, std::vector<int> vars, double score) {
    brainet::structure::GgtNode n;
    n.kind = brainet::structure::GgtNode::Kind::leaf;
    n.id = std::move(id);
    n.variables = std::move(vars);
    n.score = score;
    return n;
}

inline brainet::structure::BranchRecord branch(const std::string& node_id, int t, std::vector<brainet::structure::GgtNode> ancestors,
                                               brainet::structure::GgtNode descendant) {
    brainet::structure::BranchRecord br;
    br.branch_index = t;
    br.container_id = node_id + "/" + std::to_string(t);
    br.ancestor_children = std::move(ancestors);
    br.descendant_child = std::move(descendant);
    std::vector<int> vars = br.descendant_child.variables;
    for (const auto& a : br.ancestor_children) vars.insert(vars.end(), a.variables.begin(), a.variables.end());
    std::sort(vars.begin(), vars.end());
    br.cpdag = brainet::graph::Cpdag(vars);
    return br;
}

inline brainet::structure::GgtNode internal(std::string id, std::vector<brainet::structure::BranchRecord> branches) {
    brainet::structure::GgtNode n;
    n.kind = brainet::structure::GgtNode::Kind::internal;
    n.id = std::move(id);
    n.variables = branches.front().cpdag.nodes();
    n.branches = std::move(branches);
    return n;
}

// --- exhaustive selection distribution ---------------------------------------

struct Outcome {
    brainet::structure::Choices choices;
    double score = 0.0;
    double prob = 1.0;
};

// Exact law of the leaves-to-root draw: each branch's children are drawn independently,
// the branch's aggregate is the sum of its children's totals, and the site picks branch
// t with probability exp(agg_t / gamma) / sum exp(agg / gamma). Only choices on the
// selected path are kept.
inline std::vector<Outcome> selection_law(const brainet::structure::GgtNode& node, double gamma) {
    if (node.is_leaf()) return {Outcome{{}, node.score, 1.0}};
    // outcome distribution of each branch's children, combined
    std::vector<std::vector<Outcome>> per_branch;
    for (const auto& br : node.branches) {
        std::vector<Outcome> acc{Outcome{}};
        std::vector<const brainet::structure::GgtNode*> kids;
        for (const auto& a : br.ancestor_children) kids.push_back(&a);
        kids.push_back(&br.descendant_child);
        for (const auto* k : kids) {
            std::vector<Outcome> next;
            for (const auto& a : acc)
                for (const auto& b : selection_law(*k, gamma)) {
                    Outcome o = a;
                    o.choices.insert(b.choices.begin(), b.choices.end());
                    o.score += b.score;
                    o.prob *= b.prob;
                    next.push_back(std::move(o));
                }
            acc = std::move(next);
        }
        per_branch.push_back(std::move(acc));
    }
    std::map<std::pair<brainet::structure::Choices, double>, double> merged;
    std::vector<std::size_t> idx(per_branch.size(), 0);
    while (true) {
        double joint = 1.0, z = 0.0;
        for (std::size_t t = 0; t < per_branch.size(); ++t) {
            joint *= per_branch[t][idx[t]].prob;
            z += std::exp(per_branch[t][idx[t]].score / gamma);
        }
        for (std::size_t t = 0; t < per_branch.size(); ++t) {
            const auto& o = per_branch[t][idx[t]];
            auto ch = o.choices;
            ch[node.id] = static_cast<int>(t);
            merged[{ch, o.score}] += joint * std::exp(o.score / gamma) / z;
        }
        std::size_t d = 0;
        while (d < idx.size() && ++idx[d] == per_branch[d].size()) idx[d++] = 0;
        if (d == idx.size()) break;
    }
    std::vector<Outcome> out;
    for (const auto& [key, p] : merged) out.push_back({key.first, key.second, p});
    return out;
}

// --- straight-line forward from a serialized network -------------------------

using Rows = std::vector<std::vector<double>>;

// Eval-mode forward pass recomputed with scalar loops from the checkpoint document.
class StraightLine {
public:
    explicit StraightLine(const nlohmann::json& doc) : doc_(doc) {}

    Rows forward(const brainet::structure::Choices& choices, const Rows& x) {
        choices_ = choices;
        x_ = x;
        memo_.clear();
        Rows in = concat(doc_["head"]["incoming"]);
        const auto& hd = doc_["head"];
        Rows out = affine(in, hd["weight"], hd["bias"]);
        if (hd["kind"] == "softmax") {
            for (auto& row : out) {
                double m = *std::max_element(row.begin(), row.end()), z = 0;
                for (double v : row) z += std::exp(v - m);
                for (auto& v : row) v = v - m - std::log(z);
            }
        }
        return out;
    }

private:
    Rows affine(const Rows& in, const nlohmann::json& w, const nlohmann::json& b) const {
        const int rows = w["rows"], cols = w["cols"];
        Rows out(in.size(), std::vector<double>(rows));
        for (std::size_t n = 0; n < in.size(); ++n)
            for (int i = 0; i < rows; ++i) {
                double acc = b[i].get<double>();
                for (int j = 0; j < cols; ++j) acc += w["data"][i * cols + j].get<double>() * in[n][j];
                out[n][i] = acc;
            }
        return out;
    }

    Rows concat(const nlohmann::json& sources) {
        Rows out(x_.size());
        for (const auto& s : sources) {
            const Rows part = source(s.get<std::string>());
            for (std::size_t n = 0; n < out.size(); ++n) out[n].insert(out[n].end(), part[n].begin(), part[n].end());
        }
        return out;
    }

    Rows source(const std::string& src) {
        if (auto it = memo_.find(src); it != memo_.end()) return it->second;
        const auto colon = src.find(':');
        const std::string kind = src.substr(0, colon), key = src.substr(colon + 1);
        Rows out(x_.size());
        if (kind == "gather") {
            for (std::size_t n = 0; n < x_.size(); ++n)
                for (int c : doc_["gathers"][key]) out[n].push_back(x_[n][c]);
        } else {
            const auto& g = doc_["groups"][key];
            const std::string cid = g["containers"][choices_.at(key)];
            for (const auto& lid : doc_["containers"][cid]["layers"]) {
                const Rows part = layer(doc_["layers"][lid.get<std::string>()]);
                for (std::size_t n = 0; n < out.size(); ++n) out[n].insert(out[n].end(), part[n].begin(), part[n].end());
            }
        }
        memo_[src] = out;
        return out;
    }

    Rows layer(const nlohmann::json& L) {
        Rows z = affine(concat(L["incoming"]), L["weight"], L["bias"]);
        for (auto& row : z)
            for (std::size_t i = 0; i < row.size(); ++i) {
                const double xh = (row[i] - L["running_mean"][i].get<double>()) /
                                  std::sqrt(L["running_var"][i].get<double>() + 1e-5);
                row[i] = std::max(0.0, L["gamma"][i].get<double>() * xh + L["beta"][i].get<double>());
            }
        return z;
    }

    nlohmann::json doc_;
    brainet::structure::Choices choices_;
    Rows x_;
    std::map<std::string, Rows> memo_;
};

// Every full choice map over the sites reachable under it.
inline std::vector<brainet::structure::Choices> all_selections(const brainet::structure::GgtNode& node) {
    if (node.is_leaf()) return {{}};
    std::vector<brainet::structure::Choices> out;
    for (const auto& br : node.branches) {
        std::vector<brainet::structure::Choices> acc{{}};
        std::vector<const brainet::structure::GgtNode*> kids;
        for (const auto& a : br.ancestor_children) kids.push_back(&a);
        kids.push_back(&br.descendant_child);
        for (const auto* k : kids) {
            std::vector<brainet::structure::Choices> next;
            for (const auto& a : acc)
                for (const auto& b : all_selections(*k)) {
                    auto c = a;
                    c.insert(b.begin(), b.end());
                    next.push_back(std::move(c));
                }
            acc = std::move(next);
        }
        for (auto& c : acc) {
            c[node.id] = br.branch_index;
            out.push_back(std::move(c));
        }
    }
    return out;
}

}  // namespace oracle
