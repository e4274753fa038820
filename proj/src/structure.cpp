#include "brainet/structure.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <unordered_set>

namespace brainet::structure {

bool GgtNode::operator==(const GgtNode& other) const = default;
bool BranchRecord::operator==(const BranchRecord& other) const = default;

namespace {

std::vector<int> merged(std::vector<int> a, const std::vector<int>& b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
    return a;
}

struct Learner {
    const LearnConfig& config;
    const data::Dataset& data;
    graph::Trace* trace;

    GgtNode leaf(const graph::Cpdag& g, const std::vector<int>& endo, const std::vector<int>& exo, int n,
                 const std::string& id) const {
        GgtNode node;
        node.kind = GgtNode::Kind::leaf;
        node.id = id;
        node.variables = endo;
        node.exogenous = exo;
        node.order = n;
        node.score = bdeu::score_variable_set(data::DataView(data), endo, &g, config.ess, config.leaf_rule, exo);
        if (trace != nullptr) ++trace->score_calls;
        return node;
    }

    // `stagnant` counts consecutive orders at which nothing was removed or decomposed.
    GgtNode learn(const graph::Cpdag& g, const std::vector<int>& endo, const std::vector<int>& exo, int n,
                  int stagnant, const std::string& id) const {
        if (endo.empty()) throw ContractError("brainet_sl: empty endogenous set");
        const auto scope = merged(endo, exo);
        if (graph::max_indegree(g, endo, scope) < n + 1 || n >= config.max_depth || stagnant >= 2) {
            return leaf(g, endo, exo, n, id);
        }
        GgtNode node;
        node.kind = GgtNode::Kind::internal;
        node.id = id;
        node.variables = endo;
        node.exogenous = exo;
        node.order = n;
        for (int t = 0; t < config.s; ++t) {
            const std::string tag = id + "/" + std::to_string(t);
            const auto sample = data::bootstrap(data, derive_seed(config.seed, tag));
            BranchRecord br;
            br.branch_index = t;
            br.container_id = tag;
            br.cpdag = graph::increase_resolution(g, n, sample.view(data), endo, exo, config.ci, trace);
            const auto dec = graph::find_autonomous(br.cpdag, endo, exo);
            const bool unchanged = dec.ancestors.empty() && br.cpdag.edge_count() == g.edge_count();
            std::vector<int> desc_exo = exo;
            for (std::size_t i = 0; i < dec.ancestors.size(); ++i) {
                br.ancestor_children.push_back(
                    learn(br.cpdag, dec.ancestors[i], exo, n + 1, 0, id + "." + std::to_string(t) + ".a" + std::to_string(i)));
                desc_exo = merged(desc_exo, dec.ancestors[i]);
            }
            br.descendant_child =
                learn(br.cpdag, dec.descendant, desc_exo, n + 1, unchanged ? stagnant + 1 : 0, id + "." + std::to_string(t) + ".d");
            node.branches.push_back(std::move(br));
        }
        return node;
    }
};

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2))); }

std::uint64_t leaf_hash(const GgtNode& leaf) {
    std::uint64_t h = 0x1eafULL;
    for (int v : leaf.variables) h = mix(h, static_cast<std::uint64_t>(v));
    return h;
}

std::uint64_t branch_hash(const std::vector<std::uint64_t>& child_hashes) {
    std::uint64_t h = 0xb4a2cULL;
    for (auto c : child_hashes) h = mix(h, c);
    return h;
}

// Structural identity of a subtree: same partitions and same sets of branch shapes.
std::uint64_t shape_hash(const GgtNode& node, std::map<const GgtNode*, std::uint64_t>& memo) {
    if (auto it = memo.find(&node); it != memo.end()) return it->second;
    std::uint64_t h;
    if (node.is_leaf()) {
        h = leaf_hash(node);
    } else {
        std::set<std::uint64_t> distinct;
        for (const auto& br : node.branches) {
            std::vector<std::uint64_t> kids;
            for (const auto& a : br.ancestor_children) kids.push_back(shape_hash(a, memo));
            kids.push_back(shape_hash(br.descendant_child, memo));
            distinct.insert(branch_hash(kids));
        }
        h = 0x1a7eULL;
        for (auto d : distinct) h = mix(h, d);
    }
    memo[&node] = h;
    return h;
}

double selection_bound(const GgtNode& node) {
    if (node.is_leaf()) return 1.0;
    double total = 0.0;
    for (const auto& br : node.branches) {
        double prod = selection_bound(br.descendant_child);
        for (const auto& a : br.ancestor_children) prod *= selection_bound(a);
        total += prod;
    }
    return total;
}

std::unordered_set<std::uint64_t> exact_forms(const GgtNode& node) {
    if (node.is_leaf()) return {leaf_hash(node)};
    std::unordered_set<std::uint64_t> out;
    for (const auto& br : node.branches) {
        std::vector<std::unordered_set<std::uint64_t>> kid_forms;
        for (const auto& a : br.ancestor_children) kid_forms.push_back(exact_forms(a));
        kid_forms.push_back(exact_forms(br.descendant_child));
        std::vector<std::vector<std::uint64_t>> lists;
        for (auto& f : kid_forms) {
            std::vector<std::uint64_t> v(f.begin(), f.end());
            std::sort(v.begin(), v.end());
            lists.push_back(std::move(v));
        }
        std::vector<std::size_t> idx(lists.size(), 0);
        while (true) {
            std::vector<std::uint64_t> pick;
            for (std::size_t i = 0; i < lists.size(); ++i) pick.push_back(lists[i][idx[i]]);
            out.insert(branch_hash(pick));
            std::size_t i = 0;
            while (i < lists.size() && ++idx[i] == lists[i].size()) idx[i++] = 0;
            if (i == lists.size()) break;
        }
    }
    return out;
}

double dedup_count(const GgtNode& node, std::map<const GgtNode*, std::uint64_t>& memo) {
    if (node.is_leaf()) return 1.0;
    std::set<std::uint64_t> seen;
    double total = 0.0;
    for (const auto& br : node.branches) {
        std::vector<std::uint64_t> kids;
        for (const auto& a : br.ancestor_children) kids.push_back(shape_hash(a, memo));
        kids.push_back(shape_hash(br.descendant_child, memo));
        if (!seen.insert(branch_hash(kids)).second) continue;
        double prod = dedup_count(br.descendant_child, memo);
        for (const auto& a : br.ancestor_children) prod *= dedup_count(a, memo);
        total += prod;
    }
    return total;
}

void collect_leaves(const GgtNode& node, std::vector<const GgtNode*>& out) {
    if (node.is_leaf()) {
        out.push_back(&node);
        return;
    }
    for (const auto& br : node.branches) {
        for (const auto& a : br.ancestor_children) collect_leaves(a, out);
        collect_leaves(br.descendant_child, out);
    }
}

void first_choices(const GgtNode& node, Choices& out) {
    if (node.is_leaf()) return;
    out[node.id] = 0;
    const auto& br = node.branches.front();
    for (const auto& a : br.ancestor_children) first_choices(a, out);
    first_choices(br.descendant_child, out);
}

int choice_at(const GgtNode& node, const Choices& choices) {
    auto it = choices.find(node.id);
    if (it == choices.end()) throw ContractError("selection has no choice for node " + node.id);
    if (it->second < 0 || static_cast<std::size_t>(it->second) >= node.branches.size()) {
        throw ContractError("selection picks a missing branch at node " + node.id);
    }
    return it->second;
}

void compose(const GgtNode& node, const Choices& choices, graph::Cpdag& acc) {
    if (node.is_leaf()) return;
    const auto& br = node.branches[static_cast<std::size_t>(choice_at(node, choices))];
    const auto scope = merged(node.variables, node.exogenous);
    auto owned = [&](int v) { return std::binary_search(node.variables.begin(), node.variables.end(), v); };
    for (std::size_t i = 0; i < scope.size(); ++i) {
        for (std::size_t j = i + 1; j < scope.size(); ++j) {
            const int a = scope[i];
            const int b = scope[j];
            if (!owned(a) && !owned(b)) continue;
            if (br.cpdag.adjacent(a, b)) {
                acc.add_undirected(a, b);
            } else {
                acc.remove_edge(a, b);
                if (const auto* sep = br.cpdag.separating_set(a, b)) acc.set_separating_set(a, b, *sep);
            }
        }
    }
    for (const auto& a : br.ancestor_children) compose(a, choices, acc);
    compose(br.descendant_child, choices, acc);
}

// --- serialization -------------------------------------------------------

nlohmann::json node_to_json(const GgtNode& node) {
    nlohmann::json j;
    j["kind"] = node.is_leaf() ? "leaf" : "internal";
    j["id"] = node.id;
    j["vars"] = node.variables;
    j["exo"] = node.exogenous;
    j["order"] = node.order;
    if (node.is_leaf()) {
        j["score"] = node.score;
    } else {
        j["branches"] = nlohmann::json::array();
        for (const auto& br : node.branches) {
            nlohmann::json b;
            b["t"] = br.branch_index;
            b["container"] = br.container_id;
            b["cpdag"] = graph::to_json(br.cpdag);
            b["ancestors"] = nlohmann::json::array();
            for (const auto& a : br.ancestor_children) b["ancestors"].push_back(node_to_json(a));
            b["descendant"] = node_to_json(br.descendant_child);
            j["branches"].push_back(std::move(b));
        }
    }
    return j;
}

const nlohmann::json& need(const nlohmann::json& j, const char* key, const std::string& path) {
    if (!j.is_object()) throw SchemaError(path + ": expected object");
    if (!j.contains(key)) throw SchemaError(path + "." + key + ": missing");
    return j.at(key);
}

std::vector<int> int_list(const nlohmann::json& j, const std::string& path) {
    if (!j.is_array()) throw SchemaError(path + ": expected array of integers");
    std::vector<int> out;
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw SchemaError(path + ": expected array of integers");
        out.push_back(v.get<int>());
    }
    return out;
}

GgtNode node_from_json(const nlohmann::json& j, const std::string& path) {
    GgtNode node;
    const auto& kind = need(j, "kind", path);
    if (!kind.is_string() || (kind != "leaf" && kind != "internal")) throw SchemaError(path + ".kind: expected leaf|internal");
    node.kind = kind == "leaf" ? GgtNode::Kind::leaf : GgtNode::Kind::internal;
    const auto& id = need(j, "id", path);
    if (!id.is_string()) throw SchemaError(path + ".id: expected string");
    node.id = id.get<std::string>();
    node.variables = int_list(need(j, "vars", path), path + ".vars");
    node.exogenous = int_list(need(j, "exo", path), path + ".exo");
    const auto& order = need(j, "order", path);
    if (!order.is_number_integer()) throw SchemaError(path + ".order: expected integer");
    node.order = order.get<int>();
    if (node.is_leaf()) {
        const auto& score = need(j, "score", path);
        if (!score.is_number() || !std::isfinite(score.get<double>())) throw SchemaError(path + ".score: expected finite number");
        node.score = score.get<double>();
        return node;
    }
    const auto& branches = need(j, "branches", path);
    if (!branches.is_array() || branches.empty()) throw SchemaError(path + ".branches: expected non-empty array");
    for (std::size_t t = 0; t < branches.size(); ++t) {
        const std::string bp = path + ".branches[" + std::to_string(t) + "]";
        const auto& b = branches[t];
        BranchRecord br;
        const auto& ti = need(b, "t", bp);
        if (!ti.is_number_integer()) throw SchemaError(bp + ".t: expected integer");
        br.branch_index = ti.get<int>();
        const auto& cont = need(b, "container", bp);
        if (!cont.is_string()) throw SchemaError(bp + ".container: expected string");
        br.container_id = cont.get<std::string>();
        br.cpdag = graph::cpdag_from_json(need(b, "cpdag", bp), bp + ".cpdag");
        const auto& anc = need(b, "ancestors", bp);
        if (!anc.is_array()) throw SchemaError(bp + ".ancestors: expected array");
        for (std::size_t i = 0; i < anc.size(); ++i) {
            br.ancestor_children.push_back(node_from_json(anc[i], bp + ".ancestors[" + std::to_string(i) + "]"));
        }
        br.descendant_child = node_from_json(need(b, "descendant", bp), bp + ".descendant");
        node.branches.push_back(std::move(br));
    }
    return node;
}

}  // namespace

GgtNode brainet_sl(const graph::Cpdag& cpdag, const std::vector<int>& endogenous, const std::vector<int>& exogenous,
                   int n, const LearnConfig& config, const data::Dataset& data, graph::Trace* trace) {
    if (config.s < 1) throw ContractError("s must be at least 1");
    if (cpdag.resolution() != n - 1) throw ContractError("brainet_sl: graph resolution must be n - 1");
    Learner learner{config, data, trace};
    auto endo = merged(endogenous, {});
    auto exo = merged(exogenous, {});
    return learner.learn(cpdag, endo, exo, n, 0, "r");
}

GgtNode learn_structure(const data::Dataset& data, const LearnConfig& config, graph::Trace* trace) {
    const auto nodes = data.testable_columns();
    if (nodes.empty()) throw ContractError("dataset has no testable columns");
    return brainet_sl(graph::complete_graph(nodes), nodes, {}, 0, config, data, trace);
}

std::size_t leaf_count(const GgtNode& root) { return leaves(root).size(); }

std::vector<const GgtNode*> leaves(const GgtNode& root) {
    std::vector<const GgtNode*> out;
    collect_leaves(root, out);
    return out;
}

int tree_depth(const GgtNode& root) {
    if (root.is_leaf()) return 0;
    int best = 0;
    for (const auto& br : root.branches) {
        best = std::max(best, tree_depth(br.descendant_child));
        for (const auto& a : br.ancestor_children) best = std::max(best, tree_depth(a));
    }
    return best + 1;
}

std::size_t count_unique_structures(const GgtNode& root) {
    if (selection_bound(root) <= 1e6) return exact_forms(root).size();
    std::map<const GgtNode*, std::uint64_t> memo;
    return static_cast<std::size_t>(dedup_count(root, memo));
}

std::string canonical_form(const GgtNode& node, const Choices& choices) {
    if (node.is_leaf()) {
        std::string s = "L[";
        for (std::size_t i = 0; i < node.variables.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(node.variables[i]);
        }
        return s + "]";
    }
    const auto& br = node.branches[static_cast<std::size_t>(choice_at(node, choices))];
    std::string s = "N(";
    for (const auto& a : br.ancestor_children) s += canonical_form(a, choices) + ";";
    return s + "|" + canonical_form(br.descendant_child, choices) + ")";
}

Choices first_branch_choices(const GgtNode& root) {
    Choices out;
    first_choices(root, out);
    return out;
}

graph::Cpdag learned_cpdag(const GgtNode& root, const Choices& choices) {
    auto nodes = merged(root.variables, root.exogenous);
    graph::Cpdag acc = graph::complete_graph(nodes);
    compose(root, choices, acc);
    graph::orient_from_scratch(acc);
    return acc;
}

Complexity measure_complexity(const graph::Trace& trace) {
    if (!trace.enabled) throw ContractError("measure_complexity requires a run with tracing enabled");
    return {trace.ci_tests, trace.score_calls};
}

nlohmann::json serialize(const GgtNode& root) {
    return {{"format", "brainet-ggt"}, {"version", kStructureFormatVersion}, {"root", node_to_json(root)}};
}

GgtNode deserialize(const nlohmann::json& doc) {
    try {
        const auto& fmt = need(doc, "format", "$");
        if (fmt != "brainet-ggt") throw SchemaError("$.format: expected \"brainet-ggt\"");
        const auto& ver = need(doc, "version", "$");
        if (!ver.is_number_integer() || ver.get<int>() != kStructureFormatVersion) {
            throw SchemaError("$.version: unsupported structure format version");
        }
        return node_from_json(need(doc, "root", "$"), "$.root");
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("structure document: ") + e.what());
    }
}

}  // namespace brainet::structure
