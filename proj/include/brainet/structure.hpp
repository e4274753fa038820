#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "brainet/bdeu.hpp"
#include "brainet/data.hpp"
#include "brainet/graph.hpp"
#include "brainet/indtest.hpp"
#include "json.hpp"

namespace brainet::structure {

struct LearnConfig {
    int s = 2;
    indtest::CiTest ci;
    double ess = 1.0;
    int max_depth = 4;  // highest condition-set order is max_depth - 1
    std::uint64_t seed = 0;
    bdeu::ParentRule leaf_rule = bdeu::ParentRule::surviving;
};

struct BranchRecord;

/// Node of the generative-graph tree. Leaves are gather layers carrying a BDeu score;
/// internal nodes hold s bootstrap branches over the same variables.
struct GgtNode {
    enum class Kind { leaf, internal };

    Kind kind = Kind::leaf;
    std::string id;
    std::vector<int> variables;
    std::vector<int> exogenous;
    int order = 0;       // condition-set order n of the call that produced this node
    double score = 0.0;  // leaf only
    std::vector<BranchRecord> branches;  // internal only

    bool is_leaf() const { return kind == Kind::leaf; }
    bool operator==(const GgtNode& other) const;
};

struct BranchRecord {
    int branch_index = 0;
    graph::Cpdag cpdag;
    std::vector<GgtNode> ancestor_children;
    GgtNode descendant_child;
    std::string container_id;

    bool operator==(const BranchRecord& other) const;
};

/// One branch index per internal node id, as chosen along a selection.
using Choices = std::map<std::string, int>;

/// Recursive structure learning from a given graph, resolution n-1 expected.
GgtNode brainet_sl(const graph::Cpdag& cpdag, const std::vector<int>& endogenous, const std::vector<int>& exogenous,
                   int n, const LearnConfig& config, const data::Dataset& data, graph::Trace* trace = nullptr);

/// Full run: complete graph over the dataset's testable columns, n = 0.
GgtNode learn_structure(const data::Dataset& data, const LearnConfig& config, graph::Trace* trace = nullptr);

std::size_t leaf_count(const GgtNode& root);
int tree_depth(const GgtNode& root);
std::vector<const GgtNode*> leaves(const GgtNode& root);

/// Number of distinct connectivity patterns over all branch selections.
std::size_t count_unique_structures(const GgtNode& root);

/// Canonical connectivity string of the sub-network picked by `choices`.
std::string canonical_form(const GgtNode& node, const Choices& choices);

/// Branch 0 at every internal node on the selected path.
Choices first_branch_choices(const GgtNode& root);

/// The CPDAG implied by one selection: each call's refined edges over its own scope,
/// deeper calls overriding shallower ones, then re-oriented from the collected
/// separating sets.
graph::Cpdag learned_cpdag(const GgtNode& root, const Choices& choices);

struct Complexity {
    std::size_t ci_tests = 0;
    std::size_t score_calls = 0;
};

Complexity measure_complexity(const graph::Trace& trace);

inline constexpr int kStructureFormatVersion = 1;

nlohmann::json serialize(const GgtNode& root);
GgtNode deserialize(const nlohmann::json& doc);

}  // namespace brainet::structure
