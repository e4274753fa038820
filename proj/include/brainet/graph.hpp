#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "brainet/data.hpp"
#include "brainet/indtest.hpp"
#include "json.hpp"

namespace brainet::graph {

using Edge = std::pair<int, int>;

/// Partially directed acyclic graph over column ids, with the separating sets found
/// so far. Value type: refinement operations return a new graph.
class Cpdag {
public:
    Cpdag() = default;
    explicit Cpdag(std::vector<int> nodes);

    const std::vector<int>& nodes() const { return nodes_; }
    bool contains(int v) const;
    int resolution() const { return resolution_; }
    void set_resolution(int r) { resolution_ = r; }

    bool adjacent(int a, int b) const { return mark(a, b) != kNone; }
    bool directed(int from, int to) const { return mark(from, to) == kOut; }
    bool undirected(int a, int b) const { return mark(a, b) == kUndirected; }

    /// Sorted (from, to) pairs.
    std::vector<Edge> directed_edges() const;
    /// Sorted (a, b) pairs with a < b.
    std::vector<Edge> undirected_edges() const;
    std::size_t edge_count() const;

    std::vector<int> adjacents(int v) const;
    std::vector<int> parents(int v) const;      // directed into v
    std::vector<int> children(int v) const;     // directed out of v
    std::vector<int> neighbors(int v) const;    // undirected

    void add_undirected(int a, int b);
    void orient(int from, int to);
    void make_undirected(int a, int b);
    void remove_edge(int a, int b);

    /// True when a directed path from -> ... -> to exists.
    bool has_directed_path(int from, int to) const;

    const std::map<Edge, std::vector<int>>& separating_sets() const { return sepsets_; }
    const std::vector<int>* separating_set(int a, int b) const;
    void set_separating_set(int a, int b, std::vector<int> s);

    bool operator==(const Cpdag&) const = default;

private:
    enum Mark : std::uint8_t { kNone = 0, kUndirected = 1, kOut = 2, kIn = 3 };
    std::size_t index(int v) const;
    Mark mark(int a, int b) const { return static_cast<Mark>(marks_[index(a) * nodes_.size() + index(b)]); }
    void set(int a, int b, Mark ab, Mark ba);

    std::vector<int> nodes_;
    std::vector<std::uint8_t> marks_;
    std::map<Edge, std::vector<int>> sepsets_;
    int resolution_ = -1;
};

struct Decomposition {
    std::vector<int> descendant;
    std::vector<std::vector<int>> ancestors;
    std::vector<int> exogenous;
};

/// Bookkeeping shared by one structure-learning run.
struct Trace {
    bool enabled = false;
    std::size_t ci_tests = 0;
    std::size_t score_calls = 0;
    int max_order = -1;  // largest condition-set size tested
};

Cpdag complete_graph(std::vector<int> nodes);

/// Tests every edge with an endogenous endpoint (other endpoint endogenous or exogenous)
/// for independence given size-n subsets of the endpoints' adjacencies, removes the
/// independent ones as a batch, then re-orients: v-structures first, then Meek rules to
/// a fixpoint. Edges between two exogenous nodes are left as they are; directed edges
/// touching an exogenous node are never reversed.
Cpdag increase_resolution(const Cpdag& cpdag, int n, const data::DataView& view, std::span<const int> endogenous,
                          std::span<const int> exogenous, const indtest::CiTest& test, Trace* trace = nullptr);

/// Convenience overload: every node endogenous, no exogenous context.
Cpdag increase_resolution(const Cpdag& cpdag, int n, const data::DataView& view, const indtest::CiTest& test,
                          Trace* trace = nullptr);

/// Descendant set = endogenous chain components (maximal undirected-connected groups)
/// without outgoing directed edges to endogenous nodes; ancestor sets = connected
/// components of the remaining endogenous nodes.
Decomposition find_autonomous(const Cpdag& cpdag, std::span<const int> endogenous, std::span<const int> exogenous);

/// Max over `nodes` of (incoming directed + incident undirected) edges.
int max_indegree(const Cpdag& cpdag, std::span<const int> nodes);
/// Same, counting only edges whose other endpoint lies in `scope`.
int max_indegree(const Cpdag& cpdag, std::span<const int> nodes, std::span<const int> scope);

/// Re-derives every orientation from the skeleton and stored separating sets.
void orient_from_scratch(Cpdag& cpdag);

nlohmann::json to_json(const Cpdag& cpdag);
Cpdag cpdag_from_json(const nlohmann::json& doc, const std::string& path = "cpdag");

}  // namespace brainet::graph
