#pragma once

#include <span>
#include <vector>

#include "brainet/data.hpp"
#include "brainet/graph.hpp"

namespace brainet::bdeu {

struct FamilyScore {
    int child = 0;
    std::vector<int> parents;
    double log_score = 0.0;
    double ess = 1.0;
};

/// BDeu log marginal likelihood of one family:
///   sum_j [ lnG(a_j) - lnG(a_j + N_j) + sum_k ( lnG(a_jk + N_jk) - lnG(a_jk) ) ]
/// with a_j = ess / q and a_jk = ess / (q r).
FamilyScore bdeu_family(const data::DataView& view, int child, std::span<const int> parents, double ess);

enum class ParentRule {
    surviving,   // parents read from the graph
    parentless,  // every variable scored alone
};

/// Sum of family scores over `variables`. With `surviving`, a variable's parents are its
/// directed parents inside `variables` or `context`, plus undirected neighbours inside
/// `variables` with a smaller column id. A null graph means parentless families.
double score_variable_set(const data::DataView& view, std::span<const int> variables, const graph::Cpdag* graph,
                          double ess, ParentRule rule = ParentRule::surviving, std::span<const int> context = {});

}  // namespace brainet::bdeu
