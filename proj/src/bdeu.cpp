#include "brainet/bdeu.hpp"

#include <algorithm>
#include <cmath>

namespace brainet::bdeu {

namespace {

double family_from_counts(const std::vector<std::uint32_t>& counts, std::size_t q, int r, double ess) {
    const double a_j = ess / static_cast<double>(q);
    const double a_jk = a_j / r;
    const double lg_a_j = std::lgamma(a_j);
    const double lg_a_jk = std::lgamma(a_jk);
    double score = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
        double n_j = 0;
        double inner = 0.0;
        for (int k = 0; k < r; ++k) {
            const double n_jk = counts[j * static_cast<std::size_t>(r) + static_cast<std::size_t>(k)];
            if (n_jk == 0) continue;
            n_j += n_jk;
            inner += std::lgamma(a_jk + n_jk) - lg_a_jk;
        }
        if (n_j == 0) continue;
        score += lg_a_j - std::lgamma(a_j + n_j) + inner;
    }
    return score;
}

}  // namespace

FamilyScore bdeu_family(const data::DataView& view, int child, std::span<const int> parents, double ess) {
    if (!(ess > 0.0)) throw ContractError("equivalent sample size must be positive");
    if (std::find(parents.begin(), parents.end(), child) != parents.end()) {
        throw ContractError("child cannot be its own parent");
    }
    const int r = std::max(view.cardinality(child), 1);
    std::size_t q = 1;
    for (int p : parents) q *= static_cast<std::size_t>(std::max(view.cardinality(p), 1));

    FamilyScore out;
    out.child = child;
    out.parents.assign(parents.begin(), parents.end());
    out.ess = ess;

    const std::size_t n = view.rows();
    auto config_of = [&](std::size_t i) {
        std::size_t j = 0;
        for (int p : parents) j = j * static_cast<std::size_t>(view.cardinality(p)) + static_cast<std::size_t>(view.value(i, p));
        return j;
    };

    if (q * static_cast<std::size_t>(r) <= std::max<std::size_t>(1 << 16, 8 * n)) {
        std::vector<std::uint32_t> counts(q * static_cast<std::size_t>(r), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[config_of(i) * static_cast<std::size_t>(r) + static_cast<std::size_t>(view.value(i, child))];
        out.log_score = family_from_counts(counts, q, r, ess);
        return out;
    }

    // Huge parent spaces: only observed configurations contribute.
    std::vector<std::pair<std::size_t, int>> keys(n);
    for (std::size_t i = 0; i < n; ++i) keys[i] = {config_of(i), view.value(i, child)};
    std::sort(keys.begin(), keys.end());
    const double a_j = ess / static_cast<double>(q);
    const double a_jk = a_j / r;
    double score = 0.0;
    std::size_t i = 0;
    while (i < n) {
        const std::size_t j = keys[i].first;
        double n_j = 0;
        while (i < n && keys[i].first == j) {
            const int k = keys[i].second;
            double n_jk = 0;
            while (i < n && keys[i].first == j && keys[i].second == k) {
                ++n_jk;
                ++i;
            }
            n_j += n_jk;
            score += std::lgamma(a_jk + n_jk) - std::lgamma(a_jk);
        }
        score += std::lgamma(a_j) - std::lgamma(a_j + n_j);
    }
    out.log_score = score;
    return out;
}

double score_variable_set(const data::DataView& view, std::span<const int> variables, const graph::Cpdag* graph,
                          double ess, ParentRule rule, std::span<const int> context) {
    if (variables.empty()) throw ContractError("cannot score an empty variable set");
    auto member = [](std::span<const int> s, int v) { return std::find(s.begin(), s.end(), v) != s.end(); };
    double total = 0.0;
    for (int v : variables) {
        std::vector<int> parents;
        if (graph != nullptr && rule == ParentRule::surviving && graph->contains(v)) {
            for (int p : graph->parents(v)) {
                if (member(variables, p) || member(context, p)) parents.push_back(p);
            }
            for (int u : graph->neighbors(v)) {
                if (u < v && member(variables, u)) parents.push_back(u);
            }
            std::sort(parents.begin(), parents.end());
        }
        total += bdeu_family(view, v, parents, ess).log_score;
    }
    return total;
}

}  // namespace brainet::bdeu
