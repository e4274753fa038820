#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "brainet/data.hpp"

namespace brainet::indtest {

struct CiDecision {
    int x = 0;
    int y = 0;
    std::vector<int> condition_set;
    double statistic = 0.0;  // conditional mutual information, nats
    double threshold = 0.0;  // nats
    bool independent = false;
    bool sparse = false;     // too many under-populated cells; forced independent
    std::optional<double> p_value;  // G-test mode only
};

/// Plug-in estimate of I(X;Y|S) in nats. Empty strata contribute exactly 0.
double conditional_mutual_information(const data::DataView& view, int x, int y, std::span<const int> condition_set);

/// Cells with fewer samples than this count as under-populated.
inline constexpr std::size_t kSparseCellCount = 5;

/// Independent iff CMI < threshold. When more than half of the (x, y, S) cells hold fewer
/// than five samples the pair is declared independent and the sparse flag is set.
CiDecision is_independent(const data::DataView& view, int x, int y, std::span<const int> condition_set,
                          double threshold);

enum class TestMode { cmi, g_test };

/// Configured test as used by structure learning. Counts tests and optionally writes a
/// JSON-lines audit record per decision.
struct CiTest {
    TestMode mode = TestMode::cmi;
    double threshold = 0.01;  // nats
    double alpha = 0.05;      // G-test significance level
    std::ostream* log = nullptr;

    CiDecision operator()(const data::DataView& view, int x, int y, std::span<const int> condition_set) const;
};

}  // namespace brainet::indtest
