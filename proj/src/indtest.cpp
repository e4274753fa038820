#include "brainet/indtest.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <boost/math/distributions/chi_squared.hpp>
#include "json.hpp"

namespace brainet::indtest {

namespace {

struct Table {
    std::size_t total = 0;        // sample count
    double cells = 0;             // rx * ry * (number of condition configurations)
    std::size_t populated = 0;    // cells holding >= kSparseCellCount samples
    std::size_t strata_seen = 0;  // non-empty condition configurations
    double cmi = 0.0;
};

void check_column(const data::DataView& view, int col) {
    if (col < 0 || static_cast<std::size_t>(col) >= view.dataset().cols()) {
        throw ContractError("column " + std::to_string(col) + " out of range");
    }
    if (view.cardinality(col) < 2) {
        throw ContractError("column " + std::to_string(col) + " has cardinality < 2");
    }
}

// Accumulates one stratum's r_x * r_y block into the running statistic.
void add_stratum(Table& t, std::span<const std::uint32_t> block, int rx, int ry, std::vector<double>& nx,
                 std::vector<double>& ny) {
    std::fill(nx.begin(), nx.end(), 0.0);
    std::fill(ny.begin(), ny.end(), 0.0);
    double ns = 0;
    for (int yv = 0; yv < ry; ++yv) {
        for (int xv = 0; xv < rx; ++xv) {
            double c = block[static_cast<std::size_t>(yv * rx + xv)];
            nx[static_cast<std::size_t>(xv)] += c;
            ny[static_cast<std::size_t>(yv)] += c;
            ns += c;
            if (c >= kSparseCellCount) ++t.populated;
        }
    }
    if (ns == 0) return;
    ++t.strata_seen;
    for (int yv = 0; yv < ry; ++yv) {
        for (int xv = 0; xv < rx; ++xv) {
            double c = block[static_cast<std::size_t>(yv * rx + xv)];
            if (c == 0) continue;
            t.cmi += c * std::log(c * ns / (nx[static_cast<std::size_t>(xv)] * ny[static_cast<std::size_t>(yv)]));
        }
    }
}

Table tabulate(const data::DataView& view, int x, int y, std::span<const int> cond) {
    if (x == y) throw ContractError("CI test requires x != y");
    check_column(view, x);
    check_column(view, y);
    for (int s : cond) {
        if (s == x || s == y) throw ContractError("condition set must exclude x and y");
        check_column(view, s);
    }
    const int rx = view.cardinality(x);
    const int ry = view.cardinality(y);
    const std::size_t block = static_cast<std::size_t>(rx) * static_cast<std::size_t>(ry);
    double strata = 1.0;
    for (int s : cond) strata *= view.cardinality(s);

    Table t;
    t.total = view.rows();
    t.cells = strata * static_cast<double>(block);
    std::vector<double> nx(static_cast<std::size_t>(rx));
    std::vector<double> ny(static_cast<std::size_t>(ry));

    auto key_of = [&](std::size_t i) {
        std::uint64_t s = 0;
        for (int c : cond) s = s * static_cast<std::uint64_t>(view.cardinality(c)) + static_cast<std::uint64_t>(view.value(i, c));
        return s * block + static_cast<std::uint64_t>(view.value(i, y)) * rx + static_cast<std::uint64_t>(view.value(i, x));
    };

    const double dense_limit = std::max<double>(1 << 16, 8.0 * static_cast<double>(t.total));
    if (t.cells <= dense_limit) {
        std::vector<std::uint32_t> counts(static_cast<std::size_t>(t.cells), 0);
        for (std::size_t i = 0; i < t.total; ++i) ++counts[key_of(i)];
        for (std::size_t off = 0; off < counts.size(); off += block) {
            add_stratum(t, std::span<const std::uint32_t>(counts).subspan(off, block), rx, ry, nx, ny);
        }
    } else {
        std::vector<std::uint64_t> keys(t.total);
        for (std::size_t i = 0; i < t.total; ++i) keys[i] = key_of(i);
        std::sort(keys.begin(), keys.end());
        std::vector<std::uint32_t> cells(block);
        std::size_t i = 0;
        while (i < keys.size()) {
            const std::uint64_t stratum = keys[i] / block;
            std::fill(cells.begin(), cells.end(), 0);
            while (i < keys.size() && keys[i] / block == stratum) {
                ++cells[keys[i] % block];
                ++i;
            }
            add_stratum(t, cells, rx, ry, nx, ny);
        }
    }
    if (t.total > 0) t.cmi /= static_cast<double>(t.total);
    return t;
}

}  // namespace

double conditional_mutual_information(const data::DataView& view, int x, int y, std::span<const int> condition_set) {
    return tabulate(view, x, y, condition_set).cmi;
}

CiDecision is_independent(const data::DataView& view, int x, int y, std::span<const int> condition_set,
                          double threshold) {
    if (!(threshold >= 0.0)) throw ContractError("threshold must be non-negative");
    Table t = tabulate(view, x, y, condition_set);
    CiDecision d;
    d.x = x;
    d.y = y;
    d.condition_set.assign(condition_set.begin(), condition_set.end());
    d.statistic = t.cmi;
    d.threshold = threshold;
    const double sparse_cells = t.cells - static_cast<double>(t.populated);
    d.sparse = sparse_cells > 0.5 * t.cells;
    d.independent = d.sparse || t.cmi < threshold;
    return d;
}

CiDecision CiTest::operator()(const data::DataView& view, int x, int y, std::span<const int> condition_set) const {
    CiDecision d;
    if (mode == TestMode::cmi) {
        d = is_independent(view, x, y, condition_set, threshold);
    } else {
        Table t = tabulate(view, x, y, condition_set);
        d.x = x;
        d.y = y;
        d.condition_set.assign(condition_set.begin(), condition_set.end());
        d.statistic = t.cmi;
        d.threshold = threshold;
        d.sparse = (t.cells - static_cast<double>(t.populated)) > 0.5 * t.cells;
        const double g = 2.0 * static_cast<double>(t.total) * t.cmi;
        const double df = std::max(1.0, double(view.cardinality(x) - 1) * double(view.cardinality(y) - 1) *
                                            static_cast<double>(std::max<std::size_t>(t.strata_seen, 1)));
        boost::math::chi_squared dist(df);
        d.p_value = g <= 0 ? 1.0 : boost::math::cdf(boost::math::complement(dist, g));
        d.independent = d.sparse || *d.p_value > alpha;
    }
    if (log != nullptr) {
        nlohmann::json rec = {{"x", d.x},
                              {"y", d.y},
                              {"cond", d.condition_set},
                              {"cmi", d.statistic},
                              {"threshold", d.threshold},
                              {"independent", d.independent},
                              {"sparse", d.sparse}};
        if (d.p_value) rec["p"] = *d.p_value;
        *log << rec.dump() << '\n';
    }
    return d;
}

}  // namespace brainet::indtest
