#include <cmath>
#include <numbers>

#include "brainet/common.hpp"
#include "brainet/uncertainty.hpp"
#include "doctest.h"

using namespace brainet;
using uncertainty::Matrix;
using uncertainty::PredictiveBatch;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
    Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& row : r) {
        Eigen::Index j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix random_probabilities(Rng& rng, int n, int k, double concentration = 1.0) {
    std::gamma_distribution<double> g(concentration, 1.0);
    Matrix p(n, k);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) p(i, j) = g(rng) + 1e-12;
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

// Binned calibration gap recomputed independently: bin b holds confidences in (b/B, (b+1)/B].
double ece_oracle(const Matrix& p, const std::vector<double>& labels, int bins) {
    std::vector<std::vector<std::pair<double, bool>>> bucket(static_cast<std::size_t>(bins));
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        Eigen::Index arg = 0;
        const double c = p.row(i).maxCoeff(&arg);
        int b = 0;
        while (b < bins - 1 && c > double(b + 1) / bins) ++b;
        bucket[static_cast<std::size_t>(b)].push_back({c, arg == static_cast<Eigen::Index>(labels[static_cast<std::size_t>(i)])});
    }
    double total = 0;
    for (const auto& bk : bucket) {
        if (bk.empty()) continue;
        double conf = 0, acc = 0;
        for (const auto& [c, ok] : bk) {
            conf += c;
            acc += ok;
        }
        total += std::abs(acc - conf) / double(p.rows());
    }
    return total;
}

}  // namespace

TEST_CASE("entropy examples") {
    CHECK(uncertainty::entropy(Eigen::RowVectorXd::Constant(4, 0.25)) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    Eigen::RowVectorXd one(3);
    one << 0, 1, 0;
    CHECK(uncertainty::entropy(one) == 0.0);
}

TEST_CASE("mutual information of disagreeing confident passes") {
    // two passes, each certain of a different class: mean uniform
    auto b = PredictiveBatch::classification({rows({{1, 0}}), rows({{0, 1}})});
    CHECK(uncertainty::predictive_entropy(b)[0] == doctest::Approx(std::log(2.0)));
    CHECK(uncertainty::expected_entropy(b)[0] == 0.0);
    CHECK(uncertainty::mutual_information(b)[0] == doctest::Approx(std::log(2.0)));
    CHECK(uncertainty::max_softmax(b)[0] == doctest::Approx(0.5));
}

TEST_CASE("identical passes carry no mutual information") {
    Rng rng(1);
    const auto p = random_probabilities(rng, 30, 4);
    auto b = PredictiveBatch::classification({p, p, p});
    for (double mi : uncertainty::mutual_information(b)) CHECK(mi < 1e-15);
}

TEST_CASE("uncertainty decomposition properties") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 5), T = 1 + static_cast<int>(rng() % 8);
        std::vector<Matrix> passes;
        for (int t = 0; t < T; ++t) passes.push_back(random_probabilities(rng, 10, k, 0.3 + 0.2 * (trial % 3)));
        auto b = PredictiveBatch::classification(passes);
        const auto h = uncertainty::predictive_entropy(b);
        const auto e = uncertainty::expected_entropy(b);
        const auto mi = uncertainty::mutual_information(b);
        const auto ms = uncertainty::max_softmax(b);
        for (std::size_t i = 0; i < h.size(); ++i) {
            CHECK(h[i] <= std::log(double(k)) + 1e-12);
            CHECK(e[i] >= 0.0);
            CHECK(mi[i] >= 0.0);
            CHECK(mi[i] <= std::log(double(k)) + 1e-12);
            CHECK(h[i] + 1e-12 >= e[i]);
            CHECK(ms[i] >= 1.0 / k - 1e-12);
            CHECK(ms[i] <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("classification scores: examples") {
    auto b = PredictiveBatch::classification({rows({{0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}})}, {0, 1, 1});
    CHECK(uncertainty::nll(b) == doctest::Approx(-(std::log(0.8) + std::log(0.7) + std::log(0.4)) / 3));
    CHECK(uncertainty::brier(b) == doctest::Approx((0.08 + 0.18 + 0.72) / 3));
    CHECK(uncertainty::error_rate(b) == doctest::Approx(1.0 / 3));
    // bins of width 0.5: {0.8, 0.7, 0.6} all fall in (0.5, 1], accuracy 2/3, confidence 0.7
    CHECK(uncertainty::ece(b, 2) == doctest::Approx(std::abs(2.0 / 3 - 0.7)));
}

TEST_CASE("ece bin edges are right-inclusive") {
    // confidence exactly 0.5 belongs to the first of two bins
    auto b = PredictiveBatch::classification({rows({{0.5, 0.5}, {0.9, 0.1}})}, {0, 0});
    // bin 1: 0.5 vs accuracy 1 -> 0.5/2; bin 2: 0.9 vs 1 -> 0.1/2
    CHECK(uncertainty::ece(b, 2) == doctest::Approx(0.3));
    CHECK(uncertainty::ece(b, 1) == doctest::Approx(std::abs(1.0 - 0.7)));
}

TEST_CASE("ece agrees with an independent binning") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const int k = 2 + static_cast<int>(rng() % 3), n = 1 + static_cast<int>(rng() % 60);
        const auto p = random_probabilities(rng, n, k, 0.5);
        std::vector<double> y(static_cast<std::size_t>(n));
        for (auto& v : y) v = double(rng() % static_cast<unsigned>(k));
        auto b = PredictiveBatch::classification({p}, y);
        for (int bins : {1, 5, 15}) {
            const double got = uncertainty::ece(b, bins);
            CHECK(got == doctest::Approx(ece_oracle(p, y, bins)).epsilon(1e-12));
            CHECK(got >= 0.0);
            CHECK(got <= 1.0);
        }
        const double br = uncertainty::brier(b);
        CHECK(br >= 0.0);
        CHECK(br <= 2.0);
    }
}

TEST_CASE("perfect predictions") {
    auto b = PredictiveBatch::classification({rows({{1, 0, 0}, {0, 0, 1}})}, {0, 2});
    CHECK(uncertainty::nll(b) == 0.0);
    CHECK(uncertainty::brier(b) == 0.0);
    CHECK(uncertainty::ece(b) == 0.0);
    CHECK(uncertainty::error_rate(b) == 0.0);
}

TEST_CASE("gaussian batches") {
    auto b = PredictiveBatch::gaussian({rows({{1.0, 0.5}, {2.0, 2.0}}), rows({{3.0, 1.5}, {2.0, 2.0}})}, {2.0, 0.0});
    CHECK(b.mean(0, 0) == doctest::Approx(2.0));
    CHECK(b.mean(0, 1) == doctest::Approx(2.0));
    CHECK(b.mean(1, 1) == doctest::Approx(2.0));
    const double expected = 0.5 * (std::log(2 * std::numbers::pi * 2.0)) + 0.5 * (std::log(2 * std::numbers::pi * 2.0) + 4.0 / 2.0);
    CHECK(uncertainty::nll(b) == doctest::Approx(expected / 2));
    CHECK(uncertainty::rmse(b) == doctest::Approx(std::sqrt(2.0)));
    // the variance floor keeps a point mass finite
    auto sharp = PredictiveBatch::gaussian({rows({{1.0, 0.0}})}, {1.0});
    CHECK(uncertainty::nll(sharp) == doctest::Approx(0.5 * std::log(2 * std::numbers::pi * uncertainty::kVarianceFloor)));
}

TEST_CASE("contract errors") {
    CHECK_THROWS_AS(PredictiveBatch::classification({}), ContractError);
    CHECK_THROWS_AS(PredictiveBatch::classification({rows({{0.5, 0.6}})}), ContractError);
    CHECK_THROWS_AS(PredictiveBatch::classification({rows({{0.5, 0.5}}), rows({{1.0}})}), ContractError);
    auto unlabeled = PredictiveBatch::classification({rows({{0.5, 0.5}})});
    CHECK_THROWS_AS(uncertainty::nll(unlabeled), ContractError);
    auto out_of_range = PredictiveBatch::classification({rows({{0.5, 0.5}})}, {2});
    CHECK_THROWS_AS(uncertainty::error_rate(out_of_range), ContractError);
    CHECK_THROWS_AS(uncertainty::ece(out_of_range, 0), ContractError);
    auto reg = PredictiveBatch::gaussian({rows({{0.0, 1.0}})}, {0.0});
    CHECK_THROWS_AS(uncertainty::mutual_information(reg), ContractError);
    CHECK_THROWS_AS(uncertainty::rmse(unlabeled), ContractError);
    CHECK_THROWS_AS(PredictiveBatch::gaussian({rows({{0.0, 1.0, 2.0}})}), ContractError);
}

TEST_CASE("documented examples") {
    auto one = [](std::initializer_list<double> r) { return PredictiveBatch::classification({rows({r})}); };
    CHECK(uncertainty::max_softmax(one({0.7, 0.2, 0.1}))[0] == doctest::Approx(0.7));
    CHECK(uncertainty::max_softmax(one({0.25, 0.25, 0.25, 0.25}))[0] == doctest::Approx(0.25));
    CHECK(uncertainty::max_softmax(one({0, 1, 0}))[0] == 1.0);
    CHECK(uncertainty::predictive_entropy(one({0, 0, 1}))[0] == 0.0);
    CHECK(uncertainty::predictive_entropy(one({0.5, 0.5}))[0] == doctest::Approx(std::log(2.0)));
    CHECK(uncertainty::predictive_entropy(one({0.75, 0.25}))[0] == doctest::Approx(0.5623).epsilon(1e-4));

    auto hot = PredictiveBatch::classification({rows({{1, 0, 0}}), rows({{0, 0, 1}})});
    CHECK(uncertainty::expected_entropy(hot)[0] == 0.0);
    auto flat = PredictiveBatch::classification({rows({{1. / 3, 1. / 3, 1. / 3}}), rows({{1. / 3, 1. / 3, 1. / 3}})});
    CHECK(uncertainty::expected_entropy(flat)[0] == doctest::Approx(std::log(3.0)));
    auto soft = PredictiveBatch::classification({rows({{0.9, 0.1}}), rows({{0.1, 0.9}})});
    CHECK(uncertainty::mutual_information(soft)[0] == doctest::Approx(0.3680).epsilon(1e-4));

    CHECK(uncertainty::nll(PredictiveBatch::classification({rows({{0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}})}, {1, 3})) ==
          doctest::Approx(std::log(4.0)));
    CHECK(uncertainty::nll(PredictiveBatch::classification({rows({{0.5, 0.3, 0.2}, {0.1, 0.5, 0.4}})}, {0, 1})) ==
          doctest::Approx(std::log(2.0)));
    CHECK(uncertainty::brier(PredictiveBatch::classification({rows({{0.5, 0.5}, {0.5, 0.5}})}, {0, 1})) == doctest::Approx(0.5));
    CHECK(uncertainty::brier(PredictiveBatch::classification({rows({{0, 1}})}, {0})) == doctest::Approx(2.0));

    // ten at 0.9 with eight correct, ten at 0.6 with six correct
    Matrix p(20, 2);
    std::vector<double> y(20);
    for (int i = 0; i < 20; ++i) {
        const double c = i < 10 ? 0.9 : 0.6;
        p.row(i) << c, 1 - c;
        y[static_cast<std::size_t>(i)] = (i < 10 ? i < 8 : i < 16) ? 0 : 1;
    }
    CHECK(uncertainty::ece(PredictiveBatch::classification({p}, y), 2) == doctest::Approx(0.05).epsilon(1e-12));
    auto sure = PredictiveBatch::classification({rows({{1, 0}, {0, 1}})}, {0, 1});
    CHECK(uncertainty::ece(sure, 15) == 0.0);
}

TEST_CASE("calibrated batch has zero ece") {
    // per bin, accuracy equals confidence exactly
    Matrix p(20, 2);
    std::vector<double> y(20);
    for (int i = 0; i < 20; ++i) {
        const double c = i < 10 ? 0.7 : 0.9;
        p.row(i) << c, 1 - c;
        const int correct = i < 10 ? 7 : 9;
        y[static_cast<std::size_t>(i)] = (i % 10) < correct ? 0 : 1;
    }
    CHECK(uncertainty::ece(PredictiveBatch::classification({p}, y), 10) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("measures are invariant to pass order") {
    Rng rng(5);
    std::vector<Matrix> passes;
    for (int t = 0; t < 5; ++t) passes.push_back(random_probabilities(rng, 12, 3));
    std::vector<double> y(12);
    for (auto& v : y) v = double(rng() % 3);
    auto a = PredictiveBatch::classification(passes, y);
    std::reverse(passes.begin(), passes.end());
    std::swap(passes[0], passes[2]);
    auto b = PredictiveBatch::classification(passes, y);
    const auto ma = uncertainty::mutual_information(a), mb = uncertainty::mutual_information(b);
    const auto ea = uncertainty::expected_entropy(a), eb = uncertainty::expected_entropy(b);
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(ma[i] == doctest::Approx(mb[i]).epsilon(1e-12));
        CHECK(ea[i] == doctest::Approx(eb[i]).epsilon(1e-12));
    }
    CHECK(uncertainty::nll(a) == doctest::Approx(uncertainty::nll(b)).epsilon(1e-12));
    CHECK(uncertainty::ece(a) == doctest::Approx(uncertainty::ece(b)).epsilon(1e-12));
}

TEST_CASE("nll and brier fall as mass moves to the true class") {
    double last_nll = 1e300, last_brier = 1e300;
    for (double q : {0.4, 0.6, 0.8}) {
        auto b = PredictiveBatch::classification({rows({{q, 1 - q}})}, {0});
        CHECK(uncertainty::nll(b) < last_nll);
        CHECK(uncertainty::brier(b) < last_brier);
        last_nll = uncertainty::nll(b);
        last_brier = uncertainty::brier(b);
    }
}
