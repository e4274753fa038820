#include "brainet/uncertainty.hpp"

#include <cmath>
#include <numbers>

#include "brainet/common.hpp"

namespace brainet::uncertainty {

namespace {

void require_classification(const PredictiveBatch& b) {
    if (b.regression) throw ContractError("measure requires a classification batch");
    b.validate();
}

void require_labels(const PredictiveBatch& b) {
    if (b.labels.empty()) throw ContractError("measure requires labels");
    if (b.labels.size() != b.size()) throw ContractError("label count does not match batch size");
}

Eigen::Index label_at(const PredictiveBatch& b, std::size_t i) {
    const auto k = static_cast<Eigen::Index>(std::llround(b.labels[i]));
    if (k < 0 || k >= b.mean.cols()) throw ContractError("class label out of range");
    return k;
}

}  // namespace

PredictiveBatch PredictiveBatch::classification(std::vector<Matrix> passes, std::vector<double> labels) {
    if (passes.empty()) throw ContractError("batch needs at least one pass");
    PredictiveBatch b;
    b.mean = Matrix::Zero(passes[0].rows(), passes[0].cols());
    for (const auto& p : passes) {
        if (p.rows() != b.mean.rows() || p.cols() != b.mean.cols()) throw ContractError("pass shapes differ");
        b.mean += p;
    }
    b.mean /= double(passes.size());
    b.per_pass = std::move(passes);
    b.labels = std::move(labels);
    b.validate();
    return b;
}

PredictiveBatch PredictiveBatch::gaussian(std::vector<Matrix> passes, std::vector<double> targets) {
    if (passes.empty()) throw ContractError("batch needs at least one pass");
    PredictiveBatch b;
    b.regression = true;
    const auto n = passes[0].rows();
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(n), second = Eigen::VectorXd::Zero(n);
    for (const auto& p : passes) {
        if (p.rows() != n || p.cols() != 2) throw ContractError("gaussian passes must be N x 2");
        mu += p.col(0);
        second += (p.col(1).array() + p.col(0).array().square()).matrix();
    }
    mu /= double(passes.size());
    second /= double(passes.size());
    b.mean.resize(n, 2);
    b.mean.col(0) = mu;
    b.mean.col(1) = (second.array() - mu.array().square()).max(0.0).matrix();
    b.per_pass = std::move(passes);
    b.labels = std::move(targets);
    return b;
}

void PredictiveBatch::validate() const {
    if (per_pass.empty()) throw ContractError("batch needs at least one pass");
    if (regression) return;
    for (const auto& p : per_pass) {
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
            if (std::abs(p.row(i).sum() - 1.0) > 1e-9) throw ContractError("probability row does not sum to 1");
        }
    }
}

double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p) {
    double h = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p(k) > 0.0) h -= p(k) * std::log(p(k));
    }
    return h;
}

std::vector<double> max_softmax(const PredictiveBatch& batch) {
    require_classification(batch);
    std::vector<double> out(batch.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = batch.mean.row(static_cast<Eigen::Index>(i)).maxCoeff();
    return out;
}

std::vector<double> predictive_entropy(const PredictiveBatch& batch) {
    require_classification(batch);
    std::vector<double> out(batch.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = entropy(batch.mean.row(static_cast<Eigen::Index>(i)));
    return out;
}

std::vector<double> expected_entropy(const PredictiveBatch& batch) {
    require_classification(batch);
    std::vector<double> out(batch.size(), 0.0);
    for (const auto& p : batch.per_pass) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += entropy(p.row(static_cast<Eigen::Index>(i)));
    }
    for (auto& x : out) x /= double(batch.per_pass.size());
    return out;
}

std::vector<double> mutual_information(const PredictiveBatch& batch) {
    const auto h = predictive_entropy(batch);
    const auto e = expected_entropy(batch);
    std::vector<double> out(h.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, h[i] - e[i]);
    return out;
}

double nll(const PredictiveBatch& batch) {
    require_labels(batch);
    double total = 0.0;
    if (batch.regression) {
        for (std::size_t i = 0; i < batch.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double var = std::max(batch.mean(r, 1), kVarianceFloor);
            const double d = batch.labels[i] - batch.mean(r, 0);
            total += 0.5 * (std::log(2.0 * std::numbers::pi * var) + d * d / var);
        }
    } else {
        require_classification(batch);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            total -= std::log(batch.mean(static_cast<Eigen::Index>(i), label_at(batch, i)));
        }
    }
    return total / double(batch.size());
}

double brier(const PredictiveBatch& batch) {
    require_classification(batch);
    require_labels(batch);
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const auto y = label_at(batch, i);
        for (Eigen::Index k = 0; k < batch.mean.cols(); ++k) {
            const double d = batch.mean(r, k) - (k == y ? 1.0 : 0.0);
            total += d * d;
        }
    }
    return total / double(batch.size());
}

double ece(const PredictiveBatch& batch, int bins) {
    if (bins < 1) throw ContractError("ece needs at least one bin");
    require_classification(batch);
    require_labels(batch);
    std::vector<double> conf(static_cast<std::size_t>(bins), 0.0), correct(static_cast<std::size_t>(bins), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(bins), 0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        Eigen::Index pred = 0;
        const double c = batch.mean.row(r).maxCoeff(&pred);
        // right-inclusive: (b/B, (b+1)/B], with 0 in the first bin
        int b = static_cast<int>(std::ceil(c * bins)) - 1;
        b = std::clamp(b, 0, bins - 1);
        conf[static_cast<std::size_t>(b)] += c;
        correct[static_cast<std::size_t>(b)] += pred == label_at(batch, i) ? 1.0 : 0.0;
        ++count[static_cast<std::size_t>(b)];
    }
    double total = 0.0;
    for (std::size_t b = 0; b < count.size(); ++b) {
        if (count[b] == 0) continue;
        const double n = double(count[b]);
        total += n / double(batch.size()) * std::abs(correct[b] / n - conf[b] / n);
    }
    return total;
}

double error_rate(const PredictiveBatch& batch) {
    require_classification(batch);
    require_labels(batch);
    double wrong = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Eigen::Index pred = 0;
        batch.mean.row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
        wrong += pred == label_at(batch, i) ? 0.0 : 1.0;
    }
    return wrong / double(batch.size());
}

double rmse(const PredictiveBatch& batch) {
    if (!batch.regression) throw ContractError("rmse requires a regression batch");
    require_labels(batch);
    double ss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double d = batch.labels[i] - batch.mean(static_cast<Eigen::Index>(i), 0);
        ss += d * d;
    }
    return std::sqrt(ss / double(batch.size()));
}

}  // namespace brainet::uncertainty
