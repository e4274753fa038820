#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>


namespace brainet::uncertainty {

using Matrix = Eigen::MatrixXd;

inline constexpr int kDefaultEceBins = 15;
inline constexpr double kVarianceFloor = 1e-6;

/// T passes of N x K class probabilities, or N x 2 (mean, variance) for regression.
struct PredictiveBatch {
    bool regression = false;
    std::vector<Matrix> per_pass;
    Matrix mean;
    std::vector<double> labels;  // class indices as integral values, or real targets

    /// Mean filled from the passes (probability average or moment matching).
    static PredictiveBatch classification(std::vector<Matrix> passes, std::vector<double> labels = {});
    static PredictiveBatch gaussian(std::vector<Matrix> passes, std::vector<double> targets = {});

    std::size_t size() const { return static_cast<std::size_t>(mean.rows()); }
    void validate() const;
};

std::vector<double> max_softmax(const PredictiveBatch& batch);
std::vector<double> predictive_entropy(const PredictiveBatch& batch);
std::vector<double> expected_entropy(const PredictiveBatch& batch);
std::vector<double> mutual_information(const PredictiveBatch& batch);

double nll(const PredictiveBatch& batch);
double brier(const PredictiveBatch& batch);
double ece(const PredictiveBatch& batch, int bins = kDefaultEceBins);
double error_rate(const PredictiveBatch& batch);
double rmse(const PredictiveBatch& batch);

/// Entropy of a probability row in nats, 0 ln 0 = 0.
double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& p);

}  // namespace brainet::uncertainty
