#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "brainet/data.hpp"
#include "brainet/nnet.hpp"
#include "brainet/sampling.hpp"
#include "brainet/structure.hpp"
#include "brainet/uncertainty.hpp"
#include "json.hpp"

namespace brainet::eval {

// --- ranking metrics -------------------------------------------------------

/// Higher score = more likely positive.
struct ScoredBinaryOutcomes {
    std::vector<double> scores;
    std::vector<bool> positives;

    void validate() const;
};

double roc_auc(const ScoredBinaryOutcomes& o);
/// Average precision. With `flagged_positive` false the negatives are ranked as positives
/// by the negated score (the "in-distribution as positive" column).
double pr_auc(const ScoredBinaryOutcomes& o, bool flagged_positive = true);
double fpr_at_tpr(const ScoredBinaryOutcomes& o, double tpr_target = 0.95);
/// min over thresholds of 0.5 (1 - TPR) + 0.5 FPR.
double detection_error(const ScoredBinaryOutcomes& o);

nlohmann::json ranking_metrics(const ScoredBinaryOutcomes& o);

// --- synthetic data --------------------------------------------------------

/// Binary Bayesian network. cpt[v][j] = P(v = 1 | parent configuration j), where the
/// first listed parent is the most significant bit of j.
struct BayesNet {
    std::vector<std::vector<int>> parents;
    std::vector<std::vector<double>> cpt;

    int size() const { return static_cast<int>(parents.size()); }
    std::vector<int> topological_order() const;
    void validate() const;
};

/// P(v = 1 | pa) = low + (high - low) * (active parents / |pa|); roots are fair coins.
BayesNet additive_network(std::vector<std::vector<int>> parents, double low = 0.15, double high = 0.85);

data::Dataset sample_network(const BayesNet& net, std::size_t n, std::uint64_t seed);

/// Named reference networks: "collider", "chain", "collider-fork", "diamond", "asia".
/// Single-parent nodes use the additive table with 0.15 / 0.85; nodes with several
/// parents use P(v = 1 | pa) = active parents / |pa|.
BayesNet reference_network(const std::string& name);
std::vector<std::string> reference_network_names();

/// Two interleaved half circles with gaussian noise; labels 0/1.
data::Dataset two_moons(std::size_t n, double noise, std::uint64_t seed);

/// Unlabeled points drawn uniformly from the box [lo, hi]^dims.
data::Dataset uniform_box(std::size_t n, int dims, double lo, double hi, std::uint64_t seed);

inline constexpr int kBlockWidth = 5;

/// Independent blocks of five binary variables (a -> b -> c -> s <- e); the label's
/// log-odds add one term per block, +-1.5 by the parity of a and c.
data::Dataset block_classification(std::size_t n, int blocks, std::uint64_t seed);

// --- training and prediction -----------------------------------------------

struct TrainConfig {
    int epochs = 60;
    int batch_size = 64;
    double lr = 1e-3;
    nnet::WidthPolicy width;
    std::uint64_t seed = 0;
};

struct Model {
    structure::GgtNode root;
    nnet::NeuralHierarchy net;
};

/// N x cols matrix of real features (raw when present, category codes otherwise).
nnet::Matrix feature_matrix(const data::Dataset& ds);

/// Head kind from the dataset: softmax for labels, gaussian for targets.
nnet::HeadSpec head_for(const data::Dataset& ds);

/// Builds the network over all dataset columns (columns absent from the tree feed the
/// head directly) and trains it with one uniformly drawn sub-network per batch.
Model fit_model(const data::Dataset& train, structure::GgtNode root, const TrainConfig& config);

uncertainty::PredictiveBatch predict_stochastic(const Model& m, const data::Dataset& ds,
                                                const sampling::SamplingConfig& config);
uncertainty::PredictiveBatch predict_simultaneous(const Model& m, const data::Dataset& ds, double gamma);

/// s parallel chains of `depth` fully connected layers over every testable column.
structure::GgtNode stacked_dense_tree(const data::Dataset& ds, int s, int depth);

/// A single gather over every testable column: the head reads the inputs directly.
structure::GgtNode parentless_tree(const data::Dataset& ds);

/// Layer width for `tree` whose total parameter count is closest to `target`.
nnet::WidthPolicy match_width(const structure::GgtNode& tree, const data::Dataset& ds, std::size_t target);

// --- experiment drivers ----------------------------------------------------

struct ExperimentConfig {
    structure::LearnConfig learn;
    TrainConfig train;
    sampling::SamplingConfig sampling;
    double train_fraction = 0.8;
    int discretize_bins = 4;
    int zero_depth = 2;           // stacked layers in the zero-threshold endpoint
    bool match_parameters = true;  // zero endpoint width matched to the first learned point

    nlohmann::json to_json() const;
};

struct AblationRow {
    double threshold = 0.0;
    double nll = 0.0;
    double error = 0.0;
    double brier = 0.0;
    std::size_t parameters = 0;
};

std::vector<AblationRow> run_ablation(const data::Dataset& dataset, const std::vector<double>& thresholds,
                                      const ExperimentConfig& config);

struct UniqueStructuresRow {
    std::size_t train_size = 0;
    double unique_structures = 0.0;
    std::vector<std::size_t> per_seed;
};

std::vector<UniqueStructuresRow> run_unique_structures_sweep(const data::Dataset& dataset,
                                                             const std::vector<std::size_t>& sizes,
                                                             const ExperimentConfig& config, int seeds = 5);

/// Ranking metrics of every score type for a trained model, plus in-distribution error.
nlohmann::json ood_metrics(const Model& m, const data::Dataset& id_test, const data::Dataset& ood_test,
                           const sampling::SamplingConfig& config);

/// Trains on `train`, scores both test sets under stochastic and simultaneous inference.
nlohmann::json run_ood(const data::Dataset& train, const data::Dataset& id_test, const data::Dataset& ood_test,
                       const ExperimentConfig& config);

struct RegressionRow {
    int repeat = 0;
    double rmse = 0.0;
    double nll = 0.0;
    double baseline_rmse = 0.0;
    double baseline_nll = 0.0;
};

/// Repeated random splits; the baseline is the parentless endpoint trained identically.
std::vector<RegressionRow> run_regression(const data::Dataset& dataset, int repeats, const ExperimentConfig& config);

// --- tables -----------------------------------------------------------------

nlohmann::json to_json(const std::vector<AblationRow>& rows);
nlohmann::json to_json(const std::vector<UniqueStructuresRow>& rows);
nlohmann::json to_json(const std::vector<RegressionRow>& rows);
std::string to_csv(const std::vector<AblationRow>& rows);

}  // namespace brainet::eval
