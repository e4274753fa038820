#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "brainet/structure.hpp"
#include "json.hpp"

namespace brainet::nnet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class HeadKind { softmax, gaussian };

struct HeadSpec {
    HeadKind kind = HeadKind::softmax;
    int class_count = 2;

    int outputs() const { return kind == HeadKind::softmax ? class_count : 2; }
};

/// Neurons per container layer: round(base * multiplier).
struct WidthPolicy {
    int base = 32;
    double multiplier = 1.0;

    int layer_width(int depth, int fan_in) const;
};

/// Leaf of the hierarchy: a plain selection of input columns.
struct Gather {
    std::string id;
    std::vector<int> columns;
};

/// What a container layer reads from one child of its branch.
struct ChildRef {
    std::string source;  // "gather:<id>" or "group:<node id>"
    bool leaf = false;
    double leaf_score = 0.0;
};

/// The layers L_1^t..L_k^t built for branch t of one recursion site.
struct Container {
    std::string id;
    std::string node_id;
    int branch_index = 0;
    std::vector<std::string> layer_ids;  // concatenated in this order
    std::vector<ChildRef> children;      // ancestors first, descendant last
    double score = 0.0;                  // aggregate branch score at gamma = 1
};

/// The s containers of one recursion site. The caller sees their output as a
/// single block of `width` activations.
struct Group {
    std::string node_id;
    int depth = 0;
    int width = 0;
    std::vector<std::string> container_ids;
};

/// Dense -> batchnorm -> ReLU.
struct Layer {
    std::string id;
    std::string node_id;
    std::string container_id;
    int branch_index = 0;
    int width = 0;
    std::vector<std::string> incoming;
    Matrix weight;  // width x total fan-in, columns follow `incoming`
    Vector bias, gamma, beta, running_mean, running_var;
};

struct Head {
    HeadSpec spec;
    std::vector<std::string> incoming;
    Matrix weight;
    Vector bias;
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;
inline constexpr int kCheckpointFormatVersion = 1;

struct NeuralHierarchy {
    int input_width = 0;
    std::map<std::string, Gather> gathers;
    std::map<std::string, Layer> layers;
    std::map<std::string, Container> containers;
    std::map<std::string, Group> groups;
    Head head;
    std::string root_source;

    // Affine preprocessing fitted on training data; applied by prepare_inputs.
    Vector feature_mean, feature_scale;
    double target_mean = 0.0, target_scale = 1.0;

    int source_width(const std::string& source) const;
    std::size_t parameter_count() const;
    std::size_t parameter_count(const structure::Choices& choices) const;
    /// Layer ids in a deterministic inputs-to-head order.
    std::vector<std::string> topological_order() const;
};

using Choices = structure::Choices;

/// Converts a GGT into a discriminative hierarchy: leaves become gather layers (shared
/// between leaves over the same columns), each branch becomes a container whose layer i
/// reads ancestor hierarchy i and the descendant hierarchy, and the head reads the root.
/// `extra_columns` (columns never tested, e.g. degenerate ones) feed the head directly.
NeuralHierarchy build_network(const structure::GgtNode& root, const WidthPolicy& width, const HeadSpec& head,
                              int input_width, const std::vector<int>& extra_columns = {});

/// Kaiming fan-in initialization; each layer draws from its own stream.
void initialize(NeuralHierarchy& h, std::uint64_t seed);

void fit_normalization(NeuralHierarchy& h, const Matrix& inputs, std::span<const double> targets = {});
Matrix prepare_inputs(const NeuralHierarchy& h, const Matrix& raw_inputs);

enum class Mode { train, eval };

/// Head output for one selected sub-network: class log-probabilities (softmax) or
/// (mean, log-variance) columns (gaussian). Train mode normalizes with batch statistics
/// but does not touch the running statistics.
Matrix forward(const NeuralHierarchy& h, const Choices& choices, const Matrix& inputs, Mode mode = Mode::eval);

/// Per-site Boltzmann weights over branches, from scores aggregated leaves-to-root with
/// gamma * log-sum-exp(r / gamma).
std::map<std::string, std::vector<double>> simultaneous_weights(const NeuralHierarchy& h, double gamma = 1.0);

/// One eval-mode pass through every branch, mixing each site's branch activations.
Matrix forward_simultaneous(const NeuralHierarchy& h, const Matrix& inputs, double gamma = 1.0);

enum class Loss { cross_entropy, gaussian_nll };

/// Gradient buffers, one entry per layer touched by the selection.
struct LayerGrad {
    Matrix weight;
    Vector bias, gamma, beta;
};

struct Gradients {
    std::map<std::string, LayerGrad> layers;
    Matrix head_weight;
    Vector head_bias;
    double loss = 0.0;
};

/// Mean loss over the batch. Class targets are given as integral doubles.
double loss_value(const NeuralHierarchy& h, const Choices& choices, const Matrix& inputs,
                  std::span<const double> targets, Loss loss, Mode mode = Mode::train);

Gradients compute_gradients(const NeuralHierarchy& h, const Choices& choices, const Matrix& inputs,
                            std::span<const double> targets, Loss loss, Mode mode = Mode::train);

/// Addresses of every parameter on the selection, in the same order as flatten().
std::vector<double*> parameter_refs(NeuralHierarchy& h, const Choices& choices);
std::vector<double> flatten(const Gradients& g, const NeuralHierarchy& h, const Choices& choices);

struct AdamSlot {
    Matrix m_w, v_w;
    Vector m_b, v_b, m_g, v_g, m_beta, v_beta;
    long step = 0;
};

struct OptimizerState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::map<std::string, AdamSlot> slots;  // layer id, or "head"
};

/// Adam update of the selected sub-network plus running batchnorm statistics.
/// Throws brainet::Error naming `batch_index` on a non-finite loss.
double train_step(NeuralHierarchy& h, const Choices& choices, const Matrix& inputs, std::span<const double> targets,
                  Loss loss, OptimizerState& opt, std::size_t batch_index = 0);

nlohmann::json to_json(const NeuralHierarchy& h);
NeuralHierarchy hierarchy_from_json(const nlohmann::json& doc);

}  // namespace brainet::nnet
