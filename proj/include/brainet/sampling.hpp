#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "brainet/nnet.hpp"
#include "brainet/structure.hpp"

namespace brainet::sampling {

enum class SelectionMode { posterior, uniform, argmax };

struct SamplingConfig {
    double gamma = 1.0;
    int passes = 15;
    SelectionMode mode = SelectionMode::posterior;
    std::uint64_t seed = 0;

    void validate() const;
};

/// exp(r_t / gamma) normalized, computed with max-subtraction.
std::vector<double> boltzmann_probabilities(std::span<const double> scores, double gamma);

struct SubNetworkSelection {
    structure::Choices choices;
    double total_score = 0.0;
};

/// Leaves-to-root draw: every branch first resolves the selections below it, its aggregate
/// score is the sum of its children's totals, then one branch is drawn per site.
SubNetworkSelection sample_selection(const structure::GgtNode& root, SelectionMode mode, double gamma, Rng& rng);
SubNetworkSelection sample_selection(const structure::GgtNode& root, const SamplingConfig& config);

struct StochasticOutput {
    std::vector<nnet::Matrix> per_pass;  // probabilities, or (mean, variance) columns
    nnet::Matrix mean;
    std::vector<structure::Choices> selections;
};

/// T eval-mode passes through independently sampled sub-networks. Classification passes
/// are averaged as probabilities; gaussian passes are moment matched.
StochasticOutput stochastic_predict(const nnet::NeuralHierarchy& h, const structure::GgtNode& root,
                                    const nnet::Matrix& inputs, const SamplingConfig& config);

/// Head output re-expressed as probabilities or (mean, variance).
nnet::Matrix head_to_predictive(const nnet::NeuralHierarchy& h, const nnet::Matrix& head_output);

/// Combines per-pass predictive outputs the same way stochastic_predict does.
nnet::Matrix average_passes(const nnet::NeuralHierarchy& h, const std::vector<nnet::Matrix>& per_pass);

}  // namespace brainet::sampling
