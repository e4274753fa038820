#include "brainet/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace brainet::sampling {

void SamplingConfig::validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("gamma must be finite and positive");
    if (passes < 1) throw ContractError("passes must be at least 1");
}

std::vector<double> boltzmann_probabilities(std::span<const double> scores, double gamma) {
    if (scores.empty()) throw ContractError("no scores to normalize");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("gamma must be finite and positive");
    for (double r : scores) {
        if (!std::isfinite(r)) throw ContractError("branch score is not finite");
    }
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> p(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += (p[i] = std::exp((scores[i] - top) / gamma));
    for (auto& x : p) x /= total;
    return p;
}

namespace {

double draw(const structure::GgtNode& node, SelectionMode mode, double gamma, Rng& rng, structure::Choices& out) {
    if (node.is_leaf()) return node.score;
    std::vector<double> aggregate;
    aggregate.reserve(node.branches.size());
    for (const auto& br : node.branches) {
        double total = 0.0;
        for (const auto& a : br.ancestor_children) total += draw(a, mode, gamma, rng, out);
        total += draw(br.descendant_child, mode, gamma, rng, out);
        aggregate.push_back(total);
    }
    std::size_t t = 0;
    switch (mode) {
        case SelectionMode::argmax:
            t = static_cast<std::size_t>(std::max_element(aggregate.begin(), aggregate.end()) - aggregate.begin());
            break;
        case SelectionMode::uniform:
            t = std::uniform_int_distribution<std::size_t>(0, aggregate.size() - 1)(rng);
            break;
        case SelectionMode::posterior: {
            const auto p = boltzmann_probabilities(aggregate, gamma);
            const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
            double acc = 0.0;
            t = p.size() - 1;
            for (std::size_t i = 0; i < p.size(); ++i) {
                acc += p[i];
                if (u < acc) {
                    t = i;
                    break;
                }
            }
            break;
        }
    }
    out[node.id] = static_cast<int>(t);
    return aggregate[t];
}

}  // namespace

SubNetworkSelection sample_selection(const structure::GgtNode& root, SelectionMode mode, double gamma, Rng& rng) {
    SubNetworkSelection sel;
    structure::Choices all;
    sel.total_score = draw(root, mode, gamma, rng, all);
    // keep only the sites reachable through the chosen branches
    std::vector<const structure::GgtNode*> stack{&root};
    while (!stack.empty()) {
        const auto* n = stack.back();
        stack.pop_back();
        if (n->is_leaf()) continue;
        const int t = all.at(n->id);
        sel.choices[n->id] = t;
        const auto& br = n->branches[static_cast<std::size_t>(t)];
        for (const auto& a : br.ancestor_children) stack.push_back(&a);
        stack.push_back(&br.descendant_child);
    }
    return sel;
}

SubNetworkSelection sample_selection(const structure::GgtNode& root, const SamplingConfig& config) {
    config.validate();
    Rng rng(config.seed);
    return sample_selection(root, config.mode, config.gamma, rng);
}

nnet::Matrix head_to_predictive(const nnet::NeuralHierarchy& h, const nnet::Matrix& head_output) {
    if (h.head.spec.kind == nnet::HeadKind::softmax) return head_output.array().exp();
    nnet::Matrix out(head_output.rows(), 2);
    out.col(0) = (head_output.col(0).array() * h.target_scale + h.target_mean).matrix();
    out.col(1) = (head_output.col(1).array().exp() * h.target_scale * h.target_scale).matrix();
    return out;
}

nnet::Matrix average_passes(const nnet::NeuralHierarchy& h, const std::vector<nnet::Matrix>& per_pass) {
    if (per_pass.empty()) throw ContractError("no passes to average");
    const double T = double(per_pass.size());
    if (h.head.spec.kind == nnet::HeadKind::softmax) {
        nnet::Matrix mean = nnet::Matrix::Zero(per_pass[0].rows(), per_pass[0].cols());
        for (const auto& p : per_pass) mean += p;
        return mean / T;
    }
    const auto n = per_pass[0].rows();
    nnet::Vector mu = nnet::Vector::Zero(n), second = nnet::Vector::Zero(n);
    for (const auto& p : per_pass) {
        mu += p.col(0);
        second += (p.col(1).array() + p.col(0).array().square()).matrix();
    }
    mu /= T;
    second /= T;
    nnet::Matrix out(n, 2);
    out.col(0) = mu;
    out.col(1) = (second.array() - mu.array().square()).max(0.0).matrix();
    return out;
}

StochasticOutput stochastic_predict(const nnet::NeuralHierarchy& h, const structure::GgtNode& root,
                                    const nnet::Matrix& inputs, const SamplingConfig& config) {
    config.validate();
    StochasticOutput out;
    for (int t = 0; t < config.passes; ++t) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
        auto sel = sample_selection(root, config.mode, config.gamma, rng);
        out.per_pass.push_back(head_to_predictive(h, nnet::forward(h, sel.choices, inputs, nnet::Mode::eval)));
        out.selections.push_back(std::move(sel.choices));
    }
    out.mean = average_passes(h, out.per_pass);
    return out;
}

}  // namespace brainet::sampling
