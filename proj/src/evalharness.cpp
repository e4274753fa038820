#include "brainet/evalharness.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>

namespace brainet::eval {

namespace {

struct Counts {
    double tp, fp;
};

// (tp, fp) after accepting every score >= each distinct threshold, highest first.
std::vector<Counts> sweep(const ScoredBinaryOutcomes& o) {
    std::vector<std::size_t> idx(o.scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return o.scores[a] > o.scores[b]; });
    std::vector<Counts> out;
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        (o.positives[idx[i]] ? tp : fp) += 1;
        if (i + 1 == idx.size() || o.scores[idx[i + 1]] != o.scores[idx[i]]) out.push_back({tp, fp});
    }
    return out;
}

double count_positives(const ScoredBinaryOutcomes& o) {
    return static_cast<double>(std::count(o.positives.begin(), o.positives.end(), true));
}

}  // namespace

void ScoredBinaryOutcomes::validate() const {
    if (scores.size() != positives.size()) throw ContractError("scores and outcomes differ in length");
    const auto p = std::count(positives.begin(), positives.end(), true);
    if (p == 0 || p == static_cast<std::ptrdiff_t>(positives.size())) {
        throw ContractError("ranking metrics need at least one positive and one negative");
    }
    for (double s : scores) {
        if (std::isnan(s)) throw ContractError("score is NaN");
    }
}

double roc_auc(const ScoredBinaryOutcomes& o) {
    o.validate();
    const std::size_t n = o.scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return o.scores[a] < o.scores[b]; });
    double rank_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && o.scores[idx[j]] == o.scores[idx[i]]) ++j;
        const double avg_rank = 0.5 * double(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (o.positives[idx[k]]) rank_sum += avg_rank;
        }
        i = j;
    }
    const double p = count_positives(o);
    const double q = double(n) - p;
    return (rank_sum - p * (p + 1) / 2.0) / (p * q);
}

double pr_auc(const ScoredBinaryOutcomes& o, bool flagged_positive) {
    o.validate();
    if (!flagged_positive) {
        ScoredBinaryOutcomes flipped;
        for (std::size_t i = 0; i < o.scores.size(); ++i) {
            flipped.scores.push_back(-o.scores[i]);
            flipped.positives.push_back(!o.positives[i]);
        }
        return pr_auc(flipped, true);
    }
    const double p = count_positives(o);
    double ap = 0.0, prev_recall = 0.0;
    for (const auto& c : sweep(o)) {
        const double recall = c.tp / p;
        ap += (recall - prev_recall) * (c.tp / (c.tp + c.fp));
        prev_recall = recall;
    }
    return ap;
}

double fpr_at_tpr(const ScoredBinaryOutcomes& o, double tpr_target) {
    o.validate();
    const double p = count_positives(o);
    const double q = double(o.scores.size()) - p;
    double best = 1.0;
    for (const auto& c : sweep(o)) {
        if (c.tp / p >= tpr_target - 1e-12) best = std::min(best, c.fp / q);
    }
    return best;
}

double detection_error(const ScoredBinaryOutcomes& o) {
    o.validate();
    const double p = count_positives(o);
    const double q = double(o.scores.size()) - p;
    double best = 0.5;  // reject everything
    for (const auto& c : sweep(o)) best = std::min(best, 0.5 * (1.0 - c.tp / p) + 0.5 * (c.fp / q));
    return best;
}

nlohmann::json ranking_metrics(const ScoredBinaryOutcomes& o) {
    return {{"roc_auc", roc_auc(o)},
            {"pr_auc_in", pr_auc(o, false)},
            {"pr_auc_out", pr_auc(o, true)},
            {"fpr_at_tpr95", fpr_at_tpr(o, 0.95)},
            {"detection_error", detection_error(o)}};
}

// --- synthetic data --------------------------------------------------------

std::vector<int> BayesNet::topological_order() const {
    const int n = size();
    std::vector<int> order;
    std::vector<char> done(static_cast<std::size_t>(n), 0);
    while (static_cast<int>(order.size()) < n) {
        bool progressed = false;
        for (int v = 0; v < n; ++v) {
            if (done[static_cast<std::size_t>(v)]) continue;
            bool ready = true;
            for (int p : parents[static_cast<std::size_t>(v)]) ready = ready && done[static_cast<std::size_t>(p)];
            if (!ready) continue;
            done[static_cast<std::size_t>(v)] = 1;
            order.push_back(v);
            progressed = true;
        }
        if (!progressed) throw ContractError("network has a directed cycle");
    }
    return order;
}

void BayesNet::validate() const {
    if (cpt.size() != parents.size()) throw ContractError("one conditional table per node required");
    for (std::size_t v = 0; v < parents.size(); ++v) {
        for (int p : parents[v]) {
            if (p < 0 || p >= size() || p == static_cast<int>(v)) throw ContractError("invalid parent id");
        }
        if (cpt[v].size() != (std::size_t{1} << parents[v].size())) throw ContractError("conditional table has wrong size");
    }
    topological_order();
}

BayesNet additive_network(std::vector<std::vector<int>> parents, double low, double high) {
    BayesNet net;
    net.parents = std::move(parents);
    for (const auto& pa : net.parents) {
        const std::size_t q = std::size_t{1} << pa.size();
        std::vector<double> row(q, 0.5);
        if (!pa.empty()) {
            for (std::size_t j = 0; j < q; ++j) {
                row[j] = low + (high - low) * double(std::popcount(j)) / double(pa.size());
            }
        }
        net.cpt.push_back(std::move(row));
    }
    net.validate();
    return net;
}

data::Dataset sample_network(const BayesNet& net, std::size_t n, std::uint64_t seed) {
    net.validate();
    const auto order = net.topological_order();
    const auto c = static_cast<std::size_t>(net.size());
    data::Dataset ds;
    for (std::size_t v = 0; v < c; ++v) ds.column_names.push_back("X" + std::to_string(v));
    ds.cardinalities.assign(c, 2);
    ds.continuous.assign(c, false);
    ds.excluded.assign(c, false);
    ds.values.assign(n * c, 0);
    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t r = 0; r < n; ++r) {
        for (int v : order) {
            std::size_t j = 0;
            for (int p : net.parents[static_cast<std::size_t>(v)]) j = (j << 1) | static_cast<std::size_t>(ds.values[r * c + static_cast<std::size_t>(p)]);
            ds.values[r * c + static_cast<std::size_t>(v)] = unit(rng) < net.cpt[static_cast<std::size_t>(v)][j] ? 1 : 0;
        }
    }
    ds.raw.assign(ds.values.begin(), ds.values.end());
    return ds;
}

BayesNet reference_network(const std::string& name) {
    std::vector<std::vector<int>> parents;
    if (name == "collider") {
        parents = {{}, {}, {0, 1}};
    } else if (name == "chain") {
        parents = {{}, {0}, {1}, {2}};
    } else if (name == "collider-fork") {
        parents = {{}, {}, {0, 1}, {2}, {2}};
    } else if (name == "diamond") {
        parents = {{}, {0}, {0}, {1, 2}, {3}, {4}};
    } else if (name == "asia") {
        // asia, tub, smoke, lung, bronc, either, xray, dysp
        parents = {{}, {0}, {}, {2}, {2}, {1, 3}, {5}, {5, 4}};
    } else {
        throw ContractError("unknown reference network '" + name + "'");
    }
    auto net = additive_network(parents, 0.15, 0.85);
    for (std::size_t v = 0; v < parents.size(); ++v) {
        if (parents[v].size() < 2) continue;
        for (std::size_t j = 0; j < net.cpt[v].size(); ++j) {
            net.cpt[v][j] = double(std::popcount(j)) / double(parents[v].size());
        }
    }
    return net;
}

std::vector<std::string> reference_network_names() { return {"collider", "chain", "collider-fork", "diamond", "asia"}; }

data::Dataset two_moons(std::size_t n, double noise, std::uint64_t seed) {
    data::Dataset ds;
    ds.column_names = {"x0", "x1"};
    ds.cardinalities = {1, 1};
    ds.continuous = {true, true};
    ds.excluded = {false, false};
    ds.values.assign(2 * n, 0);
    ds.class_count = 2;
    Rng rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> jitter(0.0, noise);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i % 2 == 0 ? 0 : 1;
        const double a = angle(rng);
        double x = label == 0 ? std::cos(a) : 1.0 - std::cos(a);
        double y = label == 0 ? std::sin(a) : 0.5 - std::sin(a);
        x += jitter(rng);
        y += jitter(rng);
        ds.raw.push_back(x);
        ds.raw.push_back(y);
        ds.labels.push_back(label);
    }
    return ds;
}

data::Dataset uniform_box(std::size_t n, int dims, double lo, double hi, std::uint64_t seed) {
    if (dims < 1 || !(hi > lo)) throw ContractError("uniform box needs dims >= 1 and hi > lo");
    const auto d = static_cast<std::size_t>(dims);
    data::Dataset ds;
    for (std::size_t j = 0; j < d; ++j) ds.column_names.push_back("x" + std::to_string(j));
    ds.cardinalities.assign(d, 1);
    ds.continuous.assign(d, true);
    ds.excluded.assign(d, false);
    ds.values.assign(n * d, 0);
    Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (std::size_t i = 0; i < n * d; ++i) ds.raw.push_back(u(rng));
    return ds;
}

data::Dataset block_classification(std::size_t n, int blocks, std::uint64_t seed) {
    if (blocks < 1) throw ContractError("need at least one block");
    // per block: chain a -> b -> c, collider c -> s <- e
    std::vector<std::vector<int>> parents;
    for (int b = 0; b < blocks; ++b) {
        const int base = b * kBlockWidth;
        parents.push_back({});
        parents.push_back({base});
        parents.push_back({base + 1});
        parents.push_back({});
        parents.push_back({base + 2, base + 3});
    }
    auto net = additive_network(parents, 0.1, 0.9);
    for (int b = 0; b < blocks; ++b) net.cpt[static_cast<std::size_t>(b * kBlockWidth + 4)] = {0.0, 0.5, 0.5, 1.0};
    auto ds = sample_network(net, n, seed);
    Rng rng(derive_seed(seed, "labels"));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t c = ds.cols();
    ds.class_count = 2;
    for (std::size_t r = 0; r < n; ++r) {
        double logit = 0.0;
        for (int b = 0; b < blocks; ++b) {
            const std::size_t base = r * c + static_cast<std::size_t>(b * kBlockWidth);
            logit += (ds.values[base] ^ ds.values[base + 2]) != 0 ? 1.5 : -1.5;
        }
        ds.labels.push_back(unit(rng) < 1.0 / (1.0 + std::exp(-logit)) ? 1 : 0);
    }
    return ds;
}

// --- training and prediction -----------------------------------------------

nnet::Matrix feature_matrix(const data::Dataset& ds) {
    const auto n = static_cast<Eigen::Index>(ds.rows());
    const auto c = static_cast<Eigen::Index>(ds.cols());
    nnet::Matrix X(n, c);
    for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index j = 0; j < c; ++j)
            X(r, j) = ds.has_raw() ? ds.raw_value(static_cast<std::size_t>(r), static_cast<std::size_t>(j))
                                   : double(ds.value(static_cast<std::size_t>(r), static_cast<std::size_t>(j)));
    return X;
}

nnet::HeadSpec head_for(const data::Dataset& ds) {
    if (ds.has_labels()) {
        const int k = std::max(ds.class_count, *std::max_element(ds.labels.begin(), ds.labels.end()) + 1);
        return {nnet::HeadKind::softmax, std::max(k, 2)};
    }
    if (ds.has_targets()) return {nnet::HeadKind::gaussian, 2};
    throw ContractError("dataset has neither labels nor regression targets");
}

namespace {

std::vector<double> training_targets(const data::Dataset& ds) {
    if (ds.has_labels()) return {ds.labels.begin(), ds.labels.end()};
    return ds.targets;
}

std::vector<int> tree_variables(const structure::GgtNode& root) {
    std::vector<int> vars = root.variables;
    vars.insert(vars.end(), root.exogenous.begin(), root.exogenous.end());
    for (const auto* leaf : structure::leaves(root)) vars.insert(vars.end(), leaf->variables.begin(), leaf->variables.end());
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    return vars;
}

std::vector<int> extra_columns(const structure::GgtNode& root, const data::Dataset& ds) {
    const auto in_tree = tree_variables(root);
    std::vector<int> extra;
    for (int j = 0; j < static_cast<int>(ds.cols()); ++j) {
        if (!std::binary_search(in_tree.begin(), in_tree.end(), j)) extra.push_back(j);
    }
    return extra;
}

uncertainty::PredictiveBatch make_batch(const nnet::NeuralHierarchy& h, std::vector<nnet::Matrix> passes,
                                        const data::Dataset& ds) {
    if (h.head.spec.kind == nnet::HeadKind::softmax) {
        std::vector<double> labels(ds.labels.begin(), ds.labels.end());
        return uncertainty::PredictiveBatch::classification(std::move(passes), std::move(labels));
    }
    return uncertainty::PredictiveBatch::gaussian(std::move(passes), ds.targets);
}

data::Dataset structure_view(const data::Dataset& ds, int bins) {
    const bool any_continuous = std::find(ds.continuous.begin(), ds.continuous.end(), true) != ds.continuous.end();
    return any_continuous ? data::discretize(ds, bins, data::DiscretizeStrategy::equal_frequency) : ds;
}

}  // namespace

Model fit_model(const data::Dataset& train, structure::GgtNode root, const TrainConfig& config) {
    if (config.epochs < 0 || config.batch_size < 2) throw ContractError("epochs must be >= 0 and batch size >= 2");
    Model m;
    m.root = std::move(root);
    const auto head = head_for(train);
    const nnet::Matrix X = feature_matrix(train);
    m.net = nnet::build_network(m.root, config.width, head, static_cast<int>(train.cols()), extra_columns(m.root, train));
    nnet::initialize(m.net, derive_seed(config.seed, "init"));
    auto targets = training_targets(train);
    const bool regression = head.kind == nnet::HeadKind::gaussian;
    nnet::fit_normalization(m.net, X, regression ? std::span<const double>(targets) : std::span<const double>());
    const nnet::Matrix Xn = nnet::prepare_inputs(m.net, X);
    if (regression) {
        for (auto& t : targets) t = (t - m.net.target_mean) / m.net.target_scale;
    }
    const auto loss = regression ? nnet::Loss::gaussian_nll : nnet::Loss::cross_entropy;

    nnet::OptimizerState opt;
    opt.lr = config.lr;
    Rng rng(derive_seed(config.seed, "train"));
    const std::size_t n = train.rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    const auto bs = static_cast<std::size_t>(config.batch_size);
    std::size_t batch_index = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t start = 0; start + 1 < n; start += bs) {
            const std::size_t stop = std::min(n, start + bs);
            if (stop - start < 2) break;
            std::vector<Eigen::Index> rows(perm.begin() + static_cast<std::ptrdiff_t>(start),
                                           perm.begin() + static_cast<std::ptrdiff_t>(stop));
            const nnet::Matrix xb = Xn(rows, Eigen::all);
            std::vector<double> yb;
            for (auto r : rows) yb.push_back(targets[static_cast<std::size_t>(r)]);
            const auto sel = sampling::sample_selection(m.root, sampling::SelectionMode::uniform, 1.0, rng);
            nnet::train_step(m.net, sel.choices, xb, yb, loss, opt, batch_index++);
        }
    }
    return m;
}

uncertainty::PredictiveBatch predict_stochastic(const Model& m, const data::Dataset& ds,
                                                const sampling::SamplingConfig& config) {
    const nnet::Matrix X = nnet::prepare_inputs(m.net, feature_matrix(ds));
    auto out = sampling::stochastic_predict(m.net, m.root, X, config);
    return make_batch(m.net, std::move(out.per_pass), ds);
}

uncertainty::PredictiveBatch predict_simultaneous(const Model& m, const data::Dataset& ds, double gamma) {
    const nnet::Matrix X = nnet::prepare_inputs(m.net, feature_matrix(ds));
    auto out = sampling::head_to_predictive(m.net, nnet::forward_simultaneous(m.net, X, gamma));
    return make_batch(m.net, {std::move(out)}, ds);
}

structure::GgtNode stacked_dense_tree(const data::Dataset& ds, int s, int depth) {
    if (s < 1 || depth < 1) throw ContractError("stacked ensemble needs s >= 1 and depth >= 1");
    const auto vars = ds.testable_columns();
    if (vars.empty()) throw ContractError("dataset has no testable columns");
    std::function<structure::GgtNode(const std::string&, int, int)> chain = [&](const std::string& id, int level,
                                                                                 int branches) {
        structure::GgtNode node;
        node.id = id;
        node.variables = vars;
        node.order = level;
        if (level == depth) return node;  // leaf gather
        node.kind = structure::GgtNode::Kind::internal;
        for (int t = 0; t < branches; ++t) {
            structure::BranchRecord br;
            br.branch_index = t;
            br.container_id = id + "/" + std::to_string(t);
            br.cpdag = graph::complete_graph(vars);
            br.cpdag.set_resolution(level);
            br.descendant_child = chain(id + "." + std::to_string(t) + ".d", level + 1, 1);
            node.branches.push_back(std::move(br));
        }
        return node;
    };
    return chain("r", 0, s);
}

structure::GgtNode parentless_tree(const data::Dataset& ds) {
    structure::GgtNode node;
    node.id = "r";
    node.variables = ds.testable_columns();
    if (node.variables.empty()) throw ContractError("dataset has no testable columns");
    return node;
}

nnet::WidthPolicy match_width(const structure::GgtNode& tree, const data::Dataset& ds, std::size_t target) {
    const auto head = head_for(ds);
    const auto extra = extra_columns(tree, ds);
    auto count = [&](int base) {
        return nnet::build_network(tree, nnet::WidthPolicy{base, 1.0}, head, static_cast<int>(ds.cols()), extra).parameter_count();
    };
    int lo = 1, hi = 1;
    while (count(hi) < target && hi < (1 << 16)) hi *= 2;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        (count(mid) < target ? lo : hi) = mid;
    }
    const auto dlo = std::llabs(static_cast<long long>(count(lo)) - static_cast<long long>(target));
    const auto dhi = std::llabs(static_cast<long long>(count(hi)) - static_cast<long long>(target));
    return nnet::WidthPolicy{dlo <= dhi ? lo : hi, 1.0};
}

// --- experiment drivers ----------------------------------------------------

nlohmann::json ExperimentConfig::to_json() const {
    const char* mode = sampling.mode == sampling::SelectionMode::posterior ? "posterior"
                       : sampling.mode == sampling::SelectionMode::uniform ? "uniform"
                                                                           : "argmax";
    return {{"learn",
             {{"s", learn.s},
              {"ci_test", learn.ci.mode == indtest::TestMode::cmi ? "cmi" : "g_test"},
              {"ci_threshold", learn.ci.threshold},
              {"alpha", learn.ci.alpha},
              {"ess", learn.ess},
              {"max_depth", learn.max_depth},
              {"seed", learn.seed},
              {"leaf_rule", learn.leaf_rule == bdeu::ParentRule::surviving ? "surviving" : "parentless"}}},
            {"train",
             {{"epochs", train.epochs},
              {"batch_size", train.batch_size},
              {"lr", train.lr},
              {"width_base", train.width.base},
              {"width_mult", train.width.multiplier},
              {"seed", train.seed}}},
            {"sampling", {{"gamma", sampling.gamma}, {"passes", sampling.passes}, {"mode", mode}, {"seed", sampling.seed}}},
            {"train_fraction", train_fraction},
            {"discretize_bins", discretize_bins},
            {"zero_depth", zero_depth},
            {"match_parameters", match_parameters}};
}

namespace {

AblationRow evaluate_classifier(const Model& m, const data::Dataset& test, const sampling::SamplingConfig& cfg,
                                double threshold) {
    const auto batch = predict_stochastic(m, test, cfg);
    return {threshold, uncertainty::nll(batch), uncertainty::error_rate(batch), uncertainty::brier(batch),
            m.net.parameter_count()};
}

}  // namespace

std::vector<AblationRow> run_ablation(const data::Dataset& dataset, const std::vector<double>& thresholds,
                                      const ExperimentConfig& config) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) throw ContractError("thresholds must be ascending");
    if (!dataset.has_labels()) throw ContractError("ablation needs a classification dataset");
    const auto [train, test] = data::train_test_split(dataset, config.train_fraction, derive_seed(config.learn.seed, "split"));
    const auto discrete = structure_view(train, config.discretize_bins);

    std::vector<AblationRow> rows(thresholds.size());
    std::optional<std::size_t> reference;
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (thresholds[i] <= 0.0) continue;
        auto learn = config.learn;
        learn.ci.threshold = thresholds[i];
        auto model = fit_model(train, structure::learn_structure(discrete, learn), config.train);
        rows[i] = evaluate_classifier(model, test, config.sampling, thresholds[i]);
        if (!reference) reference = rows[i].parameters;
    }
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (thresholds[i] > 0.0) continue;
        auto tree = stacked_dense_tree(discrete, config.learn.s, config.zero_depth);
        auto train_cfg = config.train;
        if (config.match_parameters && reference) train_cfg.width = match_width(tree, train, *reference);
        auto model = fit_model(train, std::move(tree), train_cfg);
        rows[i] = evaluate_classifier(model, test, config.sampling, thresholds[i]);
    }
    return rows;
}

std::vector<UniqueStructuresRow> run_unique_structures_sweep(const data::Dataset& dataset,
                                                             const std::vector<std::size_t>& sizes,
                                                             const ExperimentConfig& config, int seeds) {
    if (!std::is_sorted(sizes.begin(), sizes.end())) throw ContractError("sizes must be ascending");
    if (seeds < 1) throw ContractError("at least one seed required");
    const auto discrete = structure_view(dataset, config.discretize_bins);
    std::vector<UniqueStructuresRow> out;
    for (std::size_t size : sizes) {
        if (size < 1 || size > discrete.rows()) throw ContractError("sweep size exceeds dataset rows");
        UniqueStructuresRow row;
        row.train_size = size;
        for (int k = 0; k < seeds; ++k) {
            const auto key = "sweep/" + std::to_string(size) + "/" + std::to_string(k);
            std::vector<std::size_t> perm(discrete.rows());
            std::iota(perm.begin(), perm.end(), 0);
            Rng rng(derive_seed(config.learn.seed, key));
            std::shuffle(perm.begin(), perm.end(), rng);
            perm.resize(size);
            auto learn = config.learn;
            learn.seed = derive_seed(config.learn.seed, static_cast<std::uint64_t>(k));
            const auto root = structure::learn_structure(data::subset(discrete, perm), learn);
            row.per_seed.push_back(structure::count_unique_structures(root));
        }
        row.unique_structures = std::accumulate(row.per_seed.begin(), row.per_seed.end(), 0.0) / double(seeds);
        out.push_back(std::move(row));
    }
    return out;
}

nlohmann::json ood_metrics(const Model& m, const data::Dataset& id_test, const data::Dataset& ood_test,
                           const sampling::SamplingConfig& config) {
    auto outcomes = [&](const std::vector<double>& id_scores, const std::vector<double>& ood_scores) {
        ScoredBinaryOutcomes o;
        o.scores = id_scores;
        o.scores.insert(o.scores.end(), ood_scores.begin(), ood_scores.end());
        o.positives.assign(id_scores.size(), false);
        o.positives.insert(o.positives.end(), ood_scores.size(), true);
        return ranking_metrics(o);
    };
    auto negate = [](std::vector<double> v) {
        for (auto& x : v) x = -x;
        return v;
    };

    nlohmann::json doc;
    const auto id_s = predict_stochastic(m, id_test, config);
    const auto ood_s = predict_stochastic(m, ood_test, config);
    doc["stochastic"] = {{"max_p", outcomes(negate(uncertainty::max_softmax(id_s)), negate(uncertainty::max_softmax(ood_s)))},
                         {"entropy", outcomes(uncertainty::predictive_entropy(id_s), uncertainty::predictive_entropy(ood_s))},
                         {"mi", outcomes(uncertainty::mutual_information(id_s), uncertainty::mutual_information(ood_s))},
                         {"expected_entropy", outcomes(uncertainty::expected_entropy(id_s), uncertainty::expected_entropy(ood_s))},
                         {"id_error", uncertainty::error_rate(id_s)}};
    // a single output: no disagreement-based scores
    const auto id_m = predict_simultaneous(m, id_test, config.gamma);
    const auto ood_m = predict_simultaneous(m, ood_test, config.gamma);
    doc["simultaneous"] = {{"max_p", outcomes(negate(uncertainty::max_softmax(id_m)), negate(uncertainty::max_softmax(ood_m)))},
                           {"entropy", outcomes(uncertainty::predictive_entropy(id_m), uncertainty::predictive_entropy(ood_m))},
                           {"id_error", uncertainty::error_rate(id_m)}};
    return doc;
}

nlohmann::json run_ood(const data::Dataset& train, const data::Dataset& id_test, const data::Dataset& ood_test,
                       const ExperimentConfig& config) {
    if (!train.has_labels() || !id_test.has_labels()) throw ContractError("OOD evaluation needs labeled in-distribution data");
    if (id_test.cols() != train.cols() || ood_test.cols() != train.cols()) throw ContractError("test sets must match training columns");
    const auto root = structure::learn_structure(structure_view(train, config.discretize_bins), config.learn);
    const auto model = fit_model(train, root, config.train);

    auto doc = ood_metrics(model, id_test, ood_test, config.sampling);
    doc["unique_structures"] = structure::count_unique_structures(root);
    return doc;
}

std::vector<RegressionRow> run_regression(const data::Dataset& dataset, int repeats, const ExperimentConfig& config) {
    if (!dataset.has_targets()) throw ContractError("regression needs a dataset with targets");
    if (repeats < 1) throw ContractError("at least one repeat required");
    std::vector<RegressionRow> out;
    for (int r = 0; r < repeats; ++r) {
        const auto rs = static_cast<std::uint64_t>(r);
        const auto [train, test] = data::train_test_split(dataset, config.train_fraction, derive_seed(config.learn.seed, "split/" + std::to_string(r)));
        auto learn = config.learn;
        learn.seed = derive_seed(config.learn.seed, rs);
        auto train_cfg = config.train;
        train_cfg.seed = derive_seed(config.train.seed, rs);
        auto sampling_cfg = config.sampling;
        sampling_cfg.seed = derive_seed(config.sampling.seed, rs);

        const auto discrete = structure_view(train, config.discretize_bins);
        const auto model = fit_model(train, structure::learn_structure(discrete, learn), train_cfg);
        const auto batch = predict_stochastic(model, test, sampling_cfg);
        const auto base = fit_model(train, parentless_tree(discrete), train_cfg);
        const auto base_batch = predict_stochastic(base, test, sampling_cfg);
        out.push_back({r, uncertainty::rmse(batch), uncertainty::nll(batch), uncertainty::rmse(base_batch),
                       uncertainty::nll(base_batch)});
    }
    return out;
}

// --- tables -----------------------------------------------------------------

nlohmann::json to_json(const std::vector<AblationRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"threshold", r.threshold}, {"nll", r.nll}, {"error", r.error}, {"brier", r.brier}, {"parameters", r.parameters}});
    }
    return out;
}

nlohmann::json to_json(const std::vector<UniqueStructuresRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) out.push_back({{"train_size", r.train_size}, {"unique_structures", r.unique_structures}, {"per_seed", r.per_seed}});
    return out;
}

nlohmann::json to_json(const std::vector<RegressionRow>& rows) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
        out.push_back({{"repeat", r.repeat},
                       {"rmse", r.rmse},
                       {"nll", r.nll},
                       {"baseline_rmse", r.baseline_rmse},
                       {"baseline_nll", r.baseline_nll}});
    }
    return out;
}

std::string to_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream os;
    os.precision(17);
    os << "threshold,nll,error,brier,parameters\n";
    for (const auto& r : rows) os << r.threshold << ',' << r.nll << ',' << r.error << ',' << r.brier << ',' << r.parameters << '\n';
    return os.str();
}

}  // namespace brainet::eval
