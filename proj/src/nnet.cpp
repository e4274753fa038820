#include "brainet/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

namespace brainet::nnet {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

bool is_group(const std::string& src) { return src.rfind("group:", 0) == 0; }
bool is_gather(const std::string& src) { return src.rfind("gather:", 0) == 0; }
std::string source_key(const std::string& src) { return src.substr(src.find(':') + 1); }

const Group& group_of(const NeuralHierarchy& h, const std::string& src) {
    auto it = h.groups.find(source_key(src));
    if (it == h.groups.end()) throw ContractError("unknown group " + src);
    return it->second;
}

const Gather& gather_of(const NeuralHierarchy& h, const std::string& src) {
    auto it = h.gathers.find(source_key(src));
    if (it == h.gathers.end()) throw ContractError("unknown gather " + src);
    return it->second;
}

int chosen_branch(const Choices& choices, const Group& g) {
    auto it = choices.find(g.node_id);
    if (it == choices.end()) throw ContractError("selection has no choice for site " + g.node_id);
    if (it->second < 0 || static_cast<std::size_t>(it->second) >= g.container_ids.size()) {
        throw ContractError("selection picks a missing branch at site " + g.node_id);
    }
    return it->second;
}

std::vector<double> softmax_weights(const std::vector<double>& scores, double gamma) {
    const double top = *std::max_element(scores.begin(), scores.end());
    std::vector<double> w(scores.size());
    double total = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) total += (w[i] = std::exp((scores[i] - top) / gamma));
    for (auto& x : w) x /= total;
    return w;
}

struct LayerTape {
    const Layer* layer = nullptr;
    Matrix input, xhat, out;
    Eigen::RowVectorXd mean, var, inv_std;
};

struct Pass {
    const NeuralHierarchy& h;
    const Matrix& inputs;
    Mode mode;
    const Choices* choices = nullptr;                              // selection mode
    const std::map<std::string, std::vector<double>>* mix = nullptr;  // simultaneous mode
    std::map<std::string, Matrix> cache;
    std::vector<LayerTape> tape;

    Matrix source(const std::string& src) {
        if (auto it = cache.find(src); it != cache.end()) return it->second;
        Matrix out;
        if (is_gather(src)) {
            const auto& g = gather_of(h, src);
            out.resize(inputs.rows(), static_cast<Eigen::Index>(g.columns.size()));
            for (std::size_t j = 0; j < g.columns.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = inputs.col(g.columns[j]);
        } else {
            const auto& g = group_of(h, src);
            if (mix != nullptr) {
                const auto& w = mix->at(g.node_id);
                out = Matrix::Zero(inputs.rows(), g.width);
                for (std::size_t t = 0; t < g.container_ids.size(); ++t) out += w[t] * container(h.containers.at(g.container_ids[t]));
            } else {
                out = container(h.containers.at(g.container_ids[static_cast<std::size_t>(chosen_branch(*choices, g))]));
            }
        }
        cache.emplace(src, out);
        return out;
    }

    Matrix container(const Container& c) {
        std::vector<Matrix> parts;
        Eigen::Index width = 0;
        for (const auto& id : c.layer_ids) {
            parts.push_back(layer(h.layers.at(id)));
            width += parts.back().cols();
        }
        Matrix out(inputs.rows(), width);
        Eigen::Index off = 0;
        for (auto& p : parts) {
            out.middleCols(off, p.cols()) = p;
            off += p.cols();
        }
        return out;
    }

    Matrix concat(const std::vector<std::string>& sources) {
        std::vector<Matrix> parts;
        Eigen::Index width = 0;
        for (const auto& s : sources) {
            parts.push_back(source(s));
            width += parts.back().cols();
        }
        Matrix out(inputs.rows(), width);
        Eigen::Index off = 0;
        for (auto& p : parts) {
            out.middleCols(off, p.cols()) = p;
            off += p.cols();
        }
        return out;
    }

    Matrix layer(const Layer& L) {
        LayerTape t;
        t.layer = &L;
        t.input = concat(L.incoming);
        Matrix z = (t.input * L.weight.transpose()).rowwise() + L.bias.transpose();
        if (mode == Mode::train) {
            t.mean = z.colwise().mean();
            t.var = (z.rowwise() - t.mean).array().square().colwise().mean();
        } else {
            t.mean = L.running_mean.transpose();
            t.var = L.running_var.transpose();
        }
        t.inv_std = (t.var.array() + kBatchNormEps).rsqrt();
        t.xhat = (z.rowwise() - t.mean).array().rowwise() * t.inv_std.array();
        Matrix y = (t.xhat.array().rowwise() * L.gamma.transpose().array()).rowwise() + L.beta.transpose().array();
        t.out = y.cwiseMax(0.0);
        Matrix out = t.out;
        tape.push_back(std::move(t));
        return out;
    }

    // Returns head input and head output.
    std::pair<Matrix, Matrix> head() {
        Matrix hin = concat(h.head.incoming);
        Matrix raw = (hin * h.head.weight.transpose()).rowwise() + h.head.bias.transpose();
        if (h.head.spec.kind == HeadKind::softmax) {
            Eigen::VectorXd top = raw.rowwise().maxCoeff();
            Matrix shifted = raw.colwise() - top;
            Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log();
            raw = shifted.colwise() - lse;
        }
        return {hin, raw};
    }
};

void check_inputs(const NeuralHierarchy& h, const Matrix& inputs) {
    if (inputs.cols() != h.input_width) {
        throw ContractError("input width " + std::to_string(inputs.cols()) + " does not match network input width " +
                            std::to_string(h.input_width));
    }
}

void check_loss(const NeuralHierarchy& h, Loss loss) {
    const bool ok = (loss == Loss::cross_entropy) == (h.head.spec.kind == HeadKind::softmax);
    if (!ok) throw ContractError("loss does not match head kind");
}

double batch_loss(const Matrix& out, std::span<const double> targets, Loss loss, Matrix* grad) {
    const auto n = out.rows();
    if (static_cast<std::size_t>(n) != targets.size()) throw ContractError("target count does not match batch size");
    double total = 0.0;
    if (grad != nullptr) grad->setZero(out.rows(), out.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (loss == Loss::cross_entropy) {
            const auto k = static_cast<Eigen::Index>(std::llround(targets[static_cast<std::size_t>(i)]));
            if (k < 0 || k >= out.cols()) throw ContractError("class target out of range");
            total -= out(i, k);
            if (grad != nullptr) {
                grad->row(i) = out.row(i).array().exp() / double(n);
                (*grad)(i, k) -= 1.0 / double(n);
            }
        } else {
            const double mu = out(i, 0);
            const double s = out(i, 1);
            const double r = targets[static_cast<std::size_t>(i)] - mu;
            const double inv = std::exp(-s);
            total += 0.5 * (s + r * r * inv + kLog2Pi);
            if (grad != nullptr) {
                (*grad)(i, 0) = -r * inv / double(n);
                (*grad)(i, 1) = 0.5 * (1.0 - r * r * inv) / double(n);
            }
        }
    }
    return total / double(n);
}

struct Backprop {
    Gradients grads;
    std::vector<LayerTape> tape;
};

Backprop backprop(const NeuralHierarchy& h, const Choices& choices, const Matrix& inputs, std::span<const double> targets,
                  Loss loss, Mode mode) {
    check_inputs(h, inputs);
    check_loss(h, loss);
    Pass pass{h, inputs, mode, &choices, nullptr, {}, {}};
    auto [hin, out] = pass.head();
    Matrix dout;
    Backprop bp;
    bp.grads.loss = batch_loss(out, targets, loss, &dout);
    bp.grads.head_weight = dout.transpose() * hin;
    bp.grads.head_bias = dout.colwise().sum().transpose();

    std::map<std::string, Matrix> group_grad;
    auto distribute = [&](const std::vector<std::string>& sources, const Matrix& dinput) {
        Eigen::Index off = 0;
        for (const auto& s : sources) {
            const int w = h.source_width(s);
            if (is_group(s)) {
                auto [it, fresh] = group_grad.try_emplace(source_key(s), Matrix::Zero(dinput.rows(), w));
                it->second += dinput.middleCols(off, w);
            }
            off += w;
        }
    };
    distribute(h.head.incoming, dout * h.head.weight);

    for (auto it = pass.tape.rbegin(); it != pass.tape.rend(); ++it) {
        const Layer& L = *it->layer;
        const Container& c = h.containers.at(L.container_id);
        Eigen::Index off = 0;
        for (const auto& id : c.layer_ids) {
            if (id == L.id) break;
            off += h.layers.at(id).width;
        }
        const Matrix& gg = group_grad.at(L.node_id);
        Matrix dy = gg.middleCols(off, L.width).array() * (it->out.array() > 0.0).cast<double>();
        LayerGrad lg;
        lg.gamma = (dy.array() * it->xhat.array()).colwise().sum().transpose();
        lg.beta = dy.colwise().sum().transpose();
        Matrix dxhat = dy.array().rowwise() * L.gamma.transpose().array();
        Matrix dz;
        if (mode == Mode::train) {
            const double n = double(dxhat.rows());
            Eigen::RowVectorXd mean_d = dxhat.colwise().sum() / n;
            Eigen::RowVectorXd mean_dx = (dxhat.array() * it->xhat.array()).colwise().sum() / n;
            Matrix centered = (dxhat.rowwise() - mean_d) - Matrix(it->xhat.array().rowwise() * mean_dx.array());
            dz = centered.array().rowwise() * it->inv_std.array();
        } else {
            dz = dxhat.array().rowwise() * it->inv_std.array();
        }
        lg.weight = dz.transpose() * it->input;
        lg.bias = dz.colwise().sum().transpose();
        distribute(L.incoming, dz * L.weight);
        bp.grads.layers[L.id] = std::move(lg);
    }
    bp.tape = std::move(pass.tape);
    return bp;
}

void collect_selected(const NeuralHierarchy& h, const Choices& choices, const std::string& src, std::set<std::string>& out) {
    if (!is_group(src)) return;
    const auto& g = group_of(h, src);
    const auto& c = h.containers.at(g.container_ids[static_cast<std::size_t>(chosen_branch(choices, g))]);
    for (const auto& id : c.layer_ids) {
        if (!out.insert(id).second) continue;
        for (const auto& s : h.layers.at(id).incoming) collect_selected(h, choices, s, out);
    }
}

std::set<std::string> selected_layers(const NeuralHierarchy& h, const Choices& choices) {
    std::set<std::string> out;
    for (const auto& s : h.head.incoming) collect_selected(h, choices, s, out);
    return out;
}

template <typename M>
void adam(M& param, const M& grad, M& m, M& v, const OptimizerState& opt, long step) {
    if (m.size() != param.size()) {
        m = M::Zero(param.rows(), param.cols());
        v = M::Zero(param.rows(), param.cols());
    }
    m = opt.beta1 * m + (1.0 - opt.beta1) * grad;
    v = opt.beta2 * v + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(opt.beta1, double(step));
    const double c2 = 1.0 - std::pow(opt.beta2, double(step));
    param.array() -= opt.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opt.eps);
}

// --- JSON helpers ----------------------------------------------------------

nlohmann::json matrix_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw SchemaError("matrix data size mismatch");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const nlohmann::json& j) {
    const auto data = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace

int WidthPolicy::layer_width(int /*depth*/, int /*fan_in*/) const {
    return std::max(1, static_cast<int>(std::lround(base * multiplier)));
}

int NeuralHierarchy::source_width(const std::string& source) const {
    if (is_gather(source)) return static_cast<int>(gather_of(*this, source).columns.size());
    return group_of(*this, source).width;
}

std::size_t NeuralHierarchy::parameter_count() const {
    std::size_t n = static_cast<std::size_t>(head.weight.size() + head.bias.size());
    for (const auto& [id, L] : layers) n += static_cast<std::size_t>(L.weight.size() + L.bias.size() + L.gamma.size() + L.beta.size());
    return n;
}

std::size_t NeuralHierarchy::parameter_count(const Choices& choices) const {
    std::size_t n = static_cast<std::size_t>(head.weight.size() + head.bias.size());
    for (const auto& id : selected_layers(*this, choices)) {
        const auto& L = layers.at(id);
        n += static_cast<std::size_t>(L.weight.size() + L.bias.size() + L.gamma.size() + L.beta.size());
    }
    return n;
}

std::vector<std::string> NeuralHierarchy::topological_order() const {
    std::vector<std::string> order;
    std::set<std::string> done;
    std::function<void(const std::string&)> visit = [&](const std::string& src) {
        if (!is_group(src)) return;
        const auto& g = group_of(*this, src);
        for (const auto& cid : g.container_ids) {
            for (const auto& lid : containers.at(cid).layer_ids) {
                if (done.count(lid)) continue;
                for (const auto& s : layers.at(lid).incoming) visit(s);
                done.insert(lid);
                order.push_back(lid);
            }
        }
    };
    for (const auto& s : head.incoming) visit(s);
    return order;
}

NeuralHierarchy build_network(const structure::GgtNode& root, const WidthPolicy& width, const HeadSpec& head,
                              int input_width, const std::vector<int>& extra_columns) {
    NeuralHierarchy h;
    h.input_width = input_width;

    auto make_gather = [&](const std::vector<int>& cols) {
        std::string id = "g[";
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (cols[i] < 0 || cols[i] >= input_width) {
                throw ContractError("leaf variable " + std::to_string(cols[i]) + " is not an input column");
            }
            id += (i ? "," : "") + std::to_string(cols[i]);
        }
        id += "]";
        h.gathers.try_emplace(id, Gather{id, cols});
        return "gather:" + id;
    };

    std::function<std::string(const structure::GgtNode&, int)> build = [&](const structure::GgtNode& node, int depth) {
        if (node.is_leaf()) return make_gather(node.variables);
        Group g;
        g.node_id = node.id;
        g.depth = depth;
        int max_layers = 1;
        for (const auto& br : node.branches) max_layers = std::max<int>(max_layers, static_cast<int>(br.ancestor_children.size()));
        const int per_layer = width.layer_width(depth, 0);
        g.width = per_layer * max_layers;
        for (const auto& br : node.branches) {
            Container c;
            c.id = br.container_id;
            c.node_id = node.id;
            c.branch_index = br.branch_index;
            std::vector<std::string> anc;
            for (const auto& a : br.ancestor_children) {
                anc.push_back(build(a, depth + 1));
                c.children.push_back({anc.back(), a.is_leaf(), a.is_leaf() ? a.score : 0.0});
            }
            const std::string desc = build(br.descendant_child, depth + 1);
            c.children.push_back({desc, br.descendant_child.is_leaf(), br.descendant_child.is_leaf() ? br.descendant_child.score : 0.0});
            const int m = std::max<int>(1, static_cast<int>(anc.size()));
            for (int i = 0; i < m; ++i) {
                Layer L;
                L.id = c.id + ":L" + std::to_string(i);
                L.node_id = node.id;
                L.container_id = c.id;
                L.branch_index = br.branch_index;
                L.width = g.width / m + (i < g.width % m ? 1 : 0);
                if (!anc.empty()) L.incoming.push_back(anc[static_cast<std::size_t>(i)]);
                L.incoming.push_back(desc);
                c.layer_ids.push_back(L.id);
                h.layers.emplace(L.id, std::move(L));
            }
            g.container_ids.push_back(c.id);
            h.containers.emplace(c.id, std::move(c));
        }
        std::string key = g.node_id;
        h.groups.emplace(key, std::move(g));
        return "group:" + key;
    };

    h.root_source = build(root, 0);
    h.head.spec = head;
    h.head.incoming.push_back(h.root_source);
    if (!extra_columns.empty()) h.head.incoming.push_back(make_gather(extra_columns));

    for (auto& [id, L] : h.layers) {
        int fan_in = 0;
        for (const auto& s : L.incoming) fan_in += h.source_width(s);
        L.weight = Matrix::Zero(L.width, fan_in);
        L.bias = Vector::Zero(L.width);
        L.gamma = Vector::Ones(L.width);
        L.beta = Vector::Zero(L.width);
        L.running_mean = Vector::Zero(L.width);
        L.running_var = Vector::Ones(L.width);
    }
    int head_in = 0;
    for (const auto& s : h.head.incoming) head_in += h.source_width(s);
    h.head.weight = Matrix::Zero(head.outputs(), head_in);
    h.head.bias = Vector::Zero(head.outputs());

    // recorded branch scores r_t at gamma = 1
    std::function<double(const std::string&)> value = [&](const std::string& src) -> double {
        const auto& g = h.groups.at(source_key(src));
        std::vector<double> r;
        for (const auto& cid : g.container_ids) {
            auto& c = h.containers.at(cid);
            double total = 0.0;
            for (const auto& ch : c.children) total += ch.leaf ? ch.leaf_score : value(ch.source);
            c.score = total;
            r.push_back(total);
        }
        const double top = *std::max_element(r.begin(), r.end());
        double acc = 0.0;
        for (double x : r) acc += std::exp(x - top);
        return top + std::log(acc);
    };
    if (is_group(h.root_source)) value(h.root_source);
    return h;
}

void initialize(NeuralHierarchy& h, std::uint64_t seed) {
    for (auto& [id, L] : h.layers) {
        Rng rng(derive_seed(seed, id));
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / std::max<Eigen::Index>(1, L.weight.cols())));
        for (Eigen::Index i = 0; i < L.weight.size(); ++i) L.weight.data()[i] = normal(rng);
        L.bias.setZero();
        L.gamma.setOnes();
        L.beta.setZero();
        L.running_mean.setZero();
        L.running_var.setOnes();
    }
    Rng rng(derive_seed(seed, "head"));
    std::normal_distribution<double> normal(0.0, std::sqrt(1.0 / std::max<Eigen::Index>(1, h.head.weight.cols())));
    for (Eigen::Index i = 0; i < h.head.weight.size(); ++i) h.head.weight.data()[i] = normal(rng);
    h.head.bias.setZero();
}

void fit_normalization(NeuralHierarchy& h, const Matrix& inputs, std::span<const double> targets) {
    check_inputs(h, inputs);
    h.feature_mean = inputs.colwise().mean().transpose();
    h.feature_scale.resize(inputs.cols());
    for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
        const double sd = std::sqrt((inputs.col(j).array() - h.feature_mean(j)).square().mean());
        h.feature_scale(j) = sd > 1e-12 ? sd : 1.0;
    }
    if (!targets.empty()) {
        const double n = double(targets.size());
        h.target_mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
        double ss = 0.0;
        for (double t : targets) ss += (t - h.target_mean) * (t - h.target_mean);
        const double sd = std::sqrt(ss / n);
        h.target_scale = sd > 1e-12 ? sd : 1.0;
    }
}

Matrix prepare_inputs(const NeuralHierarchy& h, const Matrix& raw_inputs) {
    check_inputs(h, raw_inputs);
    if (h.feature_mean.size() == 0) return raw_inputs;
    return (raw_inputs.rowwise() - h.feature_mean.transpose()).array().rowwise() / h.feature_scale.transpose().array();
}

Matrix forward(const NeuralHierarchy& h, const Choices& choices, const Matrix& inputs, Mode mode) {
    check_inputs(h, inputs);
    Pass pass{h, inputs, mode, &choices, nullptr, {}, {}};
    return pass.head().second;
}

std::map<std::string, std::vector<double>> simultaneous_weights(const NeuralHierarchy& h, double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("gamma must be finite and positive");
    std::map<std::string, std::vector<double>> weights;
    std::function<double(const std::string&)> value = [&](const std::string& node_id) -> double {
        const auto& g = h.groups.at(node_id);
        std::vector<double> r;
        for (const auto& cid : g.container_ids) {
            double total = 0.0;
            for (const auto& ch : h.containers.at(cid).children) total += ch.leaf ? ch.leaf_score : value(source_key(ch.source));
            r.push_back(total);
        }
        weights[node_id] = softmax_weights(r, gamma);
        const double top = *std::max_element(r.begin(), r.end());
        double acc = 0.0;
        for (double x : r) acc += std::exp((x - top) / gamma);
        return top + gamma * std::log(acc);
    };
    for (const auto& [id, g] : h.groups) {
        if (!weights.count(id)) value(id);
    }
    return weights;
}

Matrix forward_simultaneous(const NeuralHierarchy& h, const Matrix& inputs, double gamma) {
    check_inputs(h, inputs);
    const auto weights = simultaneous_weights(h, gamma);
    Pass pass{h, inputs, Mode::eval, nullptr, &weights, {}, {}};
    return pass.head().second;
}

double loss_value(const NeuralHierarchy& h, const Choices& choices, const Matrix& inputs, std::span<const double> targets,
                  Loss loss, Mode mode) {
    check_loss(h, loss);
    return batch_loss(forward(h, choices, inputs, mode), targets, loss, nullptr);
}

Gradients compute_gradients(const NeuralHierarchy& h, const Choices& choices, const Matrix& inputs,
                            std::span<const double> targets, Loss loss, Mode mode) {
    return backprop(h, choices, inputs, targets, loss, mode).grads;
}

std::vector<double*> parameter_refs(NeuralHierarchy& h, const Choices& choices) {
    std::vector<double*> refs;
    auto add = [&](auto& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) refs.push_back(m.data() + i);
    };
    for (const auto& id : selected_layers(h, choices)) {
        auto& L = h.layers.at(id);
        add(L.weight);
        add(L.bias);
        add(L.gamma);
        add(L.beta);
    }
    add(h.head.weight);
    add(h.head.bias);
    return refs;
}

std::vector<double> flatten(const Gradients& g, const NeuralHierarchy& h, const Choices& choices) {
    std::vector<double> out;
    auto add = [&](const auto& m) { out.insert(out.end(), m.data(), m.data() + m.size()); };
    for (const auto& id : selected_layers(h, choices)) {
        const auto& lg = g.layers.at(id);
        add(lg.weight);
        add(lg.bias);
        add(lg.gamma);
        add(lg.beta);
    }
    add(g.head_weight);
    add(g.head_bias);
    return out;
}

double train_step(NeuralHierarchy& h, const Choices& choices, const Matrix& inputs, std::span<const double> targets,
                  Loss loss, OptimizerState& opt, std::size_t batch_index) {
    auto bp = backprop(h, choices, inputs, targets, loss, Mode::train);
    if (!std::isfinite(bp.grads.loss)) throw Error("non-finite loss at batch " + std::to_string(batch_index));
    for (auto& [id, lg] : bp.grads.layers) {
        auto& L = h.layers.at(id);
        auto& slot = opt.slots[id];
        ++slot.step;
        adam(L.weight, lg.weight, slot.m_w, slot.v_w, opt, slot.step);
        adam(L.bias, lg.bias, slot.m_b, slot.v_b, opt, slot.step);
        adam(L.gamma, lg.gamma, slot.m_g, slot.v_g, opt, slot.step);
        adam(L.beta, lg.beta, slot.m_beta, slot.v_beta, opt, slot.step);
    }
    auto& hs = opt.slots["head"];
    ++hs.step;
    adam(h.head.weight, bp.grads.head_weight, hs.m_w, hs.v_w, opt, hs.step);
    adam(h.head.bias, bp.grads.head_bias, hs.m_b, hs.v_b, opt, hs.step);
    for (const auto& t : bp.tape) {
        auto& L = h.layers.at(t.layer->id);
        L.running_mean = kBatchNormMomentum * L.running_mean + (1.0 - kBatchNormMomentum) * t.mean.transpose();
        L.running_var = kBatchNormMomentum * L.running_var + (1.0 - kBatchNormMomentum) * t.var.transpose();
    }
    return bp.grads.loss;
}

nlohmann::json to_json(const NeuralHierarchy& h) {
    nlohmann::json doc;
    doc["format"] = "brainet-network";
    doc["version"] = kCheckpointFormatVersion;
    doc["input_width"] = h.input_width;
    doc["root"] = h.root_source;
    nlohmann::json gathers = nlohmann::json::object();
    for (const auto& [id, g] : h.gathers) gathers[id] = g.columns;
    doc["gathers"] = gathers;
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [id, g] : h.groups) groups[id] = {{"depth", g.depth}, {"width", g.width}, {"containers", g.container_ids}};
    doc["groups"] = groups;
    nlohmann::json containers = nlohmann::json::object();
    for (const auto& [id, c] : h.containers) {
        nlohmann::json kids = nlohmann::json::array();
        for (const auto& ch : c.children) kids.push_back({{"source", ch.source}, {"leaf", ch.leaf}, {"leaf_score", ch.leaf_score}});
        containers[id] = {{"node", c.node_id}, {"t", c.branch_index}, {"layers", c.layer_ids}, {"children", kids}, {"score", c.score}};
    }
    doc["containers"] = containers;
    nlohmann::json layers = nlohmann::json::object();
    for (const auto& [id, L] : h.layers) {
        layers[id] = {{"node", L.node_id},
                      {"container", L.container_id},
                      {"t", L.branch_index},
                      {"width", L.width},
                      {"incoming", L.incoming},
                      {"weight", matrix_json(L.weight)},
                      {"bias", vector_json(L.bias)},
                      {"gamma", vector_json(L.gamma)},
                      {"beta", vector_json(L.beta)},
                      {"running_mean", vector_json(L.running_mean)},
                      {"running_var", vector_json(L.running_var)}};
    }
    doc["layers"] = layers;
    doc["head"] = {{"kind", h.head.spec.kind == HeadKind::softmax ? "softmax" : "gaussian"},
                   {"classes", h.head.spec.class_count},
                   {"incoming", h.head.incoming},
                   {"weight", matrix_json(h.head.weight)},
                   {"bias", vector_json(h.head.bias)}};
    doc["normalization"] = {{"feature_mean", vector_json(h.feature_mean)},
                            {"feature_scale", vector_json(h.feature_scale)},
                            {"target_mean", h.target_mean},
                            {"target_scale", h.target_scale}};
    return doc;
}

NeuralHierarchy hierarchy_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("format") != "brainet-network") throw SchemaError("not a brainet network checkpoint");
        if (doc.at("version").get<int>() != kCheckpointFormatVersion) throw SchemaError("unsupported checkpoint version");
        NeuralHierarchy h;
        h.input_width = doc.at("input_width").get<int>();
        h.root_source = doc.at("root").get<std::string>();
        for (const auto& [id, cols] : doc.at("gathers").items()) h.gathers[id] = Gather{id, cols.get<std::vector<int>>()};
        for (const auto& [id, g] : doc.at("groups").items()) {
            h.groups[id] = Group{id, g.at("depth").get<int>(), g.at("width").get<int>(), g.at("containers").get<std::vector<std::string>>()};
        }
        for (const auto& [id, c] : doc.at("containers").items()) {
            Container ct;
            ct.id = id;
            ct.node_id = c.at("node").get<std::string>();
            ct.branch_index = c.at("t").get<int>();
            ct.layer_ids = c.at("layers").get<std::vector<std::string>>();
            for (const auto& ch : c.at("children")) {
                ct.children.push_back({ch.at("source").get<std::string>(), ch.at("leaf").get<bool>(), ch.at("leaf_score").get<double>()});
            }
            ct.score = c.at("score").get<double>();
            h.containers[id] = std::move(ct);
        }
        for (const auto& [id, l] : doc.at("layers").items()) {
            Layer L;
            L.id = id;
            L.node_id = l.at("node").get<std::string>();
            L.container_id = l.at("container").get<std::string>();
            L.branch_index = l.at("t").get<int>();
            L.width = l.at("width").get<int>();
            L.incoming = l.at("incoming").get<std::vector<std::string>>();
            L.weight = matrix_from(l.at("weight"));
            L.bias = vector_from(l.at("bias"));
            L.gamma = vector_from(l.at("gamma"));
            L.beta = vector_from(l.at("beta"));
            L.running_mean = vector_from(l.at("running_mean"));
            L.running_var = vector_from(l.at("running_var"));
            h.layers[id] = std::move(L);
        }
        const auto& hd = doc.at("head");
        h.head.spec.kind = hd.at("kind") == "softmax" ? HeadKind::softmax : HeadKind::gaussian;
        h.head.spec.class_count = hd.at("classes").get<int>();
        h.head.incoming = hd.at("incoming").get<std::vector<std::string>>();
        h.head.weight = matrix_from(hd.at("weight"));
        h.head.bias = vector_from(hd.at("bias"));
        const auto& nm = doc.at("normalization");
        h.feature_mean = vector_from(nm.at("feature_mean"));
        h.feature_scale = vector_from(nm.at("feature_scale"));
        h.target_mean = nm.at("target_mean").get<double>();
        h.target_scale = nm.at("target_scale").get<double>();
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("network checkpoint: ") + e.what());
    }
}

}  // namespace brainet::nnet
