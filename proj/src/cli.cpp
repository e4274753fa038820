#include "brainet/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "brainet/evalharness.hpp"

namespace brainet::cli {

namespace {

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path + "'");
    f << text;
}

void write_json(const std::string& path, const nlohmann::json& doc, std::ostream& out) {
    write_text(path, doc.dump(2) + "\n", out);
}

nlohmann::json document(const std::string& format, const RunConfig& cfg) {
    return {{"format", format}, {"version", kOutputFormatVersion}, {"config", cfg.to_json()}};
}

// --- data ------------------------------------------------------------------

enum class Role { fit, evaluate };

data::Dataset benchmark_data(const RunConfig& cfg, Role role) {
    const auto seed = derive_seed(cfg.seed, "benchmark/" + cfg.benchmark + (role == Role::evaluate ? "/eval" : ""));
    if (cfg.benchmark == "two-moons") return eval::two_moons(role == Role::fit ? 1000 : 500, 0.1, seed);
    if (cfg.benchmark == "blocks") return eval::block_classification(2000, 4, derive_seed(cfg.seed, "benchmark/blocks"));
    return eval::sample_network(eval::reference_network(cfg.benchmark), 5000, derive_seed(cfg.seed, "benchmark/" + cfg.benchmark));
}

data::Dataset load_data(const RunConfig& cfg, Role role) {
    data::Dataset ds;
    if (!cfg.benchmark.empty()) {
        ds = benchmark_data(cfg, role);
        if (cfg.benchmark == "two-moons") return ds;  // separate draws already
    } else if (!cfg.labels.empty()) {
        ds = data::load_idx(cfg.data, cfg.labels);
    } else {
        if (cfg.data.empty()) throw ContractError("--data or --benchmark is required");
        data::CsvSchema schema;
        if (!cfg.label_column.empty()) schema.columns[cfg.label_column] = data::ColumnKind::class_label;
        if (!cfg.target_column.empty()) schema.columns[cfg.target_column] = data::ColumnKind::target;
        ds = data::load_csv(cfg.data, schema);
    }
    if (cfg.split > 0.0) {
        auto parts = data::train_test_split(ds, cfg.split, derive_seed(cfg.seed, "split"));
        return role == Role::fit ? std::move(parts.first) : std::move(parts.second);
    }
    return ds;
}

data::Dataset discrete_view(const data::Dataset& ds, const RunConfig& cfg) {
    const bool any = std::find(ds.continuous.begin(), ds.continuous.end(), true) != ds.continuous.end();
    if (!any) return ds;
    return data::discretize(ds, cfg.bins, data::parse_strategy(cfg.discretize));
}

// --- configs ---------------------------------------------------------------

structure::LearnConfig learn_config(const RunConfig& cfg) {
    structure::LearnConfig lc;
    lc.s = cfg.s;
    lc.ci.threshold = cfg.ci_threshold;
    if (cfg.ci_test == "cmi") {
        lc.ci.mode = indtest::TestMode::cmi;
    } else if (cfg.ci_test == "g-test") {
        lc.ci.mode = indtest::TestMode::g_test;
    } else {
        throw ContractError("unknown --ci-test '" + cfg.ci_test + "'");
    }
    lc.ess = cfg.ess;
    lc.max_depth = cfg.max_depth;
    lc.seed = derive_seed(cfg.seed, "learn");
    return lc;
}

eval::TrainConfig train_config(const RunConfig& cfg) {
    eval::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.lr = cfg.lr;
    tc.width = nnet::WidthPolicy{cfg.width, cfg.width_mult};
    tc.seed = derive_seed(cfg.seed, "train");
    return tc;
}

sampling::SamplingConfig sampling_config(const RunConfig& cfg) {
    sampling::SamplingConfig sc;
    sc.gamma = cfg.gamma;
    sc.passes = cfg.passes;
    sc.seed = derive_seed(cfg.seed, "sampling");
    sc.validate();
    return sc;
}

eval::ExperimentConfig experiment_config(const RunConfig& cfg) {
    eval::ExperimentConfig ec;
    ec.learn = learn_config(cfg);
    ec.train = train_config(cfg);
    ec.sampling = sampling_config(cfg);
    if (cfg.split > 0.0) ec.train_fraction = cfg.split;
    ec.discretize_bins = cfg.bins;
    return ec;
}

void check_loss(const RunConfig& cfg, const data::Dataset& ds) {
    if (cfg.loss == "auto") return;
    const auto head = eval::head_for(ds);
    const bool ok = (cfg.loss == "cross-entropy" && head.kind == nnet::HeadKind::softmax) ||
                    (cfg.loss == "gaussian-nll" && head.kind == nnet::HeadKind::gaussian);
    if (!ok) throw ContractError("--loss " + cfg.loss + " does not fit the dataset's targets");
}

structure::GgtNode load_structure(const std::string& path) { return structure::deserialize(read_json(path)); }

eval::Model load_model(const RunConfig& cfg) {
    eval::Model m;
    m.root = load_structure(cfg.structure);
    const auto doc = read_json(cfg.in);
    if (doc.value("format", "") != "brainet-model") throw SchemaError("'" + cfg.in + "' is not a brainet model");
    m.net = nnet::hierarchy_from_json(doc.at("network"));
    return m;
}

uncertainty::PredictiveBatch predict(const eval::Model& m, const data::Dataset& ds, const RunConfig& cfg) {
    if (cfg.mode == "stochastic") return eval::predict_stochastic(m, ds, sampling_config(cfg));
    if (cfg.mode == "simultaneous") return eval::predict_simultaneous(m, ds, cfg.gamma);
    throw ContractError("unknown --mode '" + cfg.mode + "'");
}

nlohmann::json matrix_rows(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
        rows.push_back(row);
    }
    return rows;
}

// --- subcommands -----------------------------------------------------------

void cmd_learn(const RunConfig& cfg, std::ostream& out) {
    const auto ds = discrete_view(load_data(cfg, Role::fit), cfg);
    auto lc = learn_config(cfg);
    std::unique_ptr<std::ofstream> log;
    if (!cfg.ci_log.empty()) {
        log = std::make_unique<std::ofstream>(cfg.ci_log, std::ios::binary);
        if (!*log) throw Error("cannot write '" + cfg.ci_log + "'");
        lc.ci.log = log.get();
    }
    const auto root = structure::learn_structure(ds, lc);
    auto doc = structure::serialize(root);
    doc["config"] = cfg.to_json();
    doc["summary"] = {{"leaves", structure::leaf_count(root)},
                      {"depth", structure::tree_depth(root)},
                      {"unique_structures", structure::count_unique_structures(root)}};
    if (!cfg.dump_cpdag.empty()) {
        auto cp = document("brainet-cpdag", cfg);
        cp["cpdag"] = graph::to_json(structure::learned_cpdag(root, structure::first_branch_choices(root)));
        write_json(cfg.dump_cpdag, cp, out);
    }
    write_json(cfg.out, doc, out);
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    const auto ds = load_data(cfg, Role::fit);
    check_loss(cfg, ds);
    const auto model = eval::fit_model(ds, load_structure(cfg.structure), train_config(cfg));
    auto doc = document("brainet-model", cfg);
    doc["parameters"] = model.net.parameter_count();
    doc["network"] = nnet::to_json(model.net);
    write_json(cfg.out, doc, out);
}

void cmd_predict(const RunConfig& cfg, std::ostream& out) {
    const auto model = load_model(cfg);
    const auto ds = load_data(cfg, Role::evaluate);
    const auto batch = predict(model, ds, cfg);
    if (!cfg.per_pass.empty()) {
        std::ostringstream lines;
        for (std::size_t t = 0; t < batch.per_pass.size(); ++t) {
            lines << nlohmann::json{{"pass", t}, {"outputs", matrix_rows(batch.per_pass[t])}}.dump() << "\n";
        }
        write_text(cfg.per_pass, lines.str(), out);
    }
    auto doc = document("brainet-predictions", cfg);
    doc["kind"] = batch.regression ? "gaussian" : "softmax";
    doc["mean"] = matrix_rows(batch.mean);
    write_json(cfg.out, doc, out);
}

void cmd_eval_calibration(const RunConfig& cfg, std::ostream& out) {
    const auto model = load_model(cfg);
    const auto ds = load_data(cfg, Role::evaluate);
    const auto batch = predict(model, ds, cfg);
    nlohmann::json metrics;
    metrics["nll"] = uncertainty::nll(batch);
    if (batch.regression) {
        metrics["rmse"] = uncertainty::rmse(batch);
    } else {
        metrics["brier"] = uncertainty::brier(batch);
        metrics["ece"] = uncertainty::ece(batch, cfg.ece_bins);
        metrics["error"] = uncertainty::error_rate(batch);
    }
    auto doc = document("brainet-metrics", cfg);
    doc["metrics"] = metrics;
    write_json(cfg.out, doc, out);
}

void cmd_eval_ood(const RunConfig& cfg, std::ostream& out) {
    nlohmann::json metrics;
    if (cfg.benchmark == "two-moons") {
        const auto train = eval::two_moons(1000, 0.1, derive_seed(cfg.seed, "ood/train"));
        const auto id_test = eval::two_moons(500, 0.1, derive_seed(cfg.seed, "ood/id"));
        const auto ood = eval::uniform_box(500, 2, 4.0, 6.0, derive_seed(cfg.seed, "ood/ood"));
        metrics = eval::run_ood(train, id_test, ood, experiment_config(cfg));
    } else if (cfg.benchmark.empty()) {
        if (cfg.ood_data.empty()) throw ContractError("--ood-data is required without --benchmark");
        const auto model = load_model(cfg);
        const auto id_test = load_data(cfg, Role::evaluate);
        const auto ood = data::load_csv(cfg.ood_data);
        metrics = eval::ood_metrics(model, id_test, ood, sampling_config(cfg));
    } else {
        throw ContractError("eval-ood supports --benchmark two-moons only");
    }
    auto doc = document("brainet-metrics", cfg);
    doc["metrics"] = metrics;
    write_json(cfg.out, doc, out);
}

void cmd_ablate(const RunConfig& cfg, std::ostream& out) {
    const auto ds = load_data(cfg, Role::fit);
    auto ec = experiment_config(cfg);
    if (cfg.split > 0.0) ec.train_fraction = 0.8;  // the split already selected the experiment rows
    const auto rows = eval::run_ablation(ds, cfg.thresholds, ec);
    if (!cfg.csv.empty()) write_text(cfg.csv, eval::to_csv(rows), out);
    auto doc = document("brainet-ablation", cfg);
    doc["rows"] = eval::to_json(rows);
    write_json(cfg.out, doc, out);
}

void cmd_sweep(const RunConfig& cfg, std::ostream& out) {
    const auto ds = load_data(cfg, Role::fit);
    const auto rows = eval::run_unique_structures_sweep(ds, cfg.sizes, experiment_config(cfg), cfg.repeats);
    auto doc = document("brainet-sweep", cfg);
    doc["rows"] = eval::to_json(rows);
    write_json(cfg.out, doc, out);
}

void leaf_scores(const structure::GgtNode& node, std::vector<double>& out) {
    if (node.is_leaf()) {
        out.push_back(node.score);
        return;
    }
    for (const auto& b : node.branches) {
        for (const auto& a : b.ancestor_children) leaf_scores(a, out);
        leaf_scores(b.descendant_child, out);
    }
}

nlohmann::json structure_summary(const structure::GgtNode& root) {
    std::vector<double> scores;
    leaf_scores(root, scores);
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    return {{"variables", root.variables},
            {"leaves", structure::leaf_count(root)},
            {"depth", structure::tree_depth(root)},
            {"unique_structures", structure::count_unique_structures(root)},
            {"score_range", {*lo, *hi}}};
}

nlohmann::json network_summary(const nnet::NeuralHierarchy& net) {
    return {{"parameters", net.parameter_count()},
            {"layers", net.layers.size()},
            {"gathers", net.gathers.size()},
            {"groups", net.groups.size()},
            {"input_width", net.input_width}};
}

// --in accepts either document kind.
void cmd_inspect(const RunConfig& cfg, std::ostream& out) {
    if (cfg.structure.empty() && cfg.in.empty()) throw ContractError("inspect needs --in or --structure");
    auto doc = document("brainet-inspect", cfg);
    if (!cfg.structure.empty()) doc["structure"] = structure_summary(load_structure(cfg.structure));
    if (!cfg.in.empty()) {
        const auto in = read_json(cfg.in);
        const auto fmt = in.value("format", "");
        if (fmt == "brainet-model") {
            doc["network"] = network_summary(nnet::hierarchy_from_json(in.at("network")));
        } else if (fmt == "brainet-ggt") {
            doc["structure"] = structure_summary(structure::deserialize(in));
        } else {
            throw SchemaError("'" + cfg.in + "' is neither a structure nor a model document");
        }
    }
    write_json(cfg.out, doc, out);
}

// Output paths may not alias inputs.
void check_paths(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const std::vector<std::string> inputs{cfg.data, cfg.labels, cfg.ood_data, cfg.structure, cfg.in, cfg.config};
    for (const auto* o : {&cfg.out, &cfg.csv, &cfg.per_pass, &cfg.ci_log, &cfg.dump_cpdag}) {
        if (o->empty()) continue;
        for (const auto& i : inputs) {
            if (!i.empty() && fs::exists(i) && fs::exists(*o) && fs::equivalent(i, *o)) {
                throw ContractError("output '" + *o + "' would overwrite input '" + i + "'");
            }
        }
    }
}

// Flags from a JSON config file, placed before the command-line flags so the latter win.
std::vector<std::string> config_flags(const std::string& path) {
    const auto doc = read_json(path);
    if (!doc.is_object()) throw SchemaError("config file must hold a JSON object");
    std::vector<std::string> flags;
    for (const auto& [key, value] : doc.items()) {
        if (key == "config" || key == "subcommand") continue;
        flags.push_back("--" + key);
        if (value.is_array()) {
            for (const auto& v : value) flags.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            flags.push_back(value.is_string() ? value.get<std::string>() : value.dump());
        }
    }
    return flags;
}

}  // namespace

nlohmann::json RunConfig::to_json() const {
    return {{"subcommand", subcommand},
            {"data", data},
            {"labels", labels},
            {"label_column", label_column},
            {"target_column", target_column},
            {"benchmark", benchmark},
            {"ood_data", ood_data},
            {"bins", bins},
            {"discretize", discretize},
            {"split", split},
            {"seed", seed},
            {"s", s},
            {"ci_threshold", ci_threshold},
            {"ci_test", ci_test},
            {"ess", ess},
            {"max_depth", max_depth},
            {"structure", structure},
            {"epochs", epochs},
            {"lr", lr},
            {"width", width},
            {"width_mult", width_mult},
            {"batch_size", batch_size},
            {"loss", loss},
            {"mode", mode},
            {"passes", passes},
            {"gamma", gamma},
            {"ece_bins", ece_bins},
            {"thresholds", thresholds},
            {"sizes", sizes},
            {"repeats", repeats},
            {"in", in}};
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig cfg;
    CLI::App app{"Bayesian structure learning and neural hierarchies with calibrated uncertainty", "brainet"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    auto data_flags = [&](CLI::App* c) {
        c->add_option("--data", cfg.data, "CSV file, or IDX image file with --labels");
        c->add_option("--labels", cfg.labels, "IDX label file");
        c->add_option("--label-column", cfg.label_column, "CSV column holding class labels");
        c->add_option("--target-column", cfg.target_column, "CSV column holding regression targets");
        c->add_option("--benchmark", cfg.benchmark, "synthetic data: two-moons, blocks, collider, chain, collider-fork, diamond, asia");
        c->add_option("--bins", cfg.bins, "bins for continuous columns")->check(CLI::PositiveNumber);
        c->add_option("--discretize", cfg.discretize, "equal-frequency or threshold");
        c->add_option("--split", cfg.split, "train fraction; fitting uses the first part, evaluation the second");
        c->add_option("--seed", cfg.seed, "master seed");
        c->add_option("--out", cfg.out, "output path (default: standard output)");
    };
    auto learn_flags = [&](CLI::App* c) {
        c->add_option("--s", cfg.s, "bootstrap branches per recursion")->check(CLI::PositiveNumber);
        c->add_option("--ci-threshold", cfg.ci_threshold, "independence threshold in nats");
        c->add_option("--ci-test", cfg.ci_test, "cmi or g-test");
        c->add_option("--ess", cfg.ess, "BDeu equivalent sample size");
        c->add_option("--max-depth", cfg.max_depth, "recursion depth limit");
    };
    auto train_flags = [&](CLI::App* c) {
        c->add_option("--epochs", cfg.epochs);
        c->add_option("--lr", cfg.lr);
        c->add_option("--width", cfg.width, "neurons per container layer before the multiplier");
        c->add_option("--width-mult", cfg.width_mult);
        c->add_option("--batch-size", cfg.batch_size);
    };
    auto infer_flags = [&](CLI::App* c) {
        c->add_option("--mode", cfg.mode, "stochastic or simultaneous");
        c->add_option("--passes", cfg.passes, "stochastic forward passes");
        c->add_option("--gamma", cfg.gamma, "sampling temperature");
    };
    auto model_flags = [&](CLI::App* c) {
        c->add_option("--structure", cfg.structure, "structure JSON from learn")->required();
        c->add_option("--in", cfg.in, "model JSON from train")->required();
    };
    auto config_flag = [&](CLI::App* c) { c->add_option("--config", cfg.config, "JSON file of flag values"); };

    auto* learn = app.add_subcommand("learn", "learn a structure tree");
    data_flags(learn), learn_flags(learn), config_flag(learn);
    learn->add_option("--ci-log", cfg.ci_log, "JSON-lines log of every independence test");
    learn->add_option("--dump-cpdag", cfg.dump_cpdag, "write the first selection's CPDAG");

    auto* train = app.add_subcommand("train", "train the neural hierarchy of a structure");
    data_flags(train), train_flags(train), config_flag(train);
    train->add_option("--structure", cfg.structure, "structure JSON from learn")->required();
    train->add_option("--loss", cfg.loss, "auto, cross-entropy or gaussian-nll");

    auto* pred = app.add_subcommand("predict", "predict with a trained model");
    data_flags(pred), infer_flags(pred), model_flags(pred), config_flag(pred);
    pred->add_option("--per-pass", cfg.per_pass, "JSON-lines file of per-pass outputs");

    auto* cal = app.add_subcommand("eval-calibration", "NLL, Brier, ECE and error of a trained model");
    data_flags(cal), infer_flags(cal), model_flags(cal), config_flag(cal);
    cal->add_option("--ece-bins", cfg.ece_bins)->check(CLI::PositiveNumber);

    auto* ood = app.add_subcommand("eval-ood", "out-of-distribution detection metrics");
    data_flags(ood), learn_flags(ood), train_flags(ood), infer_flags(ood), config_flag(ood);
    ood->add_option("--structure", cfg.structure, "structure JSON from learn");
    ood->add_option("--in", cfg.in, "model JSON from train");
    ood->add_option("--ood-data", cfg.ood_data, "CSV of out-of-distribution samples");

    auto* abl = app.add_subcommand("ablate", "performance across independence thresholds");
    data_flags(abl), learn_flags(abl), train_flags(abl), infer_flags(abl), config_flag(abl);
    abl->add_option("--thresholds", cfg.thresholds, "ascending thresholds; 0 is the stacked dense ensemble")->expected(1, -1);
    abl->add_option("--csv", cfg.csv, "also write the table as CSV");

    auto* sweep = app.add_subcommand("sweep-structures", "unique structures versus training size");
    data_flags(sweep), learn_flags(sweep), config_flag(sweep);
    sweep->add_option("--sizes", cfg.sizes, "ascending training sizes")->expected(1, -1);
    sweep->add_option("--repeats", cfg.repeats, "seeds per size")->check(CLI::PositiveNumber);

    auto* insp = app.add_subcommand("inspect", "summarize a structure or model");
    insp->add_option("--in", cfg.in, "structure or model JSON");
    insp->add_option("--structure", cfg.structure, "structure JSON");
    insp->add_option("--out", cfg.out);

    // splice config-file flags right after the subcommand name
    std::vector<std::string> argv_s{"brainet"};
    try {
        std::vector<std::string> rest = args;
        for (std::size_t i = 0; i + 1 < rest.size(); ++i) {
            if (rest[i] == "--config") {
                auto extra = config_flags(rest[i + 1]);
                const auto pos = std::find_if(rest.begin(), rest.end(), [](const std::string& a) { return a.rfind("-", 0) != 0; });
                if (pos != rest.end()) rest.insert(pos + 1, extra.begin(), extra.end());
                break;
            }
        }
        argv_s.insert(argv_s.end(), rest.begin(), rest.end());
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<const char*> argv;
    for (const auto& a : argv_s) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }

    const auto* chosen = app.get_subcommands().front();
    cfg.subcommand = chosen->get_name();
    try {
        check_paths(cfg);
        if (cfg.subcommand == "learn") cmd_learn(cfg, out);
        else if (cfg.subcommand == "train") cmd_train(cfg, out);
        else if (cfg.subcommand == "predict") cmd_predict(cfg, out);
        else if (cfg.subcommand == "eval-calibration") cmd_eval_calibration(cfg, out);
        else if (cfg.subcommand == "eval-ood") cmd_eval_ood(cfg, out);
        else if (cfg.subcommand == "ablate") cmd_ablate(cfg, out);
        else if (cfg.subcommand == "sweep-structures") cmd_sweep(cfg, out);
        else cmd_inspect(cfg, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace brainet::cli
