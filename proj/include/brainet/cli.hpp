#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace brainet::cli {

inline constexpr int kOutputFormatVersion = 1;

/// Every flag of every subcommand. Unused fields keep their defaults.
struct RunConfig {
    std::string subcommand;

    // data
    std::string data, labels, label_column, target_column, benchmark, ood_data;
    int bins = 4;
    std::string discretize = "equal-frequency";
    double split = 0.0;  // 0 = use every row
    std::uint64_t seed = 0;

    // structure
    int s = 2;
    double ci_threshold = 0.01;
    std::string ci_test = "cmi";
    std::string ci_log;
    double ess = 1.0;
    int max_depth = 4;
    std::string dump_cpdag;
    std::string structure;

    // training
    int epochs = 60;
    double lr = 1e-3;
    double width_mult = 1.0;
    int width = 32;
    int batch_size = 64;
    std::string loss = "auto";

    // inference
    std::string mode = "stochastic";
    int passes = 15;
    double gamma = 1.0;
    std::string per_pass;
    int ece_bins = 15;

    // experiments
    std::vector<double> thresholds{0.0, 0.01};
    std::vector<std::size_t> sizes{250, 1000, 4000, 16000};
    int repeats = 5;
    std::string csv;

    std::string in, out, config;

    nlohmann::json to_json() const;
};

/// Runs one invocation. Exit codes: 0 success, 1 usage error, 2 data or contract error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace brainet::cli
