#include <functional>
#include <numeric>

#include "brainet/evalharness.hpp"
#include "brainet/structure.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace brainet;
using structure::GgtNode;

namespace {

// Connectivity string of one selection, built without the library's canonical form.
std::string form(const GgtNode& node, const structure::Choices& c) {
    if (node.is_leaf()) {
        std::string s = "{";
        for (int v : node.variables) s += std::to_string(v) + " ";
        return s + "}";
    }
    const auto& br = node.branches[static_cast<std::size_t>(c.at(node.id))];
    std::string s = "<";
    for (const auto& a : br.ancestor_children) s += form(a, c) + ",";
    return s + "|" + form(br.descendant_child, c) + ">";
}

// Variables covered by the leaves of one selection.
void covered(const GgtNode& node, const structure::Choices& c, std::vector<int>& out) {
    if (node.is_leaf()) {
        out.insert(out.end(), node.variables.begin(), node.variables.end());
        return;
    }
    const auto& br = node.branches[static_cast<std::size_t>(c.at(node.id))];
    for (const auto& a : br.ancestor_children) covered(a, c, out);
    covered(br.descendant_child, c, out);
}

void visit(const GgtNode& node, const std::function<void(const GgtNode&, const GgtNode*)>& f, const GgtNode* parent = nullptr) {
    f(node, parent);
    for (const auto& br : node.branches) {
        for (const auto& a : br.ancestor_children) visit(a, f, &node);
        visit(br.descendant_child, f, &node);
    }
}

bool subset_of(const std::vector<int>& a, const std::vector<int>& b) {
    return std::all_of(a.begin(), a.end(), [&](int v) { return std::find(b.begin(), b.end(), v) != b.end(); });
}

structure::LearnConfig config(int s, std::uint64_t seed) {
    structure::LearnConfig c;
    c.s = s;
    c.seed = seed;
    return c;
}

data::Dataset network_data(const std::string& name, std::size_t n, std::uint64_t seed) {
    return eval::sample_network(eval::reference_network(name), n, seed);
}

}  // namespace

TEST_CASE("brainet_sl: single variable is an immediate leaf") {
    std::mt19937_64 rng(1);
    auto ds = oracle::make_dataset({oracle::random_binary(100, rng)});
    graph::Trace trace;
    trace.enabled = true;
    auto root = structure::learn_structure(ds, config(2, 3), &trace);
    CHECK(root.is_leaf());
    CHECK(root.score == doctest::Approx(oracle::sequential_bdeu(ds, 0, {}, 1.0)).epsilon(1e-12));
    const auto cx = structure::measure_complexity(trace);
    CHECK(cx.ci_tests == 0);
    CHECK(cx.score_calls == 1);
}

TEST_CASE("brainet_sl: empty endogenous set is an error") {
    std::mt19937_64 rng(1);
    auto ds = oracle::make_dataset({oracle::random_binary(10, rng)});
    CHECK_THROWS_AS(structure::brainet_sl(graph::Cpdag({0}), {}, {}, 0, config(1, 0), ds), ContractError);
}

TEST_CASE("measure_complexity requires tracing") {
    graph::Trace trace;
    CHECK_THROWS_AS(structure::measure_complexity(trace), ContractError);
}

TEST_CASE("s = 1 gives a single structure") {
    auto ds = network_data("asia", 3000, 2);
    auto root = structure::learn_structure(ds, config(1, 4));
    CHECK(structure::count_unique_structures(root) == 1);
    visit(root, [](const GgtNode& n, const GgtNode*) {
        if (!n.is_leaf()) CHECK(n.branches.size() == 1);
    });
}

TEST_CASE("top-level branches match a direct refinement on the same bootstrap samples") {
    auto ds = network_data("collider-fork", 5000, 3);
    const auto cfg = config(2, 11);
    auto root = structure::learn_structure(ds, cfg);
    REQUIRE_FALSE(root.is_leaf());
    REQUIRE(root.branches.size() == 2);
    const std::vector<int> all{0, 1, 2, 3, 4};
    for (int t = 0; t < 2; ++t) {
        const auto sample = data::bootstrap(ds, derive_seed(cfg.seed, "r/" + std::to_string(t)));
        auto direct = graph::increase_resolution(graph::complete_graph(all), 0, sample.view(ds), cfg.ci);
        CHECK(root.branches[static_cast<std::size_t>(t)].cpdag == direct);
    }
}

TEST_CASE("count_unique_structures: examples") {
    CHECK(structure::count_unique_structures(oracle::leaf("r", {0, 1}, -3.0)) == 1);
    auto same = oracle::internal("r", {oracle::branch("r", 0, {oracle::leaf("r.0.a0", {0}, -1)}, oracle::leaf("r.0.d", {1}, -1)),
                                       oracle::branch("r", 1, {oracle::leaf("r.1.a0", {0}, -2)}, oracle::leaf("r.1.d", {1}, -2))});
    CHECK(structure::count_unique_structures(same) == 1);
    auto distinct = oracle::internal("r", {oracle::branch("r", 0, {oracle::leaf("r.0.a0", {0}, -1)}, oracle::leaf("r.0.d", {1}, -1)),
                                           oracle::branch("r", 1, {}, oracle::leaf("r.1.d", {0, 1}, -2))});
    CHECK(structure::count_unique_structures(distinct) == 2);
}

TEST_CASE("count_unique_structures matches exhaustive enumeration") {
    std::mt19937_64 rng(5);
    oracle::TreeShape shape;
    for (int trial = 0; trial < 150; ++trial) {
        std::vector<int> vars(2 + rng() % 5);
        std::iota(vars.begin(), vars.end(), 0);
        auto root = oracle::random_tree(vars, rng, shape);
        const auto selections = oracle::all_selections(root);
        if (selections.size() > 20000) continue;
        std::set<std::string> forms;
        for (const auto& c : selections) forms.insert(form(root, c));
        CHECK(structure::count_unique_structures(root) == forms.size());
    }
}

TEST_CASE("serialization: leaf schema, round-trip, corruption") {
    auto leaf = oracle::leaf("r", {0, 2}, -4.5);
    auto doc = structure::serialize(leaf);
    CHECK(doc["root"]["kind"] == "leaf");
    CHECK(doc["root"]["vars"] == nlohmann::json::array({0, 2}));
    CHECK(doc["root"]["score"] == -4.5);
    CHECK(doc["version"] == structure::kStructureFormatVersion);

    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<int> vars(1 + rng() % 6);
        std::iota(vars.begin(), vars.end(), 0);
        auto root = oracle::random_tree(vars, rng, {});
        CHECK(structure::deserialize(structure::serialize(root)) == root);
    }
    auto learned = structure::learn_structure(network_data("diamond", 2000, 7), config(2, 1));
    const auto text = structure::serialize(learned).dump();
    CHECK(structure::deserialize(nlohmann::json::parse(text)) == learned);

    auto bad = doc;
    bad["root"]["score"] = "high";
    try {
        structure::deserialize(bad);
        FAIL("expected a schema error");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("$.root.score") != std::string::npos);
    }
    bad = doc;
    bad["version"] = 99;
    CHECK_THROWS_AS(structure::deserialize(bad), SchemaError);
}

TEST_CASE("learned tree properties") {
    std::mt19937_64 rng(7);
    const auto names = eval::reference_network_names();
    for (int trial = 0; trial < 12; ++trial) {
        const auto& name = names[trial % names.size()];
        auto ds = network_data(name, 500 + rng() % 3000, rng());
        const auto cfg = config(1 + static_cast<int>(rng() % 3), rng());
        graph::Trace trace;
        trace.enabled = true;
        auto root = structure::learn_structure(ds, cfg, &trace);

        // field-of-view nesting
        visit(root, [](const GgtNode& n, const GgtNode* parent) {
            if (parent != nullptr) CHECK(subset_of(n.variables, parent->variables));
        });
        // one leaf per input along any selection
        auto selections = oracle::all_selections(root);
        if (selections.size() > 500) selections.resize(500);
        for (const auto& c : selections) {
            std::vector<int> vars;
            covered(root, c, vars);
            std::sort(vars.begin(), vars.end());
            CHECK(vars == root.variables);
        }
        // determinism
        CHECK(structure::serialize(structure::learn_structure(ds, cfg)).dump() == structure::serialize(root).dump());
        // scoring sites are exactly the leaves
        CHECK(structure::measure_complexity(trace).score_calls == structure::leaf_count(root));

        // per-call bound: every pair in scope against both endpoints' size-n subsets
        std::size_t bound = 0;
        visit(root, [&](const GgtNode& n, const GgtNode*) {
            if (n.is_leaf()) return;
            const std::size_t m = n.variables.size() + n.exogenous.size();
            const long long pool = static_cast<long long>(m) - 2;
            long long subsets = pool >= n.order ? 1 : 0;
            for (int i = 0; i < n.order && subsets > 0; ++i) subsets = subsets * (pool - i) / (i + 1);
            bound += n.branches.size() * (m * (m - 1) / 2) * 2 * static_cast<std::size_t>(subsets);
        });
        CHECK(trace.ci_tests <= bound);
    }
}

TEST_CASE("learned_cpdag of an s = 1 run on a chain") {
    auto ds = network_data("chain", 5000, 8);
    auto root = structure::learn_structure(ds, config(1, 2));
    auto g = structure::learned_cpdag(root, structure::first_branch_choices(root));
    CHECK(oracle::pattern_of(g) == oracle::mec_pattern(4, {{0, 1}, {1, 2}, {2, 3}}));
}
