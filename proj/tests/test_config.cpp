#include <doctest.h>

#include <string>

#include "fedgmcc/config.hpp"

using namespace fedgmcc;

TEST_CASE("config: defaults parse from an empty object") {
    const ExperimentConfig cfg = parse_experiment_config("{}");
    CHECK(cfg.strategy == Strategy::FedAvg);
    CHECK(cfg.batch_size == 64);
    CHECK(cfg.lr == 0.001);
    CHECK(cfg.local_epochs == 10);
    CHECK(cfg.gmcc.eta == 0.1);
    CHECK(cfg.cfl.eps1 == 0.2);
    CHECK_FALSE(cfg.gmcc.initialized);   // epsilon defaults to the median rule
}

TEST_CASE("config: unknown keys are rejected by name") {
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"stratgy": "fedavg"})"),
                         doctest::Contains("stratgy"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"task": {"bogus": 1}})"),
                         doctest::Contains("task.bogus"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"gmcc": {"epsilonn": 1}})"),
                         doctest::Contains("gmcc.epsilonn"), ConfigError);
}

TEST_CASE("config: out-of-range values are rejected by field") {
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"rounds": -1})"), doctest::Contains("rounds"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"lr": -0.5})"), doctest::Contains("lr"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"gmcc": {"grid_points": 5}})"),
                         doctest::Contains("grid_points"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"strategy": "sgd"})"),
                         doctest::Contains("sgd"), ConfigError);
}

TEST_CASE("config: group bookkeeping is validated") {
    const std::string bad_sum = R"({
        "clients": 3,
        "partition": {"mode": "groups"},
        "task": {"groups": [{"clients": 1}, {"clients": 1}]}
    })";
    CHECK_THROWS_AS(parse_experiment_config(bad_sum), ConfigError);

    const std::string no_groups = R"({"partition": {"mode": "groups"}})";
    CHECK_THROWS_AS(parse_experiment_config(no_groups), ConfigError);

    const std::string stray_groups = R"({"task": {"groups": [{"clients": 2}]}})";
    CHECK_THROWS_AS(parse_experiment_config(stray_groups), ConfigError);
}

TEST_CASE("config: serialize/parse round-trip is a fixpoint") {
    const std::string input = R"({
        "strategy": "fedgmcc",
        "clients": 4,
        "rounds": 6,
        "local_epochs": 5,
        "batch_size": 32,
        "lr": 0.002,
        "mu": 0.05,
        "threads": 2,
        "seeds": {"init": 9, "data": 10, "probe": 11},
        "partition": {"mode": "groups", "bins": 6, "seed": 3},
        "task": {
            "n_per_client": 128, "dim": 2, "classes": 2, "separation": 5.0, "hidden": [8, 8],
            "groups": [{"clients": 2, "rotation": 0.5}, {"clients": 2, "concept_shift": 1.0}]
        },
        "gmcc": {"epsilon": "median", "n_mc": 128, "eta": 0.1, "steps": 500},
        "cfl": {"eps1": 0.2, "gamma": 0.1}
    })";
    const ExperimentConfig cfg = parse_experiment_config(input);
    CHECK(cfg.task.groups.size() == 2);
    CHECK(cfg.task.groups[0].transform.has_value());
    CHECK(cfg.task.groups[1].concept_shift == 1.0);

    const std::string text = experiment_config_to_json(cfg);
    const ExperimentConfig cfg2 = parse_experiment_config(text);
    CHECK(experiment_config_to_json(cfg2) == text);
}

TEST_CASE("config: fixed numeric epsilon disables the median rule") {
    const ExperimentConfig cfg = parse_experiment_config(R"({"gmcc": {"epsilon": 0.25}})");
    CHECK(cfg.gmcc.initialized);
    CHECK(cfg.gmcc.epsilon == 0.25);
}
