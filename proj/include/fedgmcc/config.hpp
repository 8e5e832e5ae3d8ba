#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedgmcc/data.hpp"
#include "fedgmcc/fed.hpp"

namespace fedgmcc {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One block of clients sharing a feature transform / label convention.
struct TaskGroupSpec {
    int clients = 1;
    std::optional<FeatureTransform> transform;
    double concept_shift = 0.0;
};

struct TaskConfig {
    std::size_t n_per_client = 256;
    int dim = 2;
    int classes = 2;
    double separation = 6.0;
    std::vector<int> hidden = {16};
    std::vector<TaskGroupSpec> groups;
};

struct PartitionConfig {
    enum class Mode { Iid, EmdTarget, Groups };
    Mode mode = Mode::Iid;
    double target_emd = 0.0;
    int bins = 8;
    std::uint64_t seed = 0;
    int max_iters = 200;
};

struct SeedsConfig {
    std::uint64_t init = 1;
    std::uint64_t data = 2;
    std::uint64_t probe = 3;
};

struct ExperimentConfig {
    Strategy strategy = Strategy::FedAvg;
    int clients = 2;
    int rounds = 1;
    int local_epochs = 10;
    int batch_size = 64;
    double lr = 0.001;
    double mu = 0.01;
    int threads = 1;
    GmccConfig gmcc;
    CflOptions cfl;
    PartitionConfig partition;
    TaskConfig task;
    SeedsConfig seeds;
};

// Strict JSON parse: unknown keys and out-of-range values raise ConfigError
// naming the offending field. Omitted keys take the defaults above.
ExperimentConfig parse_experiment_config(const std::string& json_text);

// Serializes every field; parse(serialize(c)) reproduces c.
std::string experiment_config_to_json(const ExperimentConfig& cfg);

} // namespace fedgmcc
