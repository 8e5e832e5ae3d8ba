#pragma once

#include <string>
#include <vector>

#include "fedgmcc/config.hpp"
#include "fedgmcc/fed.hpp"

namespace fedgmcc {

struct ExperimentSummary {
    std::string strategy;
    int clients = 0;
    int rounds = 0;
    int final_cluster_count = 1;
    double final_val_acc = 0.0;     // val-sample weighted mean over clusters
    double final_val_loss = 0.0;
    double partition_emd = 0.0;     // population EMD of the client datasets
    std::vector<double> epsilon_trace;
    double wall_ms_total = 0.0;
};

struct ExperimentResult {
    std::vector<RoundMetrics> rows;
    ExperimentSummary summary;
};

// Full simulation: build client datasets, normalize features to the unit
// box, split 80/20 per client, then run `rounds` cycles of local training
// and server aggregation under the configured strategy. Rows cover the
// initial model (round 0) plus one entry per round per cluster. Identical
// configs yield identical rows.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// RFC-4180 CSV with a fixed header; excludes wall-clock so repeated runs are
// byte-identical.
std::string metrics_csv(const std::vector<RoundMetrics>& rows);

std::string summary_json(const ExperimentSummary& summary);

} // namespace fedgmcc
