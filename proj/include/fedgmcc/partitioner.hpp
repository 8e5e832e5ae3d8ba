#pragma once

#include <cstdint>
#include <vector>

#include "fedgmcc/data.hpp"

namespace fedgmcc {

struct PartitionPlan {
    std::vector<int> assignments;   // sample index -> client id in [0, K)
    int clients = 0;
    double achieved_emd = 0.0;
    int iterations = 0;
    bool target_reached = true;
    double shapiro_p = 1.0;         // gate value of the last accepted step
};

std::vector<ClientDataset> materialize_clients(const LabeledBatch& data, const PartitionPlan& plan);

// Lloyd iterations on the feature space, seeded centroid choice, until the
// assignment reaches a fixpoint or 100 iterations. Clusters never empty.
PartitionPlan kmeans_seed_partition(const LabeledBatch& data, int clients, std::uint64_t seed,
                                    int classes, int bins = 8);

struct AnnealOptions {
    double target_emd = 0.0;
    std::uint64_t seed = 0;
    int max_iters = 200;
    int bins = 8;
    double alpha = 0.05;        // Shapiro gate level
    double rel_tol = 0.05;      // relative slack around the target
    std::size_t min_subset = 2; // donor subsets never shrink below this
};

// Iteratively moves seeded random samples out of the subset farthest (in
// EMD) from the pooled distribution into its EMD-nearest other subset. A
// move is kept only if the population EMD does not increase and the pairwise
// EMDs pass the Shapiro-Wilk gate; otherwise it is rolled back. Stops once
// the population EMD is within rel_tol of the target or max_iters is hit, in
// which case the best plan is returned with target_reached = false.
PartitionPlan anneal_to_target_emd(const PartitionPlan& plan, const LabeledBatch& data, int classes,
                                   const AnnealOptions& opt);

PartitionPlan anneal_to_target_emd(const PartitionPlan& plan, const LabeledBatch& data, int classes,
                                   double target_emd, std::uint64_t seed, int max_iters);

} // namespace fedgmcc
