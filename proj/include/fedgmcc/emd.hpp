#pragma once

#include <vector>

#include "fedgmcc/data.hpp"
#include "fedgmcc/matrix.hpp"

namespace fedgmcc {

// Weighted-cluster representation of an empirical distribution.
struct Signature {
    Matrix centroids;              // m x d
    std::vector<double> weights;   // m positive masses

    std::size_t size() const { return weights.size(); }
    double total_mass() const;
    void validate() const;
};

// Optimal transport plan plus the ground costs it was solved against.
struct FlowMatrix {
    Matrix flows;   // m x n, nonnegative
    Matrix costs;   // m x n
};

struct EmdResult {
    double distance = 0.0;
    FlowMatrix flow;
};

struct FeatureRange {
    std::vector<double> lo;
    std::vector<double> hi;
};

FeatureRange feature_range(const std::vector<const LabeledBatch*>& batches);

// Per-class histogram over a regular grid of `bins` cells per feature
// dimension. Each nonempty (cell, class) pair becomes one centroid: the cell
// center with the class index appended as an extra coordinate scaled by the
// feature-range diameter, so label disagreement dominates the ground cost.
// Weights are empirical masses summing to 1.
Signature signature_from_dataset(const ClientDataset& d, int bins, int classes);
Signature signature_from_dataset(const ClientDataset& d, int bins, int classes, const FeatureRange& range);

// Optimal-transport cost ratio between two signatures of equal total mass,
// Euclidean ground cost between centroids. Solved exactly by successive
// shortest augmenting paths.
double emd_pair(const Signature& a, const Signature& b);
EmdResult emd_pair_with_flow(const Signature& a, const Signature& b);

// Size-weighted mean of each client's EMD to the pooled distribution:
// (1/N) sum_k n_k * d(D_k, D).
double emd_population(const std::vector<ClientDataset>& datasets, int bins, int classes);

// Symmetric K x K matrix of pairwise client EMDs over a shared binning range.
Matrix emd_pairwise_matrix(const std::vector<ClientDataset>& datasets, int bins, int classes);

} // namespace fedgmcc
