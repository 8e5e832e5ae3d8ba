#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fedgmcc/curve.hpp"
#include "fedgmcc/data.hpp"
#include "fedgmcc/nn.hpp"

namespace fedgmcc {

enum class Strategy { FedAvg, FedProx, Cfl, FedGmcc };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

struct ClientState {
    int id = 0;
    ClientDataset dataset;
    WeightVector current_weights;
    int assigned_cluster = 0;
};

// Disjoint-set forest over client ids with the fitted chain stored per
// connected pair. Roots are canonicalized to the smallest member so cluster
// labels are stable.
class ClusterSet {
public:
    explicit ClusterSet(int clients);

    int size() const { return static_cast<int>(parent_.size()); }
    int find(int i) const;
    void unite(int a, int b);
    bool same(int a, int b) const { return find(a) == find(b); }
    int count() const;   // number of disjoint sets (M)

    // Member lists per set, each sorted, ordered by smallest member.
    std::vector<std::vector<int>> groups() const;

    void set_pair_curve(int a, int b, CurveParams curve);
    const std::map<std::pair<int, int>, CurveParams>& pair_curves() const { return curves_; }

private:
    mutable std::vector<int> parent_;
    std::map<std::pair<int, int>, CurveParams> curves_;
};

struct GmccConfig {
    // Flatness budget; meaningful once initialized (first adaptive round
    // sets it to the median pairwise statistic).
    double epsilon = 0.0;
    bool initialized = false;
    bool epsilon_adapt = true;
    double percentile = 50.0;

    enum class AdaptMode { Percentile, Multiplicative };
    AdaptMode adapt_mode = AdaptMode::Percentile;

    std::size_t n_mc = 256;
    double eta = 0.1;
    int steps = 2000;
    int grid_points = 21;
    ThetaInit theta_init = ThetaInit::Sum;

    // Divide each cluster's pairwise curve-average sum by its pair count;
    // false keeps the raw sum, which grows with cluster size.
    bool normalize_pair_sum = true;
};

// Local training step for one client: SGD from the distributed weights, with
// the proximal term anchored there for FedProx.
struct ClientUpdateOptions {
    int local_epochs = 1;
    int batch_size = 64;
    double lr = 0.001;
    double mu = 0.0;       // > 0 adds the proximal term
    std::uint64_t seed = 0;
};

WeightVector client_update(const LabeledBatch& train, const WeightVector& global_w,
                           const ClientUpdateOptions& opt);

// Dataset-size weighted mean of the updates.
WeightVector aggregate_fedavg(const std::vector<std::pair<WeightVector, std::size_t>>& updates);

struct CflOptions {
    double eps1 = 0.2;     // mean-update-norm trigger
    double gamma = 0.0;    // max admissible cross-cluster cosine for a split
    int exhaustive_limit = 16;
};

struct CflSplit {
    std::vector<std::vector<int>> clusters;   // indices into `updates`
    std::vector<WeightVector> weights;        // per cluster, size-weighted mean
};

// While the mean update norm stays >= eps1 the group aggregates as FedAvg.
// Once below, the group is bipartitioned by pairwise cosine similarity of
// the updates (minimizing the maximum cross-cluster similarity), accepted
// when that maximum is below gamma, and recursed on both sides.
CflSplit aggregate_cfl(const std::vector<WeightVector>& updates, const std::vector<std::size_t>& sizes,
                       const WeightVector& prev_global, const CflOptions& opt);

struct GmccRoundResult {
    std::vector<std::vector<int>> groups;       // client ids per cluster
    std::vector<WeightVector> cluster_weights;  // parallel to groups
    std::vector<double> pair_stats;             // flatness max_du per fitted pair
    double epsilon_used = 0.0;
    int cluster_count = 0;
};

// One server round: fit a chain for every pair not already co-clustered,
// co-cluster pairs whose flatness stays within epsilon, aggregate each
// cluster as the mean of its connected pairs' curve averages (singletons
// keep their own weights). On the first adaptive round epsilon is set to the
// median pairwise statistic before clustering.
GmccRoundResult gmcc_round(const std::vector<WeightVector>& updates, GmccConfig& cfg,
                           std::uint64_t probe_seed, int threads = 1);

// Epsilon adaptation: first call takes the median of the statistics; later
// calls step the percentile pointer 5 points up when more than one cluster
// formed and 5 points down otherwise, re-evaluated on the current
// statistics. The multiplicative mode scales epsilon by 1.05 / 0.95 instead.
double adapt_epsilon(GmccConfig& cfg, const std::vector<double>& pair_stats, int cluster_count);

// Linear-interpolation quantile of an unsorted sample; p01 in [0,1].
double quantile(std::vector<double> values, double p01);

struct RoundMetrics {
    int round = 0;
    int cluster_id = 0;
    int cluster_size = 0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double train_loss = 0.0;
    int cluster_count = 1;
    double wall_ms = 0.0;
};

} // namespace fedgmcc
