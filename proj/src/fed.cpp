#include "fedgmcc/fed.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fedgmcc/parallel.hpp"
#include "fedgmcc/rng.hpp"

namespace fedgmcc {

namespace {

std::pair<int, int> ordered(int a, int b) { return {std::min(a, b), std::max(a, b)}; }

double cosine_similarity(const WeightVector& a, const WeightVector& b) {
    const double na = norm(a), nb = norm(b);
    if (na < 1e-300 && nb < 1e-300) return 1.0;   // identical (zero) updates
    if (na < 1e-300 || nb < 1e-300) return 0.0;
    return dot(a, b) / (na * nb);
}

} // namespace

std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::FedAvg: return "fedavg";
        case Strategy::FedProx: return "fedprox";
        case Strategy::Cfl: return "cfl";
        case Strategy::FedGmcc: return "fedgmcc";
    }
    throw std::logic_error("unknown strategy");
}

Strategy strategy_from_name(const std::string& name) {
    if (name == "fedavg") return Strategy::FedAvg;
    if (name == "fedprox") return Strategy::FedProx;
    if (name == "cfl") return Strategy::Cfl;
    if (name == "fedgmcc") return Strategy::FedGmcc;
    throw std::invalid_argument("unknown strategy: " + name);
}

ClusterSet::ClusterSet(int clients) : parent_(clients) {
    if (clients < 1) throw std::invalid_argument("cluster set needs at least one client");
    std::iota(parent_.begin(), parent_.end(), 0);
}

int ClusterSet::find(int i) const {
    if (i < 0 || i >= size()) throw std::invalid_argument("client id out of range");
    while (parent_[i] != i) {
        parent_[i] = parent_[parent_[i]];
        i = parent_[i];
    }
    return i;
}

void ClusterSet::unite(int a, int b) {
    const int ra = find(a), rb = find(b);
    if (ra == rb) return;
    // Smallest member stays the root so cluster labels are stable.
    parent_[std::max(ra, rb)] = std::min(ra, rb);
}

int ClusterSet::count() const {
    int m = 0;
    for (int i = 0; i < size(); ++i)
        if (find(i) == i) ++m;
    return m;
}

std::vector<std::vector<int>> ClusterSet::groups() const {
    std::map<int, std::vector<int>> by_root;
    for (int i = 0; i < size(); ++i) by_root[find(i)].push_back(i);
    std::vector<std::vector<int>> out;
    out.reserve(by_root.size());
    for (auto& [root, members] : by_root) out.push_back(std::move(members));
    return out;
}

void ClusterSet::set_pair_curve(int a, int b, CurveParams curve) {
    curves_[ordered(a, b)] = std::move(curve);
}

WeightVector client_update(const LabeledBatch& train, const WeightVector& global_w,
                           const ClientUpdateOptions& opt) {
    if (opt.local_epochs == 0) return global_w;
    SgdOptions sgd;
    sgd.epochs = opt.local_epochs;
    sgd.batch_size = opt.batch_size;
    sgd.lr = opt.lr;
    sgd.seed = opt.seed;
    if (opt.mu != 0.0) sgd.proximal = ProximalTerm{opt.mu, global_w};
    return sgd_train(global_w, train, sgd);
}

WeightVector aggregate_fedavg(const std::vector<std::pair<WeightVector, std::size_t>>& updates) {
    if (updates.empty()) throw std::invalid_argument("nothing to aggregate");
    std::size_t total = 0;
    for (const auto& [w, n] : updates) total += n;
    if (total == 0) throw std::invalid_argument("total dataset size is zero");

    WeightVector out = zero_weights(updates.front().first.arch);
    for (const auto& [w, n] : updates)
        axpy(out, static_cast<double>(n) / static_cast<double>(total), w);
    return out;
}

namespace {

// Bipartition minimizing the maximum cross-cluster cosine similarity.
// Exhaustive for small groups, seeded by the least-similar pair otherwise.
std::pair<std::vector<int>, std::vector<int>> best_bipartition(const Matrix& sim,
                                                               const std::vector<int>& idx,
                                                               int exhaustive_limit,
                                                               double* out_cross) {
    const int k = static_cast<int>(idx.size());
    std::vector<int> a, b;
    double best = std::numeric_limits<double>::infinity();

    if (k <= exhaustive_limit) {
        // Fix member 0 on side A to halve the search.
        for (std::uint64_t mask = 0; mask < (1ULL << (k - 1)); ++mask) {
            std::vector<int> ca{0}, cb;
            for (int i = 1; i < k; ++i)
                ((mask >> (i - 1)) & 1 ? ca : cb).push_back(i);
            if (cb.empty()) continue;
            double cross = -std::numeric_limits<double>::infinity();
            for (int i : ca)
                for (int j : cb) cross = std::max(cross, sim(i, j));
            if (cross < best) {
                best = cross;
                a = ca;
                b = cb;
            }
        }
    } else {
        // Seed each side with the least-similar pair, then greedy assignment.
        int si = 0, sj = 1;
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                if (sim(i, j) < sim(si, sj)) {
                    si = i;
                    sj = j;
                }
        a = {si};
        b = {sj};
        for (int i = 0; i < k; ++i) {
            if (i == si || i == sj) continue;
            (sim(i, si) >= sim(i, sj) ? a : b).push_back(i);
        }
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        best = -std::numeric_limits<double>::infinity();
        for (int i : a)
            for (int j : b) best = std::max(best, sim(i, j));
    }

    *out_cross = best;
    std::vector<int> ga, gb;
    for (int i : a) ga.push_back(idx[i]);
    for (int i : b) gb.push_back(idx[i]);
    return {ga, gb};
}

void cfl_recurse(const std::vector<WeightVector>& deltas, const std::vector<int>& idx,
                 const CflOptions& opt, std::vector<std::vector<int>>& out) {
    if (idx.size() <= 1) {
        out.push_back(idx);
        return;
    }

    WeightVector mean = zero_weights(deltas.front().arch);
    for (int i : idx) axpy(mean, 1.0 / static_cast<double>(idx.size()), deltas[i]);
    if (norm(mean) >= opt.eps1) {
        out.push_back(idx);
        return;
    }

    const int k = static_cast<int>(idx.size());
    Matrix sim(k, k, 1.0);
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) {
            const double s = cosine_similarity(deltas[idx[i]], deltas[idx[j]]);
            sim(i, j) = s;
            sim(j, i) = s;
        }

    double cross = 0.0;
    auto [a, b] = best_bipartition(sim, idx, opt.exhaustive_limit, &cross);
    if (a.empty() || b.empty() || cross >= opt.gamma) {
        out.push_back(idx);
        return;
    }
    cfl_recurse(deltas, a, opt, out);
    cfl_recurse(deltas, b, opt, out);
}

} // namespace

CflSplit aggregate_cfl(const std::vector<WeightVector>& updates, const std::vector<std::size_t>& sizes,
                       const WeightVector& prev_global, const CflOptions& opt) {
    if (updates.empty()) throw std::invalid_argument("nothing to aggregate");
    if (sizes.size() != updates.size()) throw std::invalid_argument("sizes/updates length mismatch");
    if (!(opt.eps1 > 0.0)) throw std::invalid_argument("eps1 must be positive");

    std::vector<WeightVector> deltas;
    deltas.reserve(updates.size());
    for (const auto& w : updates) deltas.push_back(sub(w, prev_global));

    std::vector<int> all(updates.size());
    std::iota(all.begin(), all.end(), 0);
    CflSplit split;
    cfl_recurse(deltas, all, opt, split.clusters);
    std::sort(split.clusters.begin(), split.clusters.end());

    split.weights.reserve(split.clusters.size());
    for (const auto& members : split.clusters) {
        std::vector<std::pair<WeightVector, std::size_t>> parts;
        parts.reserve(members.size());
        for (int i : members) parts.emplace_back(updates[i], sizes[i]);
        split.weights.push_back(aggregate_fedavg(parts));
    }
    return split;
}

double quantile(std::vector<double> values, double p01) {
    if (values.empty()) throw std::invalid_argument("quantile of empty sample");
    p01 = std::clamp(p01, 0.0, 1.0);
    std::sort(values.begin(), values.end());
    const double pos = p01 * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

double adapt_epsilon(GmccConfig& cfg, const std::vector<double>& pair_stats, int cluster_count) {
    if (!cfg.initialized) {
        if (pair_stats.empty()) throw std::invalid_argument("cannot initialize epsilon without statistics");
        cfg.epsilon = quantile(pair_stats, 0.5);
        cfg.percentile = 50.0;
        cfg.initialized = true;
        return cfg.epsilon;
    }
    if (pair_stats.empty()) return cfg.epsilon;

    if (cfg.adapt_mode == GmccConfig::AdaptMode::Multiplicative) {
        cfg.epsilon *= cluster_count > 1 ? 1.05 : 0.95;
        return cfg.epsilon;
    }
    cfg.percentile = std::clamp(cfg.percentile + (cluster_count > 1 ? 5.0 : -5.0), 0.0, 100.0);
    cfg.epsilon = quantile(pair_stats, cfg.percentile / 100.0);
    return cfg.epsilon;
}

GmccRoundResult gmcc_round(const std::vector<WeightVector>& updates, GmccConfig& cfg,
                           std::uint64_t probe_seed, int threads) {
    const int k = static_cast<int>(updates.size());
    if (k < 2) throw std::invalid_argument("need at least 2 client models");
    const ModelArch arch = updates.front().arch;
    for (const auto& w : updates)
        if (w.arch != arch) throw std::invalid_argument("client architecture mismatch");

    const MonteCarloProbe probe = make_probe(cfg.n_mc, arch.input_dim(), probe_seed);
    const bool first = cfg.epsilon_adapt && !cfg.initialized;

    struct PairFit {
        int a = 0, b = 0;
        CurveParams curve;
        double stat = 0.0;
    };
    std::vector<PairFit> fits;
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) fits.push_back(PairFit{a, b, {}, 0.0});

    // All pairs are fitted up front (they are independent given seeds); the
    // sequential sweep below replays the skip rule, discarding fits for
    // pairs already co-clustered when their turn comes.
    parallel_for(fits.size(), threads, [&](std::size_t i) {
        PairFit& f = fits[i];
        FitOptions fo;
        fo.eta = cfg.eta;
        fo.steps = cfg.steps;
        fo.grid_points = cfg.grid_points;
        fo.theta_init = cfg.theta_init;
        fo.seed = mix_seed(probe_seed, static_cast<std::uint64_t>(f.a), static_cast<std::uint64_t>(f.b));
        FitResult fit = fit_curve(updates[f.a], updates[f.b], probe, fo);
        f.stat = flatness(fit.curve, updates[f.b], probe).max_du;
        f.curve = std::move(fit.curve);
    });

    GmccRoundResult res;
    ClusterSet cs(k);

    if (first) {
        std::vector<double> all_stats;
        all_stats.reserve(fits.size());
        for (const auto& f : fits) all_stats.push_back(f.stat);
        adapt_epsilon(cfg, all_stats, 1);   // median initialization
    }
    res.epsilon_used = cfg.epsilon;

    for (auto& f : fits) {
        if (!first && cs.same(f.a, f.b)) continue;   // transitivity shortcut
        res.pair_stats.push_back(f.stat);
        if (f.stat <= cfg.epsilon) {
            const bool fresh = !cs.same(f.a, f.b);
            cs.unite(f.a, f.b);
            if (fresh) cs.set_pair_curve(f.a, f.b, std::move(f.curve));
        }
    }

    res.groups = cs.groups();
    res.cluster_count = static_cast<int>(res.groups.size());
    res.cluster_weights.reserve(res.groups.size());
    for (const auto& members : res.groups) {
        if (members.size() == 1) {
            res.cluster_weights.push_back(updates[members.front()]);
            continue;
        }
        WeightVector sum = zero_weights(arch);
        std::size_t pairs = 0;
        for (const auto& [key, curve] : cs.pair_curves()) {
            if (cs.find(key.first) != cs.find(members.front())) continue;
            axpy(sum, 1.0, curve_average(curve));
            ++pairs;
        }
        if (pairs == 0) throw std::logic_error("cluster without connected pairs");
        res.cluster_weights.push_back(cfg.normalize_pair_sum ? scale(sum, 1.0 / static_cast<double>(pairs))
                                                             : sum);
    }
    return res;
}

} // namespace fedgmcc
