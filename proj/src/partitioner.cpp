#include "fedgmcc/partitioner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "fedgmcc/emd.hpp"
#include "fedgmcc/rng.hpp"
#include "fedgmcc/shapiro.hpp"

namespace fedgmcc {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return s;
}

void check_assignment(const std::vector<int>& a, int k, std::size_t n) {
    if (a.size() != n) throw std::invalid_argument("assignment length mismatch");
    std::vector<std::size_t> counts(k, 0);
    for (int c : a) {
        if (c < 0 || c >= k) throw std::invalid_argument("assignment out of range");
        ++counts[c];
    }
    for (std::size_t c : counts)
        if (c == 0) throw std::invalid_argument("empty client in partition");
}

// Gate on the distribution of pairwise EMDs. Fewer than 3 values or a
// degenerate spread cannot be tested and passes.
double shapiro_gate_p(const std::vector<ClientDataset>& clients, int bins, int classes) {
    const Matrix m = emd_pairwise_matrix(clients, bins, classes);
    std::vector<double> pairwise;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j) pairwise.push_back(m(i, j));
    if (pairwise.size() < 3) return 1.0;
    return shapiro_wilk(pairwise).p;
}

} // namespace

std::vector<ClientDataset> materialize_clients(const LabeledBatch& data, const PartitionPlan& plan) {
    check_assignment(plan.assignments, plan.clients, data.size());
    const std::size_t dim = data.inputs.cols;
    std::vector<std::size_t> counts(plan.clients, 0);
    for (int c : plan.assignments) ++counts[c];

    std::vector<ClientDataset> clients(plan.clients);
    for (int c = 0; c < plan.clients; ++c) {
        clients[c].client_id = c;
        clients[c].batch.inputs = Matrix(counts[c], dim);
        clients[c].batch.labels.reserve(counts[c]);
    }
    std::vector<std::size_t> next(plan.clients, 0);
    for (std::size_t r = 0; r < data.size(); ++r) {
        const int c = plan.assignments[r];
        std::copy(data.inputs.row(r), data.inputs.row(r) + dim, clients[c].batch.inputs.row(next[c]++));
        clients[c].batch.labels.push_back(data.labels[r]);
    }
    return clients;
}

PartitionPlan kmeans_seed_partition(const LabeledBatch& data, int clients, std::uint64_t seed,
                                    int classes, int bins) {
    const std::size_t n = data.size();
    if (clients < 2) throw std::invalid_argument("need at least 2 clients");
    if (n < static_cast<std::size_t>(clients)) throw std::invalid_argument("more clients than samples");
    const std::size_t dim = data.inputs.cols;

    // Seeded distinct sample rows as initial centroids.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    Matrix centroids(clients, dim);
    for (int c = 0; c < clients; ++c)
        std::copy(data.inputs.row(order[c]), data.inputs.row(order[c]) + dim, centroids.row(c));

    std::vector<int> assign(n, -1);
    int iters = 0;
    for (; iters < 100; ++iters) {
        bool changed = false;
        for (std::size_t r = 0; r < n; ++r) {
            int best = 0;
            double bd = sq_dist(data.inputs.row(r), centroids.row(0), dim);
            for (int c = 1; c < clients; ++c) {
                const double d = sq_dist(data.inputs.row(r), centroids.row(c), dim);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[r] != best) {
                assign[r] = best;
                changed = true;
            }
        }

        // Refill empty clusters with the sample farthest from its centroid.
        std::vector<std::size_t> counts(clients, 0);
        for (int c : assign) ++counts[c];
        for (int c = 0; c < clients; ++c) {
            while (counts[c] == 0) {
                std::size_t worst = n;
                double wd = -1.0;
                for (std::size_t r = 0; r < n; ++r) {
                    if (counts[assign[r]] <= 1) continue;
                    const double d = sq_dist(data.inputs.row(r), centroids.row(assign[r]), dim);
                    if (d > wd) {
                        wd = d;
                        worst = r;
                    }
                }
                if (worst == n) throw std::runtime_error("cannot fill empty cluster");
                --counts[assign[worst]];
                assign[worst] = c;
                ++counts[c];
                changed = true;
            }
        }

        if (!changed && iters > 0) break;

        centroids = Matrix(clients, dim, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const double* x = data.inputs.row(r);
            double* cr = centroids.row(assign[r]);
            for (std::size_t d = 0; d < dim; ++d) cr[d] += x[d];
        }
        for (int c = 0; c < clients; ++c) {
            double* cr = centroids.row(c);
            for (std::size_t d = 0; d < dim; ++d) cr[d] /= static_cast<double>(counts[c]);
        }
    }

    PartitionPlan plan;
    plan.assignments = std::move(assign);
    plan.clients = clients;
    plan.iterations = iters;
    const auto materialized = materialize_clients(data, plan);
    plan.achieved_emd = emd_population(materialized, bins, classes);
    plan.shapiro_p = shapiro_gate_p(materialized, bins, classes);
    return plan;
}

PartitionPlan anneal_to_target_emd(const PartitionPlan& plan, const LabeledBatch& data, int classes,
                                   const AnnealOptions& opt) {
    if (opt.target_emd < 0.0) throw std::invalid_argument("target EMD must be >= 0");
    check_assignment(plan.assignments, plan.clients, data.size());
    const int k = plan.clients;
    const std::size_t n = data.size();

    const auto reached = [&](double emd) {
        if (emd <= opt.target_emd) return true;
        const double denom = std::max(opt.target_emd, 1e-12);
        return std::abs(emd - opt.target_emd) / denom <= opt.rel_tol;
    };

    PartitionPlan cur = plan;
    cur.iterations = 0;
    {
        const auto clients = materialize_clients(data, cur);
        cur.achieved_emd = emd_population(clients, opt.bins, classes);
        cur.shapiro_p = shapiro_gate_p(clients, opt.bins, classes);
    }
    cur.target_reached = reached(cur.achieved_emd);
    if (cur.target_reached) return cur;

    Rng rng = make_rng(opt.seed);
    const std::size_t batch_moves = std::max<std::size_t>(1, n / 1000);

    for (int iter = 1; iter <= opt.max_iters; ++iter) {
        cur.iterations = iter;
        const auto clients = materialize_clients(data, cur);

        std::vector<const LabeledBatch*> batches;
        for (const auto& c : clients) batches.push_back(&c.batch);
        const FeatureRange range = feature_range(batches);
        std::vector<Signature> sigs;
        sigs.reserve(clients.size());
        for (const auto& c : clients) sigs.push_back(signature_from_dataset(c, opt.bins, classes, range));

        ClientDataset pooled;
        pooled.batch = data;
        const Signature pooled_sig = signature_from_dataset(pooled, opt.bins, classes, range);

        std::vector<std::size_t> sizes(k, 0);
        for (int a : cur.assignments) ++sizes[a];

        // Farthest subset from the pooled distribution that can still donate.
        int far = -1;
        double far_d = -1.0;
        for (int c = 0; c < k; ++c) {
            if (sizes[c] <= opt.min_subset) continue;
            const double d = emd_pair(sigs[c], pooled_sig);
            if (d > far_d) {
                far_d = d;
                far = c;
            }
        }
        if (far < 0) break;

        std::vector<std::size_t> members;
        for (std::size_t r = 0; r < n; ++r)
            if (cur.assignments[r] == far) members.push_back(r);
        std::shuffle(members.begin(), members.end(), rng);
        const std::size_t moves = std::min(batch_moves, members.size() - opt.min_subset);

        // Each moved sample lands in a seeded random other subset; spreading
        // the donations keeps the reduction from stalling between one close
        // pair of subsets.
        PartitionPlan cand = cur;
        std::uniform_int_distribution<int> pick(0, k - 2);
        for (std::size_t i = 0; i < moves; ++i) {
            int dst = pick(rng);
            if (dst >= far) ++dst;
            cand.assignments[members[i]] = dst;
        }

        const auto cand_clients = materialize_clients(data, cand);
        const double cand_emd = emd_population(cand_clients, opt.bins, classes);
        const double cand_p = shapiro_gate_p(cand_clients, opt.bins, classes);

        if (cand_emd <= cur.achieved_emd && cand_p >= opt.alpha) {
            cand.achieved_emd = cand_emd;
            cand.shapiro_p = cand_p;
            cand.iterations = iter;
            cur = std::move(cand);
        }
        if (reached(cur.achieved_emd)) break;
    }

    cur.target_reached = reached(cur.achieved_emd);
    return cur;
}

PartitionPlan anneal_to_target_emd(const PartitionPlan& plan, const LabeledBatch& data, int classes,
                                   double target_emd, std::uint64_t seed, int max_iters) {
    AnnealOptions opt;
    opt.target_emd = target_emd;
    opt.seed = seed;
    opt.max_iters = max_iters;
    return anneal_to_target_emd(plan, data, classes, opt);
}

} // namespace fedgmcc
