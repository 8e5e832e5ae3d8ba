#include "fedgmcc/emd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>

namespace fedgmcc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double euclidean(const double* a, const double* b, std::size_t d) {
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a[i] - b[i];
        s += diff * diff;
    }
    return std::sqrt(s);
}

// Exact transportation solve by successive shortest augmenting paths with
// node potentials (Dijkstra on reduced costs). Supplies and demands are
// real-valued; each augmentation saturates a supplier or a consumer, so the
// loop runs at most m+n times.
Matrix solve_transport(const Matrix& cost, const std::vector<double>& supply,
                       const std::vector<double>& demand) {
    const std::size_t m = supply.size();
    const std::size_t n = demand.size();
    const std::size_t S = 0, T = m + n + 1, V = m + n + 2;

    double total_supply = 0.0, total_demand = 0.0;
    for (double v : supply) total_supply += v;
    for (double v : demand) total_demand += v;
    double remaining = std::min(total_supply, total_demand);
    const double eps = 1e-12 * std::max(1.0, std::max(total_supply, total_demand));

    Matrix flow(m, n, 0.0);
    std::vector<double> shipped(m, 0.0), delivered(n, 0.0);
    std::vector<double> pot(V, 0.0), dist(V);
    std::vector<int> prev(V);
    std::vector<char> done(V);

    const auto rc = [&](double c, std::size_t u, std::size_t v) {
        return std::max(c + pot[u] - pot[v], 0.0);
    };

    while (remaining > eps) {
        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(prev.begin(), prev.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        dist[S] = 0.0;

        for (;;) {
            std::size_t u = V;
            double best = kInf;
            for (std::size_t v = 0; v < V; ++v)
                if (!done[v] && dist[v] < best) {
                    best = dist[v];
                    u = v;
                }
            if (u == V) break;
            done[u] = 1;
            if (u == T) continue;

            const auto relax = [&](std::size_t v, double w) {
                if (dist[u] + w < dist[v]) {
                    dist[v] = dist[u] + w;
                    prev[v] = static_cast<int>(u);
                }
            };

            if (u == S) {
                for (std::size_t i = 0; i < m; ++i)
                    if (supply[i] - shipped[i] > eps) relax(1 + i, rc(0.0, S, 1 + i));
            } else if (u <= m) {
                const std::size_t i = u - 1;
                for (std::size_t j = 0; j < n; ++j) relax(m + 1 + j, rc(cost(i, j), u, m + 1 + j));
            } else {
                const std::size_t j = u - m - 1;
                if (demand[j] - delivered[j] > eps) relax(T, rc(0.0, u, T));
                for (std::size_t i = 0; i < m; ++i)
                    if (flow(i, j) > eps) relax(1 + i, rc(-cost(i, j), u, 1 + i));
            }
        }

        if (dist[T] == kInf) break;
        for (std::size_t v = 0; v < V; ++v)
            if (dist[v] < kInf) pot[v] += dist[v];

        double push = remaining;
        for (std::size_t v = T; v != S;) {
            const std::size_t u = static_cast<std::size_t>(prev[v]);
            if (u == S) {
                push = std::min(push, supply[v - 1] - shipped[v - 1]);
            } else if (v == T) {
                push = std::min(push, demand[u - m - 1] - delivered[u - m - 1]);
            } else if (u > m) {
                // residual arc consumer -> supplier
                push = std::min(push, flow(v - 1, u - m - 1));
            }
            v = u;
        }

        for (std::size_t v = T; v != S;) {
            const std::size_t u = static_cast<std::size_t>(prev[v]);
            if (u == S) {
                shipped[v - 1] += push;
            } else if (v == T) {
                delivered[u - m - 1] += push;
            } else if (u <= m) {
                flow(u - 1, v - m - 1) += push;
            } else {
                flow(v - 1, u - m - 1) -= push;
            }
            v = u;
        }
        remaining -= push;
    }

    for (double& f : flow.data) f = std::max(f, 0.0);
    return flow;
}

void check_pair(const Signature& a, const Signature& b) {
    a.validate();
    b.validate();
    if (a.centroids.cols != b.centroids.cols) throw std::invalid_argument("signature dimension mismatch");
    const double ta = a.total_mass(), tb = b.total_mass();
    if (std::abs(ta - tb) > 1e-9 * std::max({1.0, ta, tb}))
        throw std::invalid_argument("signatures must carry equal total mass");
}

std::vector<ClientDataset const*> as_ptrs(const std::vector<ClientDataset>& ds) {
    std::vector<ClientDataset const*> p;
    p.reserve(ds.size());
    for (const auto& d : ds) p.push_back(&d);
    return p;
}

} // namespace

double Signature::total_mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

void Signature::validate() const {
    if (weights.empty()) throw std::invalid_argument("empty signature");
    if (centroids.rows != weights.size()) throw std::invalid_argument("signature centroid/weight count mismatch");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("signature weights must be positive");
    for (double c : centroids.data)
        if (!std::isfinite(c)) throw std::invalid_argument("signature centroids must be finite");
}

FeatureRange feature_range(const std::vector<const LabeledBatch*>& batches) {
    if (batches.empty()) throw std::invalid_argument("no batches");
    const std::size_t dim = batches.front()->inputs.cols;
    FeatureRange r;
    r.lo.assign(dim, kInf);
    r.hi.assign(dim, -kInf);
    for (const LabeledBatch* b : batches) {
        if (b->inputs.cols != dim) throw std::invalid_argument("dimension mismatch across batches");
        for (std::size_t row = 0; row < b->size(); ++row) {
            const double* x = b->inputs.row(row);
            for (std::size_t d = 0; d < dim; ++d) {
                r.lo[d] = std::min(r.lo[d], x[d]);
                r.hi[d] = std::max(r.hi[d], x[d]);
            }
        }
    }
    return r;
}

Signature signature_from_dataset(const ClientDataset& d, int bins, int classes) {
    return signature_from_dataset(d, bins, classes, feature_range({&d.batch}));
}

Signature signature_from_dataset(const ClientDataset& d, int bins, int classes, const FeatureRange& range) {
    if (d.size() == 0) throw std::invalid_argument("empty dataset");
    if (bins < 1) throw std::invalid_argument("bins must be >= 1");
    if (classes < 2) throw std::invalid_argument("need at least 2 classes");
    const std::size_t dim = d.batch.inputs.cols;
    if (range.lo.size() != dim || range.hi.size() != dim) throw std::invalid_argument("range dimension mismatch");

    double diameter_sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
        const double span = range.hi[k] - range.lo[k];
        diameter_sq += span * span;
    }
    const double class_scale = diameter_sq > 0.0 ? std::sqrt(diameter_sq) : 1.0;

    // (linear cell id, class) -> count; map keeps centroid order deterministic.
    std::map<std::pair<std::uint64_t, int>, std::size_t> counts;
    for (std::size_t r = 0; r < d.size(); ++r) {
        const double* x = d.batch.inputs.row(r);
        std::uint64_t cell = 0;
        for (std::size_t k = 0; k < dim; ++k) {
            const double span = range.hi[k] - range.lo[k];
            int idx = 0;
            if (span > 0.0) {
                idx = static_cast<int>(std::floor((x[k] - range.lo[k]) / span * bins));
                idx = std::clamp(idx, 0, bins - 1);
            }
            cell = cell * static_cast<std::uint64_t>(bins) + static_cast<std::uint64_t>(idx);
        }
        ++counts[{cell, d.batch.labels[r]}];
    }

    Signature sig;
    sig.centroids = Matrix(counts.size(), dim + 1);
    sig.weights.reserve(counts.size());
    std::size_t row = 0;
    for (const auto& [key, count] : counts) {
        std::uint64_t cell = key.first;
        double* c = sig.centroids.row(row);
        for (std::size_t k = dim; k-- > 0;) {
            const std::uint64_t idx = cell % bins;
            cell /= bins;
            const double span = range.hi[k] - range.lo[k];
            c[k] = span > 0.0 ? range.lo[k] + (static_cast<double>(idx) + 0.5) * span / bins : range.lo[k];
        }
        c[dim] = static_cast<double>(key.second) * class_scale;
        sig.weights.push_back(static_cast<double>(count) / static_cast<double>(d.size()));
        ++row;
    }
    return sig;
}

EmdResult emd_pair_with_flow(const Signature& a, const Signature& b) {
    check_pair(a, b);
    const std::size_t m = a.size(), n = b.size(), dim = a.centroids.cols;

    EmdResult res;
    res.flow.costs = Matrix(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            res.flow.costs(i, j) = euclidean(a.centroids.row(i), b.centroids.row(j), dim);

    res.flow.flows = solve_transport(res.flow.costs, a.weights, b.weights);

    double cost = 0.0, total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            cost += res.flow.costs(i, j) * res.flow.flows(i, j);
            total += res.flow.flows(i, j);
        }
    res.distance = total > 0.0 ? cost / total : 0.0;
    return res;
}

double emd_pair(const Signature& a, const Signature& b) { return emd_pair_with_flow(a, b).distance; }

double emd_population(const std::vector<ClientDataset>& datasets, int bins, int classes) {
    if (datasets.size() < 2) throw std::invalid_argument("need at least 2 datasets");

    ClientDataset pooled;
    pooled.client_id = -1;
    const std::size_t dim = datasets.front().batch.inputs.cols;
    std::size_t total = 0;
    for (const auto& d : datasets) {
        if (d.batch.inputs.cols != dim) throw std::invalid_argument("dimension mismatch across datasets");
        total += d.size();
    }
    pooled.batch.inputs = Matrix(total, dim);
    pooled.batch.labels.reserve(total);
    std::size_t row = 0;
    for (const auto& d : datasets) {
        std::copy(d.batch.inputs.data.begin(), d.batch.inputs.data.end(), pooled.batch.inputs.row(row));
        pooled.batch.labels.insert(pooled.batch.labels.end(), d.batch.labels.begin(), d.batch.labels.end());
        row += d.size();
    }

    const FeatureRange range = feature_range({&pooled.batch});
    const Signature pooled_sig = signature_from_dataset(pooled, bins, classes, range);

    double score = 0.0;
    for (const auto& d : datasets) {
        const Signature sig = signature_from_dataset(d, bins, classes, range);
        score += static_cast<double>(d.size()) * emd_pair(sig, pooled_sig);
    }
    return score / static_cast<double>(total);
}

Matrix emd_pairwise_matrix(const std::vector<ClientDataset>& datasets, int bins, int classes) {
    const auto ptrs = as_ptrs(datasets);
    std::vector<const LabeledBatch*> batches;
    batches.reserve(ptrs.size());
    for (const auto* d : ptrs) batches.push_back(&d->batch);
    const FeatureRange range = feature_range(batches);

    std::vector<Signature> sigs;
    sigs.reserve(datasets.size());
    for (const auto& d : datasets) sigs.push_back(signature_from_dataset(d, bins, classes, range));

    const std::size_t k = datasets.size();
    Matrix out(k, k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) {
            const double v = emd_pair(sigs[i], sigs[j]);
            out(i, j) = v;
            out(j, i) = v;
        }
    return out;
}

} // namespace fedgmcc
