#include "fedgmcc/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "fedgmcc/emd.hpp"
#include "fedgmcc/parallel.hpp"
#include "fedgmcc/partitioner.hpp"
#include "fedgmcc/rng.hpp"

namespace fedgmcc {

namespace {

constexpr std::uint64_t kTagClientData = 0x11;
constexpr std::uint64_t kTagShift = 0x22;
constexpr std::uint64_t kTagSplit = 0x33;
constexpr std::uint64_t kTagUpdate = 0x44;

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

LabeledBatch concat_batches(const std::vector<const LabeledBatch*>& parts) {
    std::size_t n = 0;
    const std::size_t dim = parts.front()->inputs.cols;
    for (const auto* p : parts) n += p->size();
    LabeledBatch out;
    out.inputs = Matrix(n, dim);
    out.labels.reserve(n);
    std::size_t row = 0;
    for (const auto* p : parts) {
        std::copy(p->inputs.data.begin(), p->inputs.data.end(), out.inputs.row(row));
        out.labels.insert(out.labels.end(), p->labels.begin(), p->labels.end());
        row += p->size();
    }
    return out;
}

std::vector<ClientDataset> build_clients(const ExperimentConfig& cfg, double* achieved_emd) {
    const TaskConfig& task = cfg.task;
    std::vector<ClientDataset> clients;
    clients.reserve(cfg.clients);

    switch (cfg.partition.mode) {
        case PartitionConfig::Mode::Groups: {
            int client_id = 0;
            for (const auto& group : task.groups) {
                for (int g = 0; g < group.clients; ++g, ++client_id) {
                    LabeledBatch b = gen_base_task(task.n_per_client, task.classes,
                                                   mix_seed(cfg.seeds.data, kTagClientData,
                                                            static_cast<std::uint64_t>(client_id)),
                                                   task.dim, task.separation);
                    if (group.transform) b = apply_feature_transform(b, *group.transform);
                    if (group.concept_shift > 0.0)
                        b = apply_concept_shift(b, group.concept_shift,
                                                mix_seed(cfg.seeds.data, kTagShift,
                                                         static_cast<std::uint64_t>(client_id)),
                                                task.classes);
                    clients.push_back(ClientDataset{client_id, std::move(b)});
                }
            }
            break;
        }
        case PartitionConfig::Mode::Iid: {
            const std::size_t total = task.n_per_client * static_cast<std::size_t>(cfg.clients);
            LabeledBatch base = gen_base_task(total, task.classes, mix_seed(cfg.seeds.data, kTagClientData),
                                              task.dim, task.separation);
            // Rows are already shuffled, so contiguous chunks are a uniform split.
            for (int c = 0; c < cfg.clients; ++c) {
                const std::size_t begin = c * task.n_per_client;
                ClientDataset d;
                d.client_id = c;
                d.batch.inputs = Matrix(task.n_per_client, task.dim);
                d.batch.labels.assign(base.labels.begin() + begin,
                                      base.labels.begin() + begin + task.n_per_client);
                std::copy(base.inputs.row(begin), base.inputs.row(begin + task.n_per_client),
                          d.batch.inputs.row(0));
                clients.push_back(std::move(d));
            }
            break;
        }
        case PartitionConfig::Mode::EmdTarget: {
            const std::size_t total = task.n_per_client * static_cast<std::size_t>(cfg.clients);
            LabeledBatch base = gen_base_task(total, task.classes, mix_seed(cfg.seeds.data, kTagClientData),
                                              task.dim, task.separation);
            PartitionPlan plan = kmeans_seed_partition(base, cfg.clients, cfg.partition.seed,
                                                       task.classes, cfg.partition.bins);
            AnnealOptions opt;
            opt.target_emd = cfg.partition.target_emd;
            opt.seed = mix_seed(cfg.partition.seed, 0x7a);
            opt.max_iters = cfg.partition.max_iters;
            opt.bins = cfg.partition.bins;
            plan = anneal_to_target_emd(plan, base, task.classes, opt);
            clients = materialize_clients(base, plan);
            break;
        }
    }

    if (clients.size() >= 2)
        *achieved_emd = emd_population(clients, cfg.partition.bins, task.classes);
    else
        *achieved_emd = 0.0;
    return clients;
}

struct ClusterEval {
    double val_loss = 0.0;
    double val_acc = 0.0;
};

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentResult result;
    result.summary.strategy = strategy_name(cfg.strategy);
    result.summary.clients = cfg.clients;
    result.summary.rounds = cfg.rounds;

    std::vector<ClientDataset> datasets = build_clients(cfg, &result.summary.partition_emd);
    const int k = static_cast<int>(datasets.size());
    for (const auto& d : datasets)
        if (d.size() < 2)
            throw std::invalid_argument("client " + std::to_string(d.client_id) +
                                        " has fewer than 2 samples; cannot split train/val");

    {
        std::vector<LabeledBatch*> batches;
        for (auto& d : datasets) batches.push_back(&d.batch);
        normalize_unit_box(batches);
    }

    std::vector<ClientState> clients(k);
    std::vector<LabeledBatch> train(k), val(k);
    for (int c = 0; c < k; ++c) {
        clients[c].id = c;
        clients[c].dataset = datasets[c];
        std::tie(train[c], val[c]) =
            split_train_val(datasets[c].batch, 0.8, mix_seed(cfg.seeds.data, kTagSplit, c));
    }

    std::vector<int> arch_sizes{cfg.task.dim};
    arch_sizes.insert(arch_sizes.end(), cfg.task.hidden.begin(), cfg.task.hidden.end());
    arch_sizes.push_back(cfg.task.classes);
    const ModelArch arch{arch_sizes};
    const WeightVector w0 = init_weights(arch, cfg.seeds.init);

    std::vector<std::vector<int>> groups{std::vector<int>(k)};
    std::iota(groups[0].begin(), groups[0].end(), 0);
    std::vector<WeightVector> models{w0};
    for (int c = 0; c < k; ++c) {
        clients[c].current_weights = w0;
        clients[c].assigned_cluster = 0;
    }

    GmccConfig gmcc = cfg.gmcc;

    const auto evaluate = [&](int round, double wall_ms,
                              const std::vector<double>& client_train_loss) {
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            const auto& members = groups[gi];
            std::vector<const LabeledBatch*> vparts;
            double tl = 0.0;
            for (int c : members) {
                vparts.push_back(&val[c]);
                tl += client_train_loss[c];
            }
            const LabeledBatch vpool = concat_batches(vparts);
            RoundMetrics row;
            row.round = round;
            row.cluster_id = members.front();
            row.cluster_size = static_cast<int>(members.size());
            row.val_loss = cross_entropy_loss(models[gi], vpool);
            row.val_acc = accuracy(models[gi], vpool);
            row.train_loss = tl / static_cast<double>(members.size());
            row.cluster_count = static_cast<int>(groups.size());
            row.wall_ms = wall_ms;
            result.rows.push_back(row);
        }
    };

    {
        std::vector<double> initial_loss(k);
        for (int c = 0; c < k; ++c) initial_loss[c] = cross_entropy_loss(w0, train[c]);
        evaluate(0, 0.0, initial_loss);
    }

    for (int round = 1; round <= cfg.rounds; ++round) {
        const auto r0 = std::chrono::steady_clock::now();

        std::vector<WeightVector> updates(k, zero_weights(arch));
        parallel_for(static_cast<std::size_t>(k), cfg.threads, [&](std::size_t c) {
            ClientUpdateOptions opt;
            opt.local_epochs = cfg.local_epochs;
            opt.batch_size = cfg.batch_size;
            opt.lr = cfg.lr;
            opt.mu = cfg.strategy == Strategy::FedProx ? cfg.mu : 0.0;
            opt.seed = mix_seed(cfg.seeds.init, kTagUpdate, static_cast<std::uint64_t>(round), c);
            updates[c] = client_update(train[c], models[clients[c].assigned_cluster], opt);
        });

        std::vector<double> client_train_loss(k);
        for (int c = 0; c < k; ++c) client_train_loss[c] = cross_entropy_loss(updates[c], train[c]);

        if (k == 1) {
            models = {updates[0]};
            groups = {{0}};
        } else {
            switch (cfg.strategy) {
                case Strategy::FedAvg:
                case Strategy::FedProx: {
                    std::vector<std::pair<WeightVector, std::size_t>> parts;
                    parts.reserve(k);
                    for (int c = 0; c < k; ++c) parts.emplace_back(updates[c], train[c].size());
                    models = {aggregate_fedavg(parts)};
                    groups.assign(1, std::vector<int>(k));
                    std::iota(groups[0].begin(), groups[0].end(), 0);
                    break;
                }
                case Strategy::Cfl: {
                    std::vector<std::vector<int>> next_groups;
                    std::vector<WeightVector> next_models;
                    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
                        const auto& members = groups[gi];
                        std::vector<WeightVector> member_updates;
                        std::vector<std::size_t> sizes;
                        for (int c : members) {
                            member_updates.push_back(updates[c]);
                            sizes.push_back(train[c].size());
                        }
                        const CflSplit split = aggregate_cfl(member_updates, sizes, models[gi], cfg.cfl);
                        for (std::size_t s = 0; s < split.clusters.size(); ++s) {
                            std::vector<int> ids;
                            for (int local : split.clusters[s]) ids.push_back(members[local]);
                            std::sort(ids.begin(), ids.end());
                            next_groups.push_back(std::move(ids));
                            next_models.push_back(split.weights[s]);
                        }
                    }
                    // Stable ordering by smallest member.
                    std::vector<std::size_t> order(next_groups.size());
                    std::iota(order.begin(), order.end(), 0);
                    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                        return next_groups[a].front() < next_groups[b].front();
                    });
                    groups.clear();
                    models.clear();
                    for (std::size_t i : order) {
                        groups.push_back(std::move(next_groups[i]));
                        models.push_back(std::move(next_models[i]));
                    }
                    break;
                }
                case Strategy::FedGmcc: {
                    GmccRoundResult r = gmcc_round(updates, gmcc, cfg.seeds.probe, cfg.threads);
                    groups = r.groups;
                    models = r.cluster_weights;
                    result.summary.epsilon_trace.push_back(r.epsilon_used);
                    if (gmcc.epsilon_adapt) adapt_epsilon(gmcc, r.pair_stats, r.cluster_count);
                    break;
                }
            }
        }

        for (std::size_t gi = 0; gi < groups.size(); ++gi)
            for (int c : groups[gi]) {
                clients[c].assigned_cluster = static_cast<int>(gi);
                clients[c].current_weights = models[gi];
            }

        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - r0).count();
        evaluate(round, wall_ms, client_train_loss);
    }

    // Final val-sample weighted summary over clusters.
    {
        double acc = 0.0, loss = 0.0;
        std::size_t weight = 0;
        for (std::size_t gi = 0; gi < groups.size(); ++gi) {
            std::vector<const LabeledBatch*> vparts;
            for (int c : groups[gi]) vparts.push_back(&val[c]);
            const LabeledBatch vpool = concat_batches(vparts);
            acc += accuracy(models[gi], vpool) * static_cast<double>(vpool.size());
            loss += cross_entropy_loss(models[gi], vpool) * static_cast<double>(vpool.size());
            weight += vpool.size();
        }
        result.summary.final_val_acc = acc / static_cast<double>(weight);
        result.summary.final_val_loss = loss / static_cast<double>(weight);
        result.summary.final_cluster_count = static_cast<int>(groups.size());
    }
    result.summary.wall_ms_total =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::string metrics_csv(const std::vector<RoundMetrics>& rows) {
    std::string out = "round,cluster,size,val_loss,val_acc,train_loss,clusters\r\n";
    for (const auto& r : rows) {
        out += std::to_string(r.round);
        out += ',';
        out += std::to_string(r.cluster_id);
        out += ',';
        out += std::to_string(r.cluster_size);
        out += ',';
        out += fmt_double(r.val_loss);
        out += ',';
        out += fmt_double(r.val_acc);
        out += ',';
        out += fmt_double(r.train_loss);
        out += ',';
        out += std::to_string(r.cluster_count);
        out += "\r\n";
    }
    return out;
}

std::string summary_json(const ExperimentSummary& s) {
    nlohmann::json j;
    j["strategy"] = s.strategy;
    j["clients"] = s.clients;
    j["rounds"] = s.rounds;
    j["final_cluster_count"] = s.final_cluster_count;
    j["final_val_acc"] = s.final_val_acc;
    j["final_val_loss"] = s.final_val_loss;
    j["partition_emd"] = s.partition_emd;
    j["epsilon_trace"] = s.epsilon_trace;
    j["wall_ms_total"] = s.wall_ms_total;
    return j.dump(2) + "\n";
}

} // namespace fedgmcc
