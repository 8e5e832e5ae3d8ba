#include "fedgmcc/config.hpp"

#include <cmath>
#include <set>

#include <json.hpp>

namespace fedgmcc {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::string& scope, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ConfigError("unknown config key: " + (scope.empty() ? key : scope + "." + key));
    }
}

template <class T>
T get_or(const json& obj, const std::string& scope, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for config key: " + (scope.empty() ? key : scope + "." + key));
    }
}

void require_range(bool ok, const std::string& field) {
    if (!ok) throw ConfigError("config value out of range: " + field);
}

GmccConfig parse_gmcc(const json& obj) {
    reject_unknown_keys(obj, "gmcc",
                        {"epsilon", "adapt", "adapt_mode", "n_mc", "eta", "steps", "grid_points",
                         "theta_init", "normalize_pairs"});
    GmccConfig g;
    if (obj.contains("epsilon")) {
        const json& e = obj.at("epsilon");
        if (e.is_string()) {
            if (e.get<std::string>() != "median") throw ConfigError("gmcc.epsilon must be a number or \"median\"");
            g.initialized = false;
        } else if (e.is_number()) {
            g.epsilon = e.get<double>();
            g.initialized = true;
            require_range(g.epsilon >= 0.0 && std::isfinite(g.epsilon), "gmcc.epsilon");
        } else {
            throw ConfigError("gmcc.epsilon must be a number or \"median\"");
        }
    }
    g.epsilon_adapt = get_or(obj, "gmcc", "adapt", true);
    const std::string mode = get_or<std::string>(obj, "gmcc", "adapt_mode", "percentile");
    if (mode == "percentile")
        g.adapt_mode = GmccConfig::AdaptMode::Percentile;
    else if (mode == "multiplicative")
        g.adapt_mode = GmccConfig::AdaptMode::Multiplicative;
    else
        throw ConfigError("gmcc.adapt_mode must be \"percentile\" or \"multiplicative\"");
    g.n_mc = get_or<std::size_t>(obj, "gmcc", "n_mc", g.n_mc);
    require_range(g.n_mc >= 1, "gmcc.n_mc");
    g.eta = get_or(obj, "gmcc", "eta", g.eta);
    require_range(g.eta > 0.0, "gmcc.eta");
    g.steps = get_or(obj, "gmcc", "steps", g.steps);
    require_range(g.steps >= 0, "gmcc.steps");
    g.grid_points = get_or(obj, "gmcc", "grid_points", g.grid_points);
    require_range(g.grid_points >= 11, "gmcc.grid_points");
    const std::string ti = get_or<std::string>(obj, "gmcc", "theta_init", "sum");
    if (ti == "sum")
        g.theta_init = ThetaInit::Sum;
    else if (ti == "midpoint")
        g.theta_init = ThetaInit::Midpoint;
    else
        throw ConfigError("gmcc.theta_init must be \"sum\" or \"midpoint\"");
    g.normalize_pair_sum = get_or(obj, "gmcc", "normalize_pairs", true);
    return g;
}

TaskGroupSpec parse_group(const json& obj, int index) {
    const std::string scope = "task.groups[" + std::to_string(index) + "]";
    reject_unknown_keys(obj, scope, {"clients", "rotation", "scale", "sign_flip", "concept_shift"});
    TaskGroupSpec g;
    g.clients = get_or(obj, scope, "clients", 1);
    require_range(g.clients >= 1, scope + ".clients");

    int transforms = 0;
    if (obj.contains("rotation")) {
        ++transforms;
        g.transform = FeatureTransform::rotation(get_or(obj, scope, "rotation", 0.0));
    }
    if (obj.contains("scale")) {
        ++transforms;
        g.transform = FeatureTransform::scale(get_or<std::vector<double>>(obj, scope, "scale", {}));
    }
    if (obj.contains("sign_flip")) {
        ++transforms;
        g.transform = FeatureTransform::sign_flip(get_or<std::vector<int>>(obj, scope, "sign_flip", {}));
    }
    if (transforms > 1) throw ConfigError("at most one transform per group: " + scope);

    g.concept_shift = get_or(obj, scope, "concept_shift", 0.0);
    require_range(g.concept_shift >= 0.0 && g.concept_shift <= 1.0, scope + ".concept_shift");
    return g;
}

json group_to_json(const TaskGroupSpec& g) {
    json o;
    o["clients"] = g.clients;
    if (g.transform) {
        switch (g.transform->kind) {
            case FeatureTransform::Kind::Rotation:
                o["rotation"] = g.transform->params.at(0);
                break;
            case FeatureTransform::Kind::Scale:
                o["scale"] = g.transform->params;
                break;
            case FeatureTransform::Kind::SignFlip: {
                std::vector<int> dims;
                for (double d : g.transform->params) dims.push_back(static_cast<int>(d));
                o["sign_flip"] = dims;
                break;
            }
        }
    }
    o["concept_shift"] = g.concept_shift;
    return o;
}

} // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw ConfigError("config root must be an object");

    reject_unknown_keys(root, "",
                        {"strategy", "clients", "rounds", "local_epochs", "batch_size", "lr", "mu",
                         "threads", "gmcc", "cfl", "partition", "task", "seeds"});

    ExperimentConfig cfg;
    try {
        cfg.strategy = strategy_from_name(get_or<std::string>(root, "", "strategy", "fedavg"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    cfg.clients = get_or(root, "", "clients", cfg.clients);
    require_range(cfg.clients >= 1, "clients");
    cfg.rounds = get_or(root, "", "rounds", cfg.rounds);
    require_range(cfg.rounds >= 0, "rounds");
    cfg.local_epochs = get_or(root, "", "local_epochs", cfg.local_epochs);
    require_range(cfg.local_epochs >= 0, "local_epochs");
    cfg.batch_size = get_or(root, "", "batch_size", cfg.batch_size);
    require_range(cfg.batch_size >= 1, "batch_size");
    cfg.lr = get_or(root, "", "lr", cfg.lr);
    require_range(cfg.lr >= 0.0 && std::isfinite(cfg.lr), "lr");
    cfg.mu = get_or(root, "", "mu", cfg.mu);
    require_range(cfg.mu >= 0.0 && std::isfinite(cfg.mu), "mu");
    cfg.threads = get_or(root, "", "threads", cfg.threads);
    require_range(cfg.threads >= 1, "threads");

    if (root.contains("gmcc")) cfg.gmcc = parse_gmcc(root.at("gmcc"));

    if (root.contains("cfl")) {
        const json& c = root.at("cfl");
        reject_unknown_keys(c, "cfl", {"eps1", "gamma"});
        cfg.cfl.eps1 = get_or(c, "cfl", "eps1", cfg.cfl.eps1);
        require_range(cfg.cfl.eps1 > 0.0, "cfl.eps1");
        cfg.cfl.gamma = get_or(c, "cfl", "gamma", cfg.cfl.gamma);
        require_range(cfg.cfl.gamma >= -1.0 && cfg.cfl.gamma <= 1.0, "cfl.gamma");
    }

    if (root.contains("partition")) {
        const json& p = root.at("partition");
        reject_unknown_keys(p, "partition", {"mode", "target_emd", "bins", "seed", "max_iters"});
        const std::string mode = get_or<std::string>(p, "partition", "mode", "iid");
        if (mode == "iid")
            cfg.partition.mode = PartitionConfig::Mode::Iid;
        else if (mode == "emd")
            cfg.partition.mode = PartitionConfig::Mode::EmdTarget;
        else if (mode == "groups")
            cfg.partition.mode = PartitionConfig::Mode::Groups;
        else
            throw ConfigError("partition.mode must be \"iid\", \"emd\" or \"groups\"");
        cfg.partition.target_emd = get_or(p, "partition", "target_emd", 0.0);
        require_range(cfg.partition.target_emd >= 0.0, "partition.target_emd");
        cfg.partition.bins = get_or(p, "partition", "bins", cfg.partition.bins);
        require_range(cfg.partition.bins >= 1, "partition.bins");
        cfg.partition.seed = get_or<std::uint64_t>(p, "partition", "seed", cfg.partition.seed);
        cfg.partition.max_iters = get_or(p, "partition", "max_iters", cfg.partition.max_iters);
        require_range(cfg.partition.max_iters >= 0, "partition.max_iters");
    }

    if (root.contains("task")) {
        const json& t = root.at("task");
        reject_unknown_keys(t, "task",
                            {"n_per_client", "dim", "classes", "separation", "hidden", "groups"});
        cfg.task.n_per_client = get_or<std::size_t>(t, "task", "n_per_client", cfg.task.n_per_client);
        cfg.task.dim = get_or(t, "task", "dim", cfg.task.dim);
        require_range(cfg.task.dim >= 2 && cfg.task.dim <= 16, "task.dim");
        cfg.task.classes = get_or(t, "task", "classes", cfg.task.classes);
        require_range(cfg.task.classes >= 2, "task.classes");
        require_range(cfg.task.n_per_client >= static_cast<std::size_t>(cfg.task.classes) * 10,
                      "task.n_per_client");
        cfg.task.separation = get_or(t, "task", "separation", cfg.task.separation);
        require_range(cfg.task.separation > 0.0, "task.separation");
        cfg.task.hidden = get_or<std::vector<int>>(t, "task", "hidden", cfg.task.hidden);
        for (int h : cfg.task.hidden) require_range(h >= 1, "task.hidden");
        if (t.contains("groups")) {
            const json& gs = t.at("groups");
            if (!gs.is_array()) throw ConfigError("task.groups must be an array");
            cfg.task.groups.clear();
            int i = 0;
            for (const json& g : gs) cfg.task.groups.push_back(parse_group(g, i++));
        }
    }

    if (root.contains("seeds")) {
        const json& s = root.at("seeds");
        reject_unknown_keys(s, "seeds", {"init", "data", "probe"});
        cfg.seeds.init = get_or<std::uint64_t>(s, "seeds", "init", cfg.seeds.init);
        cfg.seeds.data = get_or<std::uint64_t>(s, "seeds", "data", cfg.seeds.data);
        cfg.seeds.probe = get_or<std::uint64_t>(s, "seeds", "probe", cfg.seeds.probe);
    }

    if (cfg.partition.mode == PartitionConfig::Mode::Groups) {
        if (cfg.task.groups.empty()) throw ConfigError("partition.mode=groups requires task.groups");
        int total = 0;
        for (const auto& g : cfg.task.groups) total += g.clients;
        if (total != cfg.clients)
            throw ConfigError("task.groups client counts must sum to clients");
    } else if (!cfg.task.groups.empty()) {
        throw ConfigError("task.groups is only valid with partition.mode=groups");
    }

    return cfg;
}

std::string experiment_config_to_json(const ExperimentConfig& cfg) {
    json root;
    root["strategy"] = strategy_name(cfg.strategy);
    root["clients"] = cfg.clients;
    root["rounds"] = cfg.rounds;
    root["local_epochs"] = cfg.local_epochs;
    root["batch_size"] = cfg.batch_size;
    root["lr"] = cfg.lr;
    root["mu"] = cfg.mu;
    root["threads"] = cfg.threads;

    json g;
    if (cfg.gmcc.initialized)
        g["epsilon"] = cfg.gmcc.epsilon;
    else
        g["epsilon"] = "median";
    g["adapt"] = cfg.gmcc.epsilon_adapt;
    g["adapt_mode"] = cfg.gmcc.adapt_mode == GmccConfig::AdaptMode::Percentile ? "percentile" : "multiplicative";
    g["n_mc"] = cfg.gmcc.n_mc;
    g["eta"] = cfg.gmcc.eta;
    g["steps"] = cfg.gmcc.steps;
    g["grid_points"] = cfg.gmcc.grid_points;
    g["theta_init"] = cfg.gmcc.theta_init == ThetaInit::Sum ? "sum" : "midpoint";
    g["normalize_pairs"] = cfg.gmcc.normalize_pair_sum;
    root["gmcc"] = g;

    root["cfl"] = {{"eps1", cfg.cfl.eps1}, {"gamma", cfg.cfl.gamma}};

    json p;
    switch (cfg.partition.mode) {
        case PartitionConfig::Mode::Iid: p["mode"] = "iid"; break;
        case PartitionConfig::Mode::EmdTarget: p["mode"] = "emd"; break;
        case PartitionConfig::Mode::Groups: p["mode"] = "groups"; break;
    }
    p["target_emd"] = cfg.partition.target_emd;
    p["bins"] = cfg.partition.bins;
    p["seed"] = cfg.partition.seed;
    p["max_iters"] = cfg.partition.max_iters;
    root["partition"] = p;

    json t;
    t["n_per_client"] = cfg.task.n_per_client;
    t["dim"] = cfg.task.dim;
    t["classes"] = cfg.task.classes;
    t["separation"] = cfg.task.separation;
    t["hidden"] = cfg.task.hidden;
    if (!cfg.task.groups.empty()) {
        json gs = json::array();
        for (const auto& gr : cfg.task.groups) gs.push_back(group_to_json(gr));
        t["groups"] = gs;
    }
    root["task"] = t;

    root["seeds"] = {{"init", cfg.seeds.init}, {"data", cfg.seeds.data}, {"probe", cfg.seeds.probe}};
    return root.dump(2) + "\n";
}

} // namespace fedgmcc
