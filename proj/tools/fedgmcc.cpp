// Command-line front end: dataset generation, partitioning, EMD reports,
// experiment runs and curve-profile export.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedgmcc/config.hpp"
#include "fedgmcc/curve.hpp"
#include "fedgmcc/emd.hpp"
#include "fedgmcc/experiment.hpp"
#include "fedgmcc/partitioner.hpp"
#include "fedgmcc/rng.hpp"

namespace {

using namespace fedgmcc;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

int default_threads() {
    if (const char* env = std::getenv("FEDGMCC_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) return v;
    }
    return 1;
}

struct GenArgs {
    std::string out;
    std::size_t n = 256;
    int classes = 2;
    int dim = 2;
    double separation = 6.0;
    std::uint64_t seed = 0;
    std::optional<double> rotation;
    std::vector<double> scale;
    std::vector<int> sign_flip;
    double concept_shift = 0.0;
    std::uint64_t shift_seed = 0;
};

void cmd_gen(const GenArgs& a) {
    LabeledBatch b = gen_base_task(a.n, a.classes, a.seed, a.dim, a.separation);
    if (a.rotation) b = apply_feature_transform(b, FeatureTransform::rotation(*a.rotation));
    if (!a.scale.empty()) b = apply_feature_transform(b, FeatureTransform::scale(a.scale));
    if (!a.sign_flip.empty()) b = apply_feature_transform(b, FeatureTransform::sign_flip(a.sign_flip));
    if (a.concept_shift > 0.0) b = apply_concept_shift(b, a.concept_shift, a.shift_seed, a.classes);
    write_dataset(a.out, ClientDataset{0, std::move(b)}, a.classes);
    std::cout << "wrote " << a.out << " (" << a.n << " rows, " << a.dim << " dims, " << a.classes
              << " classes)\n";
}

struct PartitionArgs {
    std::string input;
    std::string out_dir;
    int clients = 4;
    double target_emd = 0.0;
    int bins = 8;
    std::uint64_t seed = 0;
    int max_iters = 200;
};

void cmd_partition(const PartitionArgs& a) {
    const ReadResult in = read_dataset(a.input);
    PartitionPlan plan = kmeans_seed_partition(in.dataset.batch, a.clients, a.seed, in.classes, a.bins);
    AnnealOptions opt;
    opt.target_emd = a.target_emd;
    opt.seed = mix_seed(a.seed, 0x7a);
    opt.max_iters = a.max_iters;
    opt.bins = a.bins;
    plan = anneal_to_target_emd(plan, in.dataset.batch, in.classes, opt);

    std::filesystem::create_directories(a.out_dir);
    const auto clients = materialize_clients(in.dataset.batch, plan);
    for (const auto& c : clients) {
        const std::string path = a.out_dir + "/client_" + std::to_string(c.client_id) + ".fgmc";
        write_dataset(path, c, in.classes);
    }

    nlohmann::json report;
    report["clients"] = a.clients;
    report["target_emd"] = a.target_emd;
    report["achieved_emd"] = plan.achieved_emd;
    report["iterations"] = plan.iterations;
    report["target_reached"] = plan.target_reached;
    report["shapiro_p"] = plan.shapiro_p;
    write_text(a.out_dir + "/report.json", report.dump(2) + "\n");
    std::cout << "achieved_emd " << fmt(plan.achieved_emd) << " after " << plan.iterations
              << " iterations (target_reached=" << (plan.target_reached ? "true" : "false") << ")\n";
}

struct EmdArgs {
    std::vector<std::string> inputs;
    int bins = 8;
    std::string matrix_out;
};

void cmd_emd(const EmdArgs& a) {
    std::vector<ClientDataset> datasets;
    int classes = 0;
    for (std::size_t i = 0; i < a.inputs.size(); ++i) {
        ReadResult r = read_dataset(a.inputs[i], static_cast<int>(i));
        classes = std::max(classes, r.classes);
        datasets.push_back(std::move(r.dataset));
    }
    std::cout << fmt(emd_population(datasets, a.bins, classes)) << "\n";

    if (!a.matrix_out.empty()) {
        const Matrix m = emd_pairwise_matrix(datasets, a.bins, classes);
        std::string csv;
        for (std::size_t i = 0; i < m.rows; ++i) csv += (i ? "," : "") + ("client_" + std::to_string(i));
        csv += "\r\n";
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t j = 0; j < m.cols; ++j) csv += (j ? "," : "") + fmt(m(i, j));
            csv += "\r\n";
        }
        write_text(a.matrix_out, csv);
    }
}

struct RunArgs {
    std::string config;
    std::string out_dir = ".";
    int threads = 0;
};

void cmd_run(const RunArgs& a) {
    ExperimentConfig cfg = parse_experiment_config(read_text(a.config));
    if (a.threads >= 1) cfg.threads = a.threads;
    const ExperimentResult res = run_experiment(cfg);

    std::filesystem::create_directories(a.out_dir);
    write_text(a.out_dir + "/metrics.csv", metrics_csv(res.rows));
    write_text(a.out_dir + "/summary.json", summary_json(res.summary));
    std::cout << "final_val_acc " << fmt(res.summary.final_val_acc) << " clusters "
              << res.summary.final_cluster_count << "\n";
}

struct CurveProfileArgs {
    std::string input_a;
    std::string input_b;
    std::string out;
    std::vector<int> hidden{16};
    int epochs = 30;
    int batch_size = 64;
    double lr = 0.001;
    std::uint64_t seed_a = 1;
    std::uint64_t seed_b = 2;
    std::size_t n_mc = 256;
    double eta = 0.1;
    int steps = 2000;
    int grid_points = 21;
    std::uint64_t probe_seed = 3;
};

void cmd_curveprofile(const CurveProfileArgs& a) {
    ReadResult ra = read_dataset(a.input_a, 0);
    ReadResult rb = read_dataset(a.input_b, 1);
    const int classes = std::max(ra.classes, rb.classes);
    std::vector<LabeledBatch*> batches{&ra.dataset.batch, &rb.dataset.batch};
    normalize_unit_box(batches);

    std::vector<int> sizes{static_cast<int>(ra.dataset.batch.inputs.cols)};
    sizes.insert(sizes.end(), a.hidden.begin(), a.hidden.end());
    sizes.push_back(classes);
    const ModelArch arch{sizes};

    SgdOptions sgd;
    sgd.epochs = a.epochs;
    sgd.batch_size = a.batch_size;
    sgd.lr = a.lr;
    sgd.seed = mix_seed(a.seed_a, 0x51);
    const WeightVector wa = sgd_train(init_weights(arch, a.seed_a), ra.dataset.batch, sgd);
    sgd.seed = mix_seed(a.seed_b, 0x52);
    const WeightVector wb = sgd_train(init_weights(arch, a.seed_b), rb.dataset.batch, sgd);

    const MonteCarloProbe probe = make_probe(a.n_mc, arch.input_dim(), a.probe_seed);

    FitOptions fo;
    fo.eta = a.eta;
    fo.steps = a.steps;
    fo.grid_points = a.grid_points;
    fo.seed = mix_seed(a.probe_seed, 0x53);
    const FitResult fit = fit_curve(wa, wb, probe, fo);
    const FlatnessProfile chain = flatness(fit.curve, wb, probe);

    CurveParams straight = fit.curve;
    straight.theta = scale(add(wa, wb), 0.5);
    const FlatnessProfile linear = flatness(straight, wb, probe);

    std::string csv = "u,chain_loss,linear_loss\r\n";
    for (std::size_t i = 0; i < chain.u.size(); ++i)
        csv += fmt(chain.u[i]) + "," + fmt(chain.losses[i]) + "," + fmt(linear.losses[i]) + "\r\n";
    write_text(a.out, csv);
    std::cout << "chain_max_du " << fmt(chain.max_du) << " linear_max_du " << fmt(linear.max_du) << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Federated-learning simulator with curve-based model clustering"};
    app.require_subcommand(1);
    int threads = default_threads();
    app.add_option("--threads", threads, "worker threads for client updates and pair fits");

    GenArgs gen;
    CLI::App* cgen = app.add_subcommand("gen", "generate a synthetic blob classification dataset");
    cgen->add_option("--out", gen.out, "output dataset file")->required();
    cgen->add_option("--n", gen.n, "number of samples");
    cgen->add_option("--classes", gen.classes, "class count");
    cgen->add_option("--dim", gen.dim, "feature dimensions");
    cgen->add_option("--separation", gen.separation, "blob separation in sigmas");
    cgen->add_option("--seed", gen.seed, "generator seed");
    cgen->add_option("--rotation", [&gen](const std::vector<std::string>& v) {
        gen.rotation = std::stod(v.at(0));
        return true;
    }, "rotate first two feature dims by this angle (radians)");
    cgen->add_option("--scale", gen.scale, "per-dimension scale factors");
    cgen->add_option("--sign-flip", gen.sign_flip, "dimensions to negate");
    cgen->add_option("--concept-shift", gen.concept_shift, "fraction of rows relabeled by y -> y+1 mod C");
    cgen->add_option("--shift-seed", gen.shift_seed, "seed for the relabeled subset");

    PartitionArgs part;
    CLI::App* cpart = app.add_subcommand("partition", "split a dataset into K clients at a target EMD");
    cpart->add_option("--input", part.input, "input dataset file")->required();
    cpart->add_option("--out-dir", part.out_dir, "output directory")->required();
    cpart->add_option("--clients", part.clients, "client count K");
    cpart->add_option("--target-emd", part.target_emd, "population EMD to anneal toward");
    cpart->add_option("--bins", part.bins, "histogram bins per feature dimension");
    cpart->add_option("--seed", part.seed, "partitioner seed");
    cpart->add_option("--max-iters", part.max_iters, "annealing iteration cap");

    EmdArgs emd;
    CLI::App* cemd = app.add_subcommand("emd", "population EMD of client dataset files");
    cemd->add_option("--inputs", emd.inputs, "client dataset files")->required()->expected(-2);
    cemd->add_option("--bins", emd.bins, "histogram bins per feature dimension");
    cemd->add_option("--matrix", emd.matrix_out, "write the pairwise EMD matrix CSV here");

    RunArgs run;
    CLI::App* crun = app.add_subcommand("run", "run a federated experiment from a JSON config");
    crun->add_option("--config", run.config, "experiment config (JSON)")->required();
    crun->add_option("--out-dir", run.out_dir, "directory for metrics.csv and summary.json");

    CurveProfileArgs prof;
    CLI::App* cprof = app.add_subcommand("curveprofile",
                                         "train two local models and export chain vs straight-path loss");
    cprof->add_option("--input-a", prof.input_a, "dataset for model A")->required();
    cprof->add_option("--input-b", prof.input_b, "dataset for model B")->required();
    cprof->add_option("--out", prof.out, "output CSV (u, chain_loss, linear_loss)")->required();
    cprof->add_option("--hidden", prof.hidden, "hidden layer sizes");
    cprof->add_option("--epochs", prof.epochs, "local training epochs");
    cprof->add_option("--batch-size", prof.batch_size, "mini-batch size");
    cprof->add_option("--lr", prof.lr, "learning rate");
    cprof->add_option("--seed-a", prof.seed_a, "init seed for model A");
    cprof->add_option("--seed-b", prof.seed_b, "init seed for model B");
    cprof->add_option("--n-mc", prof.n_mc, "probe sample count");
    cprof->add_option("--eta", prof.eta, "curve-fit learning rate");
    cprof->add_option("--steps", prof.steps, "curve-fit steps");
    cprof->add_option("--grid-points", prof.grid_points, "u-grid resolution");
    cprof->add_option("--probe-seed", prof.probe_seed, "probe seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cgen) cmd_gen(gen);
        if (*cpart) cmd_partition(part);
        if (*cemd) cmd_emd(emd);
        if (*crun) {
            run.threads = threads;
            cmd_run(run);
        }
        if (*cprof) cmd_curveprofile(prof);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
