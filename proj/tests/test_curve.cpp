#include <doctest.h>

#include <cmath>

#include "fedgmcc/curve.hpp"
#include "fedgmcc/data.hpp"
#include "fedgmcc/rng.hpp"

using namespace fedgmcc;

namespace {

const ModelArch kArch{{2, 6, 2}};

CurveParams make_chain(std::uint64_t seed) {
    CurveParams c;
    c.end_a = init_weights(kArch, mix_seed(seed, 1));
    c.end_b = init_weights(kArch, mix_seed(seed, 2));
    c.theta = init_weights(kArch, mix_seed(seed, 3));
    c.u_grid = uniform_grid(21);
    return c;
}

// Trapezoid quadrature of the chain mean; exact for a piecewise-linear curve
// once the kink at 0.5 is a grid node.
WeightVector quadrature_average(const CurveParams& c, int points) {
    WeightVector acc = zero_weights(c.theta.arch);
    const double h = 1.0 / (points - 1);
    for (int i = 0; i < points; ++i) {
        const double u = static_cast<double>(i) / (points - 1);
        const double w = (i == 0 || i == points - 1) ? 0.5 * h : h;
        axpy(acc, w, chain_point(c, u));
    }
    return acc;
}

} // namespace

TEST_CASE("chain_point: boundary identities are bit-exact") {
    const CurveParams c = make_chain(4);
    CHECK(chain_point(c, 0.0) == c.end_a);
    CHECK(chain_point(c, 1.0) == c.end_b);
    CHECK(chain_point(c, 0.5) == c.theta);
    CHECK_THROWS_AS(chain_point(c, -0.01), std::invalid_argument);
    CHECK_THROWS_AS(chain_point(c, 1.01), std::invalid_argument);
}

TEST_CASE("chain_point: midpoint bend degenerates to the straight segment") {
    CurveParams c = make_chain(5);
    c.theta = scale(add(c.end_a, c.end_b), 0.5);
    const WeightVector q = chain_point(c, 0.25);
    for (std::size_t i = 0; i < q.values.size(); ++i)
        CHECK(q.values[i] ==
              doctest::Approx(0.75 * c.end_a.values[i] + 0.25 * c.end_b.values[i]).epsilon(1e-12));
}

TEST_CASE("chain_point: Lipschitz continuity along u") {
    const CurveParams c = make_chain(6);
    const double lips = 2.0 * std::max(norm(sub(c.theta, c.end_a)), norm(sub(c.end_b, c.theta)));
    Rng rng = make_rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double u = unif(rng) * 0.999;
        const double delta = unif(rng) * (1.0 - u) * 0.01;
        const double step = norm(sub(chain_point(c, u + delta), chain_point(c, u)));
        CHECK(step <= lips * delta + 1e-12);
    }
}

TEST_CASE("curve_average: closed form equals quadrature, straight chain is the midpoint") {
    for (std::uint64_t s = 0; s < 10; ++s) {
        const CurveParams c = make_chain(mix_seed(s, 0xca));
        const WeightVector closed = curve_average(c);
        const WeightVector quad = quadrature_average(c, 10001);
        for (std::size_t i = 0; i < closed.values.size(); ++i)
            CHECK(closed.values[i] == doctest::Approx(quad.values[i]).epsilon(1e-6));
    }

    CurveParams straight = make_chain(11);
    straight.theta = scale(add(straight.end_a, straight.end_b), 0.5);
    const WeightVector avg = curve_average(straight);
    for (std::size_t i = 0; i < avg.values.size(); ++i)
        CHECK(std::abs(avg.values[i] -
                       0.5 * (straight.end_a.values[i] + straight.end_b.values[i])) <= 1e-12);

    CurveParams degenerate = make_chain(12);
    degenerate.end_b = degenerate.end_a;
    degenerate.theta = degenerate.end_a;
    CHECK(curve_average(degenerate) == degenerate.end_a);
}

TEST_CASE("make_probe: entries uniform in [0,1], deterministic") {
    const MonteCarloProbe p = make_probe(64, 3, 5);
    CHECK(p.inputs.rows == 64);
    for (double v : p.inputs.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(make_probe(64, 3, 5).inputs == p.inputs);
    CHECK_THROWS_AS(make_probe(0, 3, 5), std::invalid_argument);
}

TEST_CASE("flatness: degenerate chain is flat, loss at u=1 is exactly zero") {
    const WeightVector w = init_weights(kArch, 13);
    CurveParams c;
    c.end_a = w;
    c.end_b = w;
    c.theta = w;
    c.u_grid = uniform_grid(21);
    const MonteCarloProbe probe = make_probe(32, 2, 14);

    const FlatnessProfile prof = flatness(c, w, probe);
    for (double l : prof.losses) CHECK(l <= 1e-12);
    CHECK(prof.max_du <= 1e-10);
    CHECK(prof.losses.back() == 0.0);

    const CurveParams generic = make_chain(15);
    const FlatnessProfile gp = flatness(generic, generic.end_b, probe);
    CHECK(gp.losses.back() == 0.0);

    CurveParams short_grid = make_chain(16);
    short_grid.u_grid = uniform_grid(5);
    CHECK_THROWS_AS(flatness(short_grid, short_grid.end_b, probe), std::invalid_argument);
}

TEST_CASE("fit_curve: steps=0 keeps the sum initialization") {
    const WeightVector a = init_weights(kArch, 17);
    const WeightVector b = init_weights(kArch, 18);
    const MonteCarloProbe probe = make_probe(16, 2, 19);
    FitOptions opt;
    opt.steps = 0;
    const FitResult r = fit_curve(a, b, probe, opt);
    CHECK(r.curve.theta == add(a, b));
    CHECK(r.final_grid_loss == r.init_grid_loss);

    FitOptions mid = opt;
    mid.theta_init = ThetaInit::Midpoint;
    CHECK(fit_curve(a, b, probe, mid).curve.theta == scale(add(a, b), 0.5));
}

TEST_CASE("fit_curve: degenerate pair descends to a flat chain") {
    const WeightVector w = init_weights(kArch, 23);
    const MonteCarloProbe probe = make_probe(64, 2, 24);
    FitOptions opt;
    opt.steps = 20000;
    opt.eta = 0.3;
    opt.seed = 25;
    const FitResult r = fit_curve(w, w, probe, opt);   // theta0 = 2w
    const FlatnessProfile prof = flatness(r.curve, w, probe);
    double max_loss = 0.0;
    for (double l : prof.losses) max_loss = std::max(max_loss, l);
    CHECK(max_loss < 1e-6);
}

TEST_CASE("fit_curve: never worsens the held-out grid loss") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const WeightVector a = init_weights(kArch, mix_seed(s, 31));
        const WeightVector b = init_weights(kArch, mix_seed(s, 32));
        const MonteCarloProbe probe = make_probe(32, 2, mix_seed(s, 33));
        FitOptions opt;
        opt.steps = 300;
        opt.seed = mix_seed(s, 34);
        const FitResult r = fit_curve(a, b, probe, opt);
        CHECK(r.final_grid_loss <= r.init_grid_loss);
        CHECK(grid_loss(r.curve, b, probe) == doctest::Approx(r.final_grid_loss).epsilon(1e-12));
    }
}

TEST_CASE("fit_curve: divergent step size aborts with a diagnostic") {
    const WeightVector a = init_weights(kArch, 41);
    const WeightVector b = init_weights(kArch, 42);
    const MonteCarloProbe probe = make_probe(16, 2, 43);
    FitOptions opt;
    opt.eta = 1e200;
    opt.steps = 500;
    opt.eval_interval = 50;
    CHECK_THROWS_AS(fit_curve(a, b, probe, opt), std::runtime_error);
}

TEST_CASE("flatness: deranged labels are harder to connect than transformed features") {
    for (std::uint64_t s = 0; s < 3; ++s) {
        const std::uint64_t seed = 100 + s;
        LabeledBatch base = gen_base_task(200, 2, mix_seed(seed, 1));
        LabeledBatch rot = apply_feature_transform(base, FeatureTransform::rotation(M_PI / 12));
        LabeledBatch flip = apply_concept_shift(base, 1.0, mix_seed(seed, 2), 2);
        std::vector<LabeledBatch*> all{&base, &rot, &flip};
        normalize_unit_box(all);

        const ModelArch arch{{2, 8, 2}};
        SgdOptions sgd;
        sgd.epochs = 40;
        sgd.batch_size = 32;
        sgd.lr = 0.05;
        sgd.seed = mix_seed(seed, 3);
        const WeightVector w0 = sgd_train(init_weights(arch, mix_seed(seed, 4)), base, sgd);
        sgd.seed = mix_seed(seed, 5);
        const WeightVector w_rot = sgd_train(init_weights(arch, mix_seed(seed, 6)), rot, sgd);
        sgd.seed = mix_seed(seed, 7);
        const WeightVector w_flip = sgd_train(init_weights(arch, mix_seed(seed, 8)), flip, sgd);

        const MonteCarloProbe probe = make_probe(128, 2, mix_seed(seed, 9));
        FitOptions fo;
        fo.steps = 1500;
        fo.seed = mix_seed(seed, 10);
        const FitResult congruent = fit_curve(w0, w_rot, probe, fo);
        const FitResult shifted = fit_curve(w0, w_flip, probe, fo);
        CHECK(flatness(shifted.curve, w_flip, probe).max_du >
              flatness(congruent.curve, w_rot, probe).max_du);
    }
}

TEST_CASE("curve-loss gradient in theta matches finite differences") {
    Rng pick = make_rng(51);
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    for (std::uint64_t s = 0; s < 10; ++s) {
        CurveParams c = make_chain(mix_seed(s, 52));
        const MonteCarloProbe probe = make_probe(6, 2, mix_seed(s, 53));
        const double u = unif(pick);
        const ModelOutput target = forward(c.end_b, probe.inputs);

        const double coeff = u < 0.5 ? 2.0 * u : 2.0 - 2.0 * u;
        const WeightVector point = chain_point(c, u);
        WeightVector analytic = grad_output_mse(point, probe.inputs, target.probs);
        for (double& v : analytic.values) v *= coeff;

        // Finite differences directly in theta through the chain.
        CurveParams probe_chain = c;
        const double h = 1e-4;
        for (std::size_t i = 0; i < c.theta.values.size(); ++i) {
            probe_chain.theta.values[i] = c.theta.values[i] + h;
            const double up = mse_output_loss(c.end_b, chain_point(probe_chain, u), probe.inputs);
            probe_chain.theta.values[i] = c.theta.values[i] - h;
            const double down = mse_output_loss(c.end_b, chain_point(probe_chain, u), probe.inputs);
            probe_chain.theta.values[i] = c.theta.values[i];
            const double fd = (up - down) / (2.0 * h);
            const double rel = std::abs(analytic.values[i] - fd) /
                               std::max({std::abs(analytic.values[i]), std::abs(fd), 1e-6});
            CHECK(rel <= 1e-4);
        }
    }
}
