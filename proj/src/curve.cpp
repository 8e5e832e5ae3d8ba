#include "fedgmcc/curve.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "fedgmcc/rng.hpp"

namespace fedgmcc {

namespace {

void check_chain(const CurveParams& c) {
    if (c.theta.arch != c.end_a.arch || c.theta.arch != c.end_b.arch)
        throw std::invalid_argument("chain endpoints and bend must share one architecture");
    if (c.u_grid.size() < 2 || c.u_grid.front() != 0.0 || c.u_grid.back() != 1.0 ||
        !std::is_sorted(c.u_grid.begin(), c.u_grid.end()))
        throw std::invalid_argument("u grid must be sorted and span [0,1]");
}

// d gamma / d theta, scalar since the chain is coordinatewise linear in theta.
double theta_coeff(double u) { return u < 0.5 ? 2.0 * u : 2.0 - 2.0 * u; }

} // namespace

MonteCarloProbe make_probe(std::size_t n_mc, int input_dim, std::uint64_t seed) {
    if (n_mc == 0) throw std::invalid_argument("probe needs at least one row");
    if (input_dim < 1) throw std::invalid_argument("probe dimension must be positive");
    MonteCarloProbe p;
    p.seed = seed;
    p.inputs = Matrix(n_mc, input_dim);
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (double& v : p.inputs.data) v = dist(rng);
    return p;
}

std::vector<double> uniform_grid(int points) {
    if (points < 2) throw std::invalid_argument("grid needs at least 2 points");
    std::vector<double> g(points);
    for (int i = 0; i < points; ++i) g[i] = static_cast<double>(i) / (points - 1);
    g.front() = 0.0;
    g.back() = 1.0;
    return g;
}

WeightVector chain_point(const CurveParams& c, double u) {
    check_chain(c);
    if (!(u >= 0.0 && u <= 1.0)) throw std::invalid_argument("u must be in [0,1]");
    WeightVector out = zero_weights(c.theta.arch);
    if (u < 0.5) {
        const double a = 2.0 * u, b = 1.0 - 2.0 * u;
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] = a * c.theta.values[i] + b * c.end_a.values[i];
    } else {
        const double a = 2.0 * u - 1.0, b = 2.0 - 2.0 * u;
        for (std::size_t i = 0; i < out.values.size(); ++i)
            out.values[i] = a * c.end_b.values[i] + b * c.theta.values[i];
    }
    return out;
}

WeightVector curve_average(const CurveParams& c) {
    check_chain(c);
    WeightVector out = zero_weights(c.theta.arch);
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = 0.25 * (c.end_a.values[i] + c.end_b.values[i]) + 0.5 * c.theta.values[i];
    return out;
}

double mse_output_loss(const WeightVector& a, const WeightVector& b, const MonteCarloProbe& probe) {
    return mse_output_loss(a, b, probe.inputs);
}

double grid_loss(const CurveParams& c, const WeightVector& w_l, const MonteCarloProbe& probe) {
    check_chain(c);
    double total = 0.0;
    for (double u : c.u_grid) total += mse_output_loss(w_l, chain_point(c, u), probe.inputs);
    return total / static_cast<double>(c.u_grid.size());
}

FlatnessProfile flatness(const CurveParams& c, const WeightVector& w_l, const MonteCarloProbe& probe) {
    check_chain(c);
    if (c.u_grid.size() < 11) throw std::invalid_argument("flatness grid needs at least 11 points");
    if (w_l.arch != c.theta.arch) throw std::invalid_argument("architecture mismatch");

    FlatnessProfile prof;
    prof.u = c.u_grid;
    prof.losses.reserve(c.u_grid.size());
    for (double u : c.u_grid) prof.losses.push_back(mse_output_loss(w_l, chain_point(c, u), probe.inputs));

    prof.max_du = 0.0;
    for (std::size_t i = 0; i + 1 < prof.u.size(); ++i) {
        const double du = prof.u[i + 1] - prof.u[i];
        if (du <= 0.0) continue;
        prof.max_du = std::max(prof.max_du, std::abs(prof.losses[i + 1] - prof.losses[i]) / du);
    }
    return prof;
}

FitResult fit_curve(const WeightVector& w_k, const WeightVector& w_l, const MonteCarloProbe& probe,
                    const FitOptions& opt) {
    if (w_k.arch != w_l.arch) throw std::invalid_argument("endpoint architecture mismatch");
    if (probe.inputs.rows == 0) throw std::invalid_argument("empty probe");
    if (probe.inputs.cols != static_cast<std::size_t>(w_k.arch.input_dim()))
        throw std::invalid_argument("probe dimension does not match architecture");
    if (!(opt.eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (opt.steps < 0) throw std::invalid_argument("steps must be >= 0");
    if (opt.grid_points < 11) throw std::invalid_argument("grid needs at least 11 points");

    CurveParams curve;
    curve.end_a = w_k;
    curve.end_b = w_l;
    curve.u_grid = uniform_grid(opt.grid_points);
    curve.theta = opt.theta_init == ThetaInit::Sum ? add(w_k, w_l) : scale(add(w_k, w_l), 0.5);

    const ModelOutput target_all = forward(w_l, probe.inputs);

    double best_loss = grid_loss(curve, w_l, probe);
    const double init_loss = best_loss;
    WeightVector best_theta = curve.theta;

    Rng rng = make_rng(opt.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick(0, probe.inputs.rows - 1);

    Matrix x(1, probe.inputs.cols);
    Matrix target(1, target_all.probs.cols);
    CurveParams work = curve;

    const auto evaluate = [&](int step) {
        const double loss = grid_loss(work, w_l, probe);
        if (!std::isfinite(loss))
            throw std::runtime_error("curve fit diverged at step " + std::to_string(step));
        if (loss < best_loss) {
            best_loss = loss;
            best_theta = work.theta;
        }
    };

    for (int step = 1; step <= opt.steps; ++step) {
        const double u = unif(rng);
        const std::size_t r = pick(rng);
        std::copy(probe.inputs.row(r), probe.inputs.row(r) + x.cols, x.row(0));
        std::copy(target_all.probs.row(r), target_all.probs.row(r) + target.cols, target.row(0));

        const WeightVector point = chain_point(work, u);
        WeightVector g = grad_output_mse(point, x, target);
        axpy(work.theta, -opt.eta * theta_coeff(u), g);

        if (step % opt.eval_interval == 0) evaluate(step);
    }
    if (opt.steps % opt.eval_interval != 0 || opt.steps == 0) evaluate(opt.steps);

    curve.theta = best_theta;
    return FitResult{std::move(curve), init_loss, best_loss};
}

} // namespace fedgmcc
