#pragma once

#include <cstdint>
#include <vector>

#include "fedgmcc/nn.hpp"

namespace fedgmcc {

// Server-side surrogate input set: rows i.i.d. uniform on [0,1]^dim.
struct MonteCarloProbe {
    Matrix inputs;
    std::uint64_t seed = 0;
};

MonteCarloProbe make_probe(std::size_t n_mc, int input_dim, std::uint64_t seed);

// One-bend polygonal chain in weight space from end_a through bend theta to
// end_b, parametrized by u in [0,1]:
//   gamma(u) = (2u) theta + (1-2u) end_a          for u in [0, 0.5)
//   gamma(u) = (2u-1) end_b + (2-2u) theta        for u in [0.5, 1]
struct CurveParams {
    WeightVector theta;
    WeightVector end_a;
    WeightVector end_b;
    std::vector<double> u_grid;   // sorted, includes 0 and 1
};

std::vector<double> uniform_grid(int points);

WeightVector chain_point(const CurveParams& c, double u);

// Uniform mean of the chain over u in [0,1], in closed form:
// (end_a + end_b)/4 + theta/2.
WeightVector curve_average(const CurveParams& c);

enum class ThetaInit {
    Sum,        // theta0 = end_a + end_b
    Midpoint,   // theta0 = (end_a + end_b)/2, the straight segment
};

struct FitOptions {
    double eta = 0.1;
    int steps = 2000;
    std::uint64_t seed = 0;
    int grid_points = 21;
    int eval_interval = 100;
    ThetaInit theta_init = ThetaInit::Sum;
};

struct FitResult {
    CurveParams curve;
    double init_grid_loss = 0.0;    // held-out-grid expected loss at theta0
    double final_grid_loss = 0.0;   // same measure for the returned theta
};

// Stochastic curve fit: each step samples u ~ U(0,1) and one probe row, and
// descends theta along the gradient of ||f(x, end_b) - f(x, gamma(u))||^2.
// The returned theta is the best of the periodically evaluated checkpoints
// (theta0 included), so final_grid_loss <= init_grid_loss always holds.
// Non-finite descent aborts with a diagnostic.
FitResult fit_curve(const WeightVector& w_k, const WeightVector& w_l, const MonteCarloProbe& probe,
                    const FitOptions& opt);

// Probe-MSE against end_b at every grid point plus the largest
// finite-difference derivative magnitude over adjacent grid pairs.
struct FlatnessProfile {
    std::vector<double> u;
    std::vector<double> losses;
    double max_du = 0.0;
};

FlatnessProfile flatness(const CurveParams& c, const WeightVector& w_l, const MonteCarloProbe& probe);

// Expected probe-MSE against end_b averaged over the grid.
double grid_loss(const CurveParams& c, const WeightVector& w_l, const MonteCarloProbe& probe);

double mse_output_loss(const WeightVector& a, const WeightVector& b, const MonteCarloProbe& probe);

} // namespace fedgmcc
