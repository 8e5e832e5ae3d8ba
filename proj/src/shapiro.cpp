#include "fedgmcc/shapiro.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedgmcc {

namespace {

double polyval(const double* c, int n, double x) {
    // c[0] + c[1] x + ... + c[n-1] x^{n-1}
    double v = c[n - 1];
    for (int i = n - 2; i >= 0; --i) v = v * x + c[i];
    return v;
}

} // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_quantile(double p) {
    if (!(p > 0.0) || !(p < 1.0)) throw std::invalid_argument("quantile argument must be in (0,1)");

    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};

    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step against the exact CDF.
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x -= u / (1.0 + x * u / 2.0);
    return x;
}

ShapiroResult shapiro_wilk(std::vector<double> x) {
    const int n = static_cast<int>(x.size());
    if (n < 3) throw std::invalid_argument("Shapiro-Wilk needs at least 3 samples");
    if (n > 5000) throw std::invalid_argument("Shapiro-Wilk supports at most 5000 samples");
    std::sort(x.begin(), x.end());
    if (!(x.back() - x.front() > 0.0)) return {1.0, 1.0};

    // Expected normal order statistics and the coefficient vector.
    std::vector<double> m(n);
    double ssq_m = 0.0;
    for (int i = 0; i < n; ++i) {
        m[i] = normal_quantile((i + 1 - 0.375) / (n + 0.25));
        ssq_m += m[i] * m[i];
    }

    std::vector<double> a(n, 0.0);
    const double rsn = 1.0 / std::sqrt(static_cast<double>(n));
    static const double c1[] = {0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056};
    static const double c2[] = {0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633};

    if (n == 3) {
        a[0] = -std::sqrt(0.5);
        a[2] = std::sqrt(0.5);
    } else {
        const double an = polyval(c1, 6, rsn) + m[n - 1] / std::sqrt(ssq_m);
        if (n <= 5) {
            const double phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1]) / (1.0 - 2.0 * an * an);
            for (int i = 1; i < n - 1; ++i) a[i] = m[i] / std::sqrt(phi);
            a[n - 1] = an;
            a[0] = -an;
        } else {
            const double an1 = polyval(c2, 6, rsn) + m[n - 2] / std::sqrt(ssq_m);
            const double phi = (ssq_m - 2.0 * m[n - 1] * m[n - 1] - 2.0 * m[n - 2] * m[n - 2]) /
                               (1.0 - 2.0 * an * an - 2.0 * an1 * an1);
            for (int i = 2; i < n - 2; ++i) a[i] = m[i] / std::sqrt(phi);
            a[n - 1] = an;
            a[n - 2] = an1;
            a[0] = -an;
            a[1] = -an1;
        }
    }

    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double b = 0.0, ssq = 0.0;
    for (int i = 0; i < n; ++i) {
        b += a[i] * x[i];
        ssq += (x[i] - mean) * (x[i] - mean);
    }
    double w = b * b / ssq;
    w = std::min(w, 1.0);

    ShapiroResult res;
    res.w = w;
    if (n == 3) {
        const double pi6 = 6.0 / M_PI;
        const double stqr = std::asin(std::sqrt(0.75));
        res.p = std::clamp(pi6 * (std::asin(std::sqrt(w)) - stqr), 0.0, 1.0);
        return res;
    }

    const double w1 = std::max(1.0 - w, 1e-15);
    double z;
    if (n <= 11) {
        const double nn = static_cast<double>(n);
        const double g = -2.273 + 0.459 * nn;
        const double mu = 0.5440 - 0.39978 * nn + 0.025054 * nn * nn - 0.0006714 * nn * nn * nn;
        const double sigma = std::exp(1.3822 - 0.77857 * nn + 0.062767 * nn * nn - 0.0020322 * nn * nn * nn);
        const double arg = g - std::log(w1);
        if (!(arg > 0.0)) return {w, 0.0};
        z = (-std::log(arg) - mu) / sigma;
    } else {
        const double ln = std::log(static_cast<double>(n));
        const double mu = -1.5861 - 0.31082 * ln - 0.083751 * ln * ln + 0.0038915 * ln * ln * ln;
        const double sigma = std::exp(-0.4803 - 0.082676 * ln + 0.0030302 * ln * ln);
        z = (std::log(w1) - mu) / sigma;
    }
    res.p = std::clamp(1.0 - normal_cdf(z), 0.0, 1.0);
    return res;
}

} // namespace fedgmcc
