#pragma once

#include <vector>

namespace fedgmcc {

struct ShapiroResult {
    double w = 1.0;
    double p = 1.0;
};

// Shapiro-Wilk W statistic and upper-tail p-value (Royston's approximation,
// valid for 3 <= n <= 5000). A sample with zero spread returns {1, 1}.
ShapiroResult shapiro_wilk(std::vector<double> sample);

// Inverse standard-normal CDF (Acklam's rational approximation plus one
// Halley refinement step).
double normal_quantile(double p);

double normal_cdf(double z);

} // namespace fedgmcc
