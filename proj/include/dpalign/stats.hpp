#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace dpalign {
namespace stats {

double mean(const std::vector<double>& xs);
// Unbiased (n-1) sample variance; 0 for fewer than two samples.
double sample_variance(const std::vector<double>& xs);
double sample_stddev(const std::vector<double>& xs);
// stddev / sqrt(n); 0 for fewer than two samples.
double standard_error(const std::vector<double>& xs);

// Two-sided confidence band for the sample variance of n draws from a
// normal with true variance `variance`: S^2 * (n-1) / chi2 quantiles.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double x) const { return x >= lo && x <= hi; }
};
Interval variance_confidence_band(double variance, std::size_t n, double coverage);

// Welch's unequal-variance t-test; returns the two-sided p-value.
double welch_p_value(const std::vector<double>& a, const std::vector<double>& b);

// Paired one-sided t-test of mean(a - b) > 0; returns the p-value.
double paired_one_sided_p_value(const std::vector<double>& a, const std::vector<double>& b);

// Chi-square goodness of fit of observed counts against expected
// probabilities; returns the p-value (dof = k - 1).
double chi_square_gof_p_value(const std::vector<std::size_t>& observed,
                              const std::vector<double>& expected_probs);

}  // namespace stats
}  // namespace dpalign
