#include "dpalign/stats.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace dpalign {
namespace stats {

double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("stats::mean: empty sample");
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

double sample_stddev(const std::vector<double>& xs) { return std::sqrt(sample_variance(xs)); }

double standard_error(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    return sample_stddev(xs) / std::sqrt(static_cast<double>(xs.size()));
}

Interval variance_confidence_band(double variance, std::size_t n, double coverage) {
    if (n < 2) throw std::invalid_argument("variance_confidence_band: need n >= 2");
    if (!(coverage > 0.0 && coverage < 1.0)) {
        throw std::invalid_argument("variance_confidence_band: coverage must be in (0, 1)");
    }
    const double dof = static_cast<double>(n - 1);
    boost::math::chi_squared chi(dof);
    const double tail = (1.0 - coverage) / 2.0;
    // S^2 ~ sigma^2 * chi2_{n-1} / (n-1)
    return {variance * boost::math::quantile(chi, tail) / dof,
            variance * boost::math::quantile(chi, 1.0 - tail) / dof};
}

double welch_p_value(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_p_value: need >= 2 samples");
    const double ma = mean(a), mb = mean(b);
    const double va = sample_variance(a) / static_cast<double>(a.size());
    const double vb = sample_variance(b) / static_cast<double>(b.size());
    const double se2 = va + vb;
    if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;
    const double t = (ma - mb) / std::sqrt(se2);
    const double dof = se2 * se2 /
                       (va * va / static_cast<double>(a.size() - 1) +
                        vb * vb / static_cast<double>(b.size() - 1));
    boost::math::students_t dist(dof);
    return 2.0 * boost::math::cdf(dist, -std::abs(t));
}

double paired_one_sided_p_value(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired test: size mismatch");
    if (a.size() < 2) throw std::invalid_argument("paired test: need >= 2 pairs");
    std::vector<double> diff(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
    const double se = standard_error(diff);
    const double m = mean(diff);
    if (se == 0.0) return m > 0.0 ? 0.0 : 1.0;
    const double t = m / se;
    boost::math::students_t dist(static_cast<double>(diff.size() - 1));
    return 1.0 - boost::math::cdf(dist, t);
}

double chi_square_gof_p_value(const std::vector<std::size_t>& observed,
                              const std::vector<double>& expected_probs) {
    if (observed.size() != expected_probs.size() || observed.size() < 2) {
        throw std::invalid_argument("chi_square_gof: need matching bins (>= 2)");
    }
    std::size_t total = 0;
    for (std::size_t o : observed) total += o;
    if (total == 0) throw std::invalid_argument("chi_square_gof: no observations");
    double stat = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double e = expected_probs[i] * static_cast<double>(total);
        if (e <= 0.0) {
            if (observed[i] != 0) return 0.0;  // impossible bin observed
            continue;
        }
        const double d = static_cast<double>(observed[i]) - e;
        stat += d * d / e;
    }
    boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
    return 1.0 - boost::math::cdf(dist, stat);
}

}  // namespace stats
}  // namespace dpalign
