#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace dpalign {

// (epsilon, delta) privacy budget. epsilon = 0 and epsilon = +infinity are
// meaningful endpoints: 0 means the training signal must be suppressed
// entirely (pure-noise mode), +infinity means the non-private setting.
struct PrivacyBudget {
    double epsilon = std::numeric_limits<double>::infinity();
    double delta = 1e-5;

    bool is_zero() const { return epsilon == 0.0; }
    bool is_infinite() const { return std::isinf(epsilon); }

    static PrivacyBudget non_private(double delta = 1e-5) {
        return PrivacyBudget{std::numeric_limits<double>::infinity(), delta};
    }

    void validate() const;
};

// Epoch count for the conservative composition rule: every data point is
// accessed E times, so the per-access budget is (epsilon/E, delta/E).
struct AccountantConfig {
    int epochs = 1;

    void validate() const;
};

// Gaussian-mechanism calibration, sigma = 2*sqrt(ln(1.25/delta'))/epsilon'
// with epsilon' = epsilon/E and delta' = delta/E. Requires finite epsilon > 0;
// an infinite budget calibrates to sigma = 0 and a zero budget has no finite
// calibration (callers switch to pure-noise mode instead).
double sigma_for_budget(const PrivacyBudget& budget, const AccountantConfig& acct);

// Exact algebraic inverse: epsilon = E * 2*sqrt(ln(1.25*E/delta))/sigma.
double epsilon_for_sigma(double sigma, double delta, const AccountantConfig& acct);

// Calibration outcome covering the sentinel budgets. pure_noise means the
// optimizer must zero the gradient signal; sigma then controls only the
// scale of the injected noise (any positive value yields the same guarantee
// because the output is data-independent).
struct Calibration {
    double sigma = 0.0;
    bool pure_noise = false;
};

Calibration calibrate(const PrivacyBudget& budget, const AccountantConfig& acct);

// Composition across pipeline phases.
struct PhaseBudgetReport {
    struct Row {
        int phase = 0;
        PrivacyBudget budget;
    };
    std::vector<Row> per_phase;
    bool partitions_disjoint = true;
    PrivacyBudget overall;

    std::string to_text() const;
    std::string to_csv() const;
};

// Disjoint partitions compose in parallel (overall = max over phases);
// otherwise budgets add up to (sum eps, sum delta).
PhaseBudgetReport phase_budget_report(const std::vector<PrivacyBudget>& phases,
                                      bool partitions_disjoint);

// Canonical spelling used in flags, CSV headers and JSON: "0", "inf", or a
// minimal decimal form ("3", "0.5").
std::string epsilon_to_string(double epsilon);
double epsilon_from_string(const std::string& text);

}  // namespace dpalign
