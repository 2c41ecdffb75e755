#include "dpalign/accountant.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace dpalign {

void PrivacyBudget::validate() const {
    if (std::isnan(epsilon) || epsilon < 0.0) {
        throw std::invalid_argument("privacy budget: epsilon must be >= 0 (or inf)");
    }
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("privacy budget: delta must lie in (0, 1)");
    }
}

void AccountantConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("accountant: epochs must be >= 1");
}

double sigma_for_budget(const PrivacyBudget& budget, const AccountantConfig& acct) {
    budget.validate();
    acct.validate();
    if (budget.is_infinite()) return 0.0;
    if (budget.is_zero()) {
        throw std::invalid_argument(
            "sigma_for_budget: epsilon = 0 has no finite Gaussian calibration; "
            "use calibrate() for pure-noise mode");
    }
    const double e = static_cast<double>(acct.epochs);
    const double eps_step = budget.epsilon / e;
    const double delta_step = budget.delta / e;
    if (delta_step >= 1.25) {
        throw std::invalid_argument("sigma_for_budget: delta/E >= 1.25 is outside the formula domain");
    }
    return 2.0 * std::sqrt(std::log(1.25 / delta_step)) / eps_step;
}

double epsilon_for_sigma(double sigma, double delta, const AccountantConfig& acct) {
    acct.validate();
    if (!(sigma > 0.0)) throw std::invalid_argument("epsilon_for_sigma: sigma must be > 0");
    if (!(delta > 0.0 && delta < 1.0)) {
        throw std::invalid_argument("epsilon_for_sigma: delta must lie in (0, 1)");
    }
    const double e = static_cast<double>(acct.epochs);
    return e * 2.0 * std::sqrt(std::log(1.25 * e / delta)) / sigma;
}

Calibration calibrate(const PrivacyBudget& budget, const AccountantConfig& acct) {
    budget.validate();
    acct.validate();
    if (budget.is_infinite()) return {0.0, false};
    if (budget.is_zero()) {
        // Noise scale borrowed from the epsilon = 1 calibration; with the
        // signal coefficient forced to zero the guarantee holds for any sigma.
        PrivacyBudget ref{1.0, budget.delta};
        return {sigma_for_budget(ref, acct), true};
    }
    return {sigma_for_budget(budget, acct), false};
}

PhaseBudgetReport phase_budget_report(const std::vector<PrivacyBudget>& phases,
                                      bool partitions_disjoint) {
    if (phases.empty()) throw std::invalid_argument("phase_budget_report: need at least one phase");
    PhaseBudgetReport report;
    report.partitions_disjoint = partitions_disjoint;
    PrivacyBudget overall{0.0, 0.0};
    int idx = 1;
    for (const PrivacyBudget& b : phases) {
        b.validate();
        report.per_phase.push_back({idx++, b});
        if (partitions_disjoint) {
            overall.epsilon = std::max(overall.epsilon, b.epsilon);
            overall.delta = std::max(overall.delta, b.delta);
        } else {
            overall.epsilon += b.epsilon;
            overall.delta += b.delta;
        }
    }
    report.overall = overall;
    return report;
}

std::string epsilon_to_string(double epsilon) {
    if (std::isinf(epsilon)) return "inf";
    if (epsilon == 0.0) return "0";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", epsilon);
    return buf;
}

double epsilon_from_string(const std::string& text) {
    if (text == "inf" || text == "Inf" || text == "INF" || text == "infinity") {
        return std::numeric_limits<double>::infinity();
    }
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("epsilon: cannot parse '" + text + "'");
    }
    if (pos != text.size()) throw std::invalid_argument("epsilon: cannot parse '" + text + "'");
    if (std::isnan(v) || v < 0.0) throw std::invalid_argument("epsilon: must be >= 0, got '" + text + "'");
    return v;
}

std::string PhaseBudgetReport::to_text() const {
    std::ostringstream os;
    os << "phase  epsilon      delta\n";
    char line[128];
    for (const Row& r : per_phase) {
        std::snprintf(line, sizeof(line), "%-6d %-12s %.6g\n", r.phase,
                      epsilon_to_string(r.budget.epsilon).c_str(), r.budget.delta);
        os << line;
    }
    os << "composition: " << (partitions_disjoint ? "parallel (disjoint partitions)" : "sequential")
       << "\n";
    std::snprintf(line, sizeof(line), "overall: (%s, %.6g)\n",
                  epsilon_to_string(overall.epsilon).c_str(), overall.delta);
    os << line;
    return os.str();
}

std::string PhaseBudgetReport::to_csv() const {
    std::ostringstream os;
    os << "phase,epsilon,delta\n";
    char line[128];
    for (const Row& r : per_phase) {
        std::snprintf(line, sizeof(line), "%d,%s,%.6g\n", r.phase,
                      epsilon_to_string(r.budget.epsilon).c_str(), r.budget.delta);
        os << line;
    }
    std::snprintf(line, sizeof(line), "overall,%s,%.6g\n",
                  epsilon_to_string(overall.epsilon).c_str(), overall.delta);
    os << line;
    return os.str();
}

}  // namespace dpalign
