#include "dpalign/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dpalign/stats.hpp"

namespace dpalign {

void SweepCurve::validate() const {
    if (points.empty()) throw std::invalid_argument("sweep curve: no points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].seeds < 1) throw std::invalid_argument("sweep curve: seeds must be >= 1");
        if (i > 0 && !(points[i].epsilon > points[i - 1].epsilon)) {
            throw std::invalid_argument("sweep curve: epsilons must be strictly increasing");
        }
    }
}

nlohmann::json SweepCurve::to_json() const {
    nlohmann::json pts = nlohmann::json::array();
    for (const SweepPoint& p : points) {
        pts.push_back({{"epsilon", epsilon_to_string(p.epsilon)},
                       {"mean_reward", p.mean_reward},
                       {"std_err", p.std_err},
                       {"seeds", p.seeds},
                       {"per_seed", p.per_seed},
                       {"sigma", p.sigma}});
    }
    return nlohmann::json{{"points", pts}};
}

SweepCurve SweepCurve::from_json(const nlohmann::json& j) {
    SweepCurve curve;
    for (const auto& p : j.at("points")) {
        SweepPoint pt;
        pt.epsilon = epsilon_from_string(p.at("epsilon").get<std::string>());
        pt.mean_reward = p.at("mean_reward").get<double>();
        pt.std_err = p.value("std_err", 0.0);
        pt.seeds = p.value("seeds", 1);
        if (p.contains("per_seed")) pt.per_seed = p["per_seed"].get<std::vector<double>>();
        pt.sigma = p.value("sigma", 0.0);
        curve.points.push_back(std::move(pt));
    }
    curve.validate();
    return curve;
}

PipelineSpec specialize_for_epsilon(const PipelineSpec& template_spec, double epsilon) {
    PipelineSpec spec = template_spec;
    for (PhaseSpec& phase : spec.phases) {
        phase.budget.epsilon = epsilon;
        const Calibration cal = calibrate(phase.budget, AccountantConfig{phase.epochs});
        phase.optimizer.noise_multiplier = cal.sigma;
        phase.optimizer.pure_noise = cal.pure_noise;
    }
    return spec;
}

SweepCurve sweep(const PipelineSpec& template_spec, const std::vector<double>& epsilons,
                 const std::vector<std::uint64_t>& seeds, const AlignmentDataset& dataset) {
    if (epsilons.empty() || seeds.empty()) {
        throw std::invalid_argument("sweep: epsilons and seeds must be nonempty");
    }
    std::vector<double> eps_sorted = epsilons;
    std::sort(eps_sorted.begin(), eps_sorted.end());
    if (std::adjacent_find(eps_sorted.begin(), eps_sorted.end()) != eps_sorted.end()) {
        throw std::invalid_argument("sweep: duplicate epsilon values");
    }
    SweepCurve curve;
    for (double eps : eps_sorted) {
        PipelineSpec spec = specialize_for_epsilon(template_spec, eps);
        SweepPoint point;
        point.epsilon = eps;
        point.sigma = spec.phases.front().optimizer.noise_multiplier;
        for (std::uint64_t seed : seeds) {
            spec.seed = seed;
            PipelineResult res = run_pipeline(spec, dataset);
            point.per_seed.push_back(res.report.phases.back().eval_mean);
        }
        point.seeds = static_cast<int>(point.per_seed.size());
        point.mean_reward = stats::mean(point.per_seed);
        point.std_err = stats::standard_error(point.per_seed);
        curve.points.push_back(std::move(point));
    }
    curve.validate();
    return curve;
}

std::string format_percent(double percent) {
    char buf[64];
    if (std::abs(percent) < 0.1) {
        std::snprintf(buf, sizeof(buf), "%+.2f%%", percent);
    } else {
        std::snprintf(buf, sizeof(buf), "%+.1f%%", percent);
    }
    return buf;
}

MarginalGainReport marginal_gains(const SweepCurve& curve) {
    curve.validate();
    std::size_t finite_points = 0;
    for (const SweepPoint& p : curve.points) {
        if (p.epsilon > 0.0 && std::isfinite(p.epsilon)) ++finite_points;
    }
    if (finite_points < 2) {
        throw std::invalid_argument("marginal_gains: need at least two finite-epsilon points");
    }
    MarginalGainReport report;
    bool have_critical = false;
    double best_quotient = 0.0;
    for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
        const SweepPoint& a = curve.points[i];
        const SweepPoint& b = curve.points[i + 1];
        MarginalGainRow row;
        row.eps_from = a.epsilon;
        row.eps_to = b.epsilon;
        row.delta = b.mean_reward - a.mean_reward;
        row.percent = a.mean_reward == 0.0 ? 0.0 : 100.0 * row.delta / a.mean_reward;
        row.up = row.delta > 0.0;
        row.derivative_defined = a.epsilon > 0.0 && std::isfinite(a.epsilon) &&
                                 std::isfinite(b.epsilon);
        if (row.derivative_defined) {
            row.quotient = row.delta / (b.epsilon - a.epsilon);
            if (!have_critical || row.quotient > best_quotient) {  // first wins on ties
                have_critical = true;
                best_quotient = row.quotient;
                report.critical_epsilon = row.eps_from;
            }
        }
        report.total += row.delta;
        report.rows.push_back(row);
    }
    return report;
}

std::string MarginalGainReport::to_text() const {
    std::ostringstream os;
    os << "eps range      delta      percent    trend\n";
    char line[160];
    for (const MarginalGainRow& r : rows) {
        std::string range = epsilon_to_string(r.eps_from) + " -> " + epsilon_to_string(r.eps_to);
        std::snprintf(line, sizeof(line), "%-14s %+8.4f   %-9s %s\n", range.c_str(), r.delta,
                      format_percent(r.percent).c_str(), r.up ? "up" : "down");
        os << line;
    }
    std::snprintf(line, sizeof(line), "total          %+8.4f\n", total);
    os << line;
    os << "critical_epsilon " << epsilon_to_string(critical_epsilon) << "\n";
    return os.str();
}

std::string MarginalGainReport::to_csv() const {
    std::ostringstream os;
    os << "from,to,delta,percent,trend\n";
    char line[160];
    for (const MarginalGainRow& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%s,%.4f,%s,%s\n",
                      epsilon_to_string(r.eps_from).c_str(), epsilon_to_string(r.eps_to).c_str(),
                      r.delta, format_percent(r.percent).c_str(), r.up ? "up" : "down");
        os << line;
    }
    std::snprintf(line, sizeof(line), "total,,%.4f,,\n", total);
    os << line;
    os << "critical_epsilon," << epsilon_to_string(critical_epsilon) << ",,,\n";
    return os.str();
}

// --- results tables ----------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

bool row_less(const ResultsTable::Row& a, const ResultsTable::Row& b) {
    if (a.model != b.model) return a.model < b.model;
    if (a.optimizer != b.optimizer) return a.optimizer < b.optimizer;
    return a.method < b.method;
}

}  // namespace

const ResultsTable::Row& ResultsTable::find(const std::string& model, const std::string& optimizer,
                                            const std::string& method) const {
    for (const Row& r : rows) {
        if (r.model == model && r.optimizer == optimizer && r.method == method) return r;
    }
    throw std::invalid_argument("results table: no row (" + model + ", " + optimizer + ", " +
                                method + ")");
}

ResultsTable load_results_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_results_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("load_results_csv: empty file");
    std::vector<std::string> header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "model" || header[1] != "optimizer" ||
        header[2] != "method") {
        throw std::runtime_error("load_results_csv: header must start with model,optimizer,method");
    }
    ResultsTable table;
    for (std::size_t i = 3; i < header.size(); ++i) {
        table.epsilons.push_back(epsilon_from_string(header[i]));
    }
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw std::runtime_error("load_results_csv: line " + std::to_string(line_no) + " has " +
                                     std::to_string(fields.size()) + " fields, expected " +
                                     std::to_string(header.size()));
        }
        ResultsTable::Row row;
        row.model = fields[0];
        row.optimizer = fields[1];
        row.method = fields[2];
        for (std::size_t i = 3; i < fields.size(); ++i) {
            try {
                row.values[table.epsilons[i - 3]] = std::stod(fields[i]);
            } catch (const std::exception&) {
                throw std::runtime_error("load_results_csv: line " + std::to_string(line_no) +
                                         ": bad value '" + fields[i] + "'");
            }
        }
        table.rows.push_back(std::move(row));
    }
    if (table.rows.empty()) throw std::runtime_error("load_results_csv: no data rows");
    return table;
}

void emit_results_table(const ResultsTable& table, const std::string& path) {
    if (table.rows.empty() || table.epsilons.empty()) {
        throw std::invalid_argument("emit_results_table: empty table");
    }
    // ragged-grid check collects every missing cell
    std::vector<std::string> missing;
    for (const auto& row : table.rows) {
        for (double eps : table.epsilons) {
            if (!row.values.count(eps)) {
                missing.push_back("(" + row.model + ", " + row.optimizer + ", " + row.method +
                                  ", eps=" + epsilon_to_string(eps) + ")");
            }
        }
    }
    if (!missing.empty()) {
        std::string msg = "emit_results_table: missing cells:";
        for (const std::string& m : missing) msg += " " + m;
        throw std::invalid_argument(msg);
    }
    std::vector<ResultsTable::Row> sorted = table.rows;
    std::stable_sort(sorted.begin(), sorted.end(), row_less);

    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("emit_results_table: cannot open '" + path + "'");
    os << "model,optimizer,method";
    for (double eps : table.epsilons) os << "," << epsilon_to_string(eps);
    os << "\n";
    char buf[32];
    for (const auto& row : sorted) {
        os << row.model << "," << row.optimizer << "," << row.method;
        for (double eps : table.epsilons) {
            std::snprintf(buf, sizeof(buf), "%.4f", row.values.at(eps));
            os << "," << buf;
        }
        os << "\n";
    }
    if (!os) throw std::runtime_error("emit_results_table: write failed for '" + path + "'");
}

SweepCurve curve_from_row(const ResultsTable& table, const std::string& model,
                          const std::string& optimizer, const std::string& method) {
    const ResultsTable::Row& row = table.find(model, optimizer, method);
    SweepCurve curve;
    for (const auto& [eps, value] : row.values) {
        SweepPoint p;
        p.epsilon = eps;
        p.mean_reward = value;
        p.seeds = 1;
        curve.points.push_back(p);
    }
    curve.validate();
    return curve;
}

SweepCurve curve_from_sweep_points(const std::vector<std::pair<double, double>>& eps_reward) {
    SweepCurve curve;
    for (const auto& [eps, value] : eps_reward) {
        SweepPoint p;
        p.epsilon = eps;
        p.mean_reward = value;
        p.seeds = 1;
        curve.points.push_back(p);
    }
    std::sort(curve.points.begin(), curve.points.end(),
              [](const SweepPoint& a, const SweepPoint& b) { return a.epsilon < b.epsilon; });
    curve.validate();
    return curve;
}

ResultsTable table_from_curve(const SweepCurve& curve, const std::string& model,
                              const std::string& optimizer, const std::string& method) {
    curve.validate();
    ResultsTable table;
    ResultsTable::Row row;
    row.model = model;
    row.optimizer = optimizer;
    row.method = method;
    for (const SweepPoint& p : curve.points) {
        table.epsilons.push_back(p.epsilon);
        row.values[p.epsilon] = p.mean_reward;
    }
    table.rows.push_back(std::move(row));
    return table;
}

}  // namespace dpalign
