#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpalign/data.hpp"
#include "dpalign/pipeline.hpp"

namespace dpalign {

// Reward-vs-epsilon curve. Points are kept sorted; 0 (pure-noise sentinel)
// sorts first and inf (non-private) last.
struct SweepPoint {
    double epsilon = 0.0;
    double mean_reward = 0.0;
    double std_err = 0.0;
    int seeds = 0;
    std::vector<double> per_seed;  // per-seed mean rewards, seed order
    double sigma = 0.0;            // noise multiplier used at this point
};

struct SweepCurve {
    std::vector<SweepPoint> points;

    void validate() const;  // strictly increasing epsilons, seeds >= 1
    nlohmann::json to_json() const;
    static SweepCurve from_json(const nlohmann::json& j);
};

// Runs the pipeline template at every epsilon x seed, recalibrating the
// noise multiplier per phase, and evaluates each final policy against the
// dataset's ground-truth scorer on held-out prompts.
SweepCurve sweep(const PipelineSpec& template_spec, const std::vector<double>& epsilons,
                 const std::vector<std::uint64_t>& seeds, const AlignmentDataset& dataset);

// Applies one epsilon's budget (and accountant-calibrated noise) to every
// phase of the template. Exposed for the CLI and tests.
PipelineSpec specialize_for_epsilon(const PipelineSpec& template_spec, double epsilon);

// Finite-difference analysis of a curve.
struct MarginalGainRow {
    double eps_from = 0.0;
    double eps_to = 0.0;
    double delta = 0.0;    // f(to) - f(from)
    double percent = 0.0;  // 100 * delta / f(from)
    bool up = false;       // delta > 0
    bool derivative_defined = false;  // finite-epsilon interior pair
    double quotient = 0.0;            // delta / (to - from), when defined
};

struct MarginalGainReport {
    std::vector<MarginalGainRow> rows;
    double total = 0.0;            // sum of deltas
    double critical_epsilon = 0.0;  // left endpoint of the max finite-difference quotient

    std::string to_text() const;
    std::string to_csv() const;
};

// Consecutive deltas and percents over all adjacent pairs; rows touching the
// 0 or inf sentinels carry deltas but no derivative, and the critical
// epsilon is the argmax of the interior quotients (first wins on ties).
// Requires at least two finite-epsilon points.
MarginalGainReport marginal_gains(const SweepCurve& curve);

// Percent formatting used in reports: one decimal, two when |p| < 0.1.
std::string format_percent(double percent);

// --- results tables ---------------------------------------------------------
// Canonical CSV grid: header "model,optimizer,method,<eps...>", one row per
// (model, optimizer, method) sorted lexicographically, cells "%.4f".

struct ResultsTable {
    struct Row {
        std::string model;
        std::string optimizer;
        std::string method;
        std::map<double, double> values;  // epsilon -> score
    };
    std::vector<double> epsilons;  // column order
    std::vector<Row> rows;

    const Row& find(const std::string& model, const std::string& optimizer,
                    const std::string& method) const;
};

ResultsTable load_results_csv(const std::string& path);
// Canonical emission; re-emitting a canonical file is byte-identical.
// Throws on a ragged grid, listing every missing cell.
void emit_results_table(const ResultsTable& table, const std::string& path);

// Treats one table row as a reward curve (no seed information).
SweepCurve curve_from_row(const ResultsTable& table, const std::string& model,
                          const std::string& optimizer, const std::string& method);

SweepCurve curve_from_sweep_points(const std::vector<std::pair<double, double>>& eps_reward);

// Builds a single-row results table from a sweep curve.
ResultsTable table_from_curve(const SweepCurve& curve, const std::string& model,
                              const std::string& optimizer, const std::string& method);

}  // namespace dpalign
