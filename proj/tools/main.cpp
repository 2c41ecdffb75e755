// dpalign: differentially private alignment lab for tiny policies.
// Subcommands: generate-data, train, sweep, analyze, accountant.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpalign/accountant.hpp"
#include "dpalign/analysis.hpp"
#include "dpalign/config.hpp"
#include "dpalign/data.hpp"
#include "dpalign/models.hpp"
#include "dpalign/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::vector<double> parse_epsilon_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(dpalign::epsilon_from_string(item));
    }
    if (out.empty()) throw std::invalid_argument("--epsilons: empty list");
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoull(item));
    }
    if (out.empty()) throw std::invalid_argument("--seeds: empty list");
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    os << content;
    if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

int cmd_generate_data(std::size_t n, int vocab, std::uint64_t seed, int prompt_len,
                      int response_len, const std::string& out_path) {
    dpalign::AlignmentDataset ds =
        dpalign::generate_synthetic_preferences(n, vocab, seed, prompt_len, response_len);
    dpalign::save_jsonl(out_path, ds);
    std::cout << "wrote " << ds.triples.size() << " preference triples to " << out_path << "\n";
    return kExitOk;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_override,
              std::optional<std::string> epsilon_override, const std::string& out_dir) {
    dpalign::RunConfig cfg = dpalign::RunConfig::from_file(config_path);
    if (seed_override) cfg.seed = *seed_override;
    if (epsilon_override) cfg.privacy.epsilon = dpalign::epsilon_from_string(*epsilon_override);

    dpalign::AlignmentDataset dataset = cfg.load_or_generate_dataset();
    dpalign::PipelineSpec spec = cfg.to_pipeline_spec(dataset.metadata.vocab_size);
    dpalign::PipelineResult result = dpalign::run_pipeline(spec, dataset);

    std::filesystem::create_directories(out_dir);
    const std::string ckpt_path = out_dir + "/policy.ckpt";
    const std::string report_path = out_dir + "/report.json";
    dpalign::save_policy(ckpt_path, result.policy);
    write_text_file(report_path, result.report.to_json().dump(2) + "\n");

    std::cout << "pipeline " << result.report.pipeline_kind << " finished in "
              << result.report.wall_ms << " ms\n";
    for (const auto& m : result.report.phases) {
        std::cout << "  phase " << dpalign::to_string(m.kind) << ": steps=" << m.steps
                  << " final_loss=" << (m.epoch_mean_loss.empty() ? 0.0 : m.epoch_mean_loss.back())
                  << " eval_reward=" << m.eval_mean << " sigma=" << m.sigma
                  << (m.pure_noise ? " (pure-noise mode)" : "") << "\n";
    }
    std::cout << "overall budget: (" << dpalign::epsilon_to_string(result.report.budget.overall.epsilon)
              << ", " << result.report.budget.overall.delta << ")\n";
    std::cout << "checkpoint: " << ckpt_path << "\nreport: " << report_path << "\n";
    return kExitOk;
}

int cmd_sweep(const std::string& config_path, const std::string& epsilons_csv,
              const std::string& seeds_csv, const std::string& out_dir, const std::string& label) {
    dpalign::RunConfig cfg = dpalign::RunConfig::from_file(config_path);
    std::vector<double> epsilons = parse_epsilon_list(epsilons_csv);
    std::vector<std::uint64_t> seeds = parse_seed_list(seeds_csv);

    dpalign::AlignmentDataset dataset = cfg.load_or_generate_dataset();
    dpalign::PipelineSpec spec = cfg.to_pipeline_spec(dataset.metadata.vocab_size);
    dpalign::SweepCurve curve = dpalign::sweep(spec, epsilons, seeds, dataset);

    std::filesystem::create_directories(out_dir);
    const std::string curve_path = out_dir + "/curve.json";
    const std::string table_path = out_dir + "/results.csv";
    write_text_file(curve_path, curve.to_json().dump(2) + "\n");
    dpalign::ResultsTable table = dpalign::table_from_curve(
        curve, label, dpalign::to_string(cfg.optimizer.variant),
        cfg.pipeline == dpalign::PipelineKind::dpo_pipeline ? "DPO" : "PPO");
    dpalign::emit_results_table(table, table_path);

    for (const auto& p : curve.points) {
        std::printf("eps=%-6s sigma=%-10.4g reward=%.4f +- %.4f (%d seeds)\n",
                    dpalign::epsilon_to_string(p.epsilon).c_str(), p.sigma, p.mean_reward,
                    p.std_err, p.seeds);
    }
    std::cout << "curve: " << curve_path << "\ntable: " << table_path << "\n";
    return kExitOk;
}

int cmd_analyze(const std::string& input_path, const std::string& model,
                const std::string& optimizer, const std::string& method,
                const std::string& out_csv) {
    dpalign::SweepCurve curve;
    if (input_path.size() >= 5 && input_path.substr(input_path.size() - 5) == ".json") {
        std::ifstream is(input_path);
        if (!is) throw std::runtime_error("cannot open '" + input_path + "'");
        nlohmann::json j;
        is >> j;
        curve = dpalign::SweepCurve::from_json(j);
    } else {
        dpalign::ResultsTable table = dpalign::load_results_csv(input_path);
        if (table.rows.size() > 1 && (model.empty() || optimizer.empty() || method.empty())) {
            throw std::invalid_argument(
                "input has several rows; select one with --model/--optimizer/--method");
        }
        if (model.empty()) {
            const auto& r = table.rows.front();
            curve = dpalign::curve_from_row(table, r.model, r.optimizer, r.method);
        } else {
            curve = dpalign::curve_from_row(table, model, optimizer, method);
        }
    }
    dpalign::MarginalGainReport report = dpalign::marginal_gains(curve);
    std::cout << report.to_text();
    if (!out_csv.empty()) {
        write_text_file(out_csv, report.to_csv());
        std::cout << "csv: " << out_csv << "\n";
    }
    return kExitOk;
}

int cmd_accountant(std::optional<std::string> epsilon, std::optional<double> sigma, double delta,
                   int epochs, int phases, bool disjoint, const std::string& csv_path) {
    dpalign::AccountantConfig acct{epochs};
    if (epsilon && sigma) throw std::invalid_argument("give either --epsilon or --sigma, not both");
    if (!epsilon && !sigma) throw std::invalid_argument("give one of --epsilon or --sigma");

    if (epsilon) {
        dpalign::PrivacyBudget budget{dpalign::epsilon_from_string(*epsilon), delta};
        dpalign::Calibration cal = dpalign::calibrate(budget, acct);
        std::printf("sigma = %.5f%s\n", cal.sigma, cal.pure_noise ? " (pure-noise mode)" : "");
        if (phases > 1 || !csv_path.empty()) {
            std::vector<dpalign::PrivacyBudget> budgets(static_cast<std::size_t>(phases), budget);
            dpalign::PhaseBudgetReport report = dpalign::phase_budget_report(budgets, disjoint);
            std::cout << report.to_text();
            if (!csv_path.empty()) write_text_file(csv_path, report.to_csv());
        }
    } else {
        const double eps = dpalign::epsilon_for_sigma(*sigma, delta, acct);
        std::printf("epsilon = %.5f\n", eps);
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentially private alignment lab"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "generate a synthetic preference dataset");
    std::size_t gen_n = 512;
    int gen_vocab = 16, gen_prompt_len = 4, gen_response_len = 6;
    std::uint64_t gen_seed = 7;
    std::string gen_out;
    gen->add_option("--n", gen_n, "number of preference triples");
    gen->add_option("--vocab", gen_vocab, "vocabulary size (3..64)");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--prompt-len", gen_prompt_len, "prompt length");
    gen->add_option("--response-len", gen_response_len, "response length");
    gen->add_option("--out", gen_out, "output JSONL path")->required();

    // train
    auto* train = app.add_subcommand("train", "run one alignment pipeline from a config");
    std::string train_config, train_out_dir = "out";
    std::optional<std::uint64_t> train_seed;
    std::optional<std::string> train_epsilon;
    train->add_option("--config", train_config, "run configuration JSON")->required();
    train->add_option("--out-dir", train_out_dir, "output directory");
    std::uint64_t train_seed_raw = 0;
    auto* train_seed_opt = train->add_option("--seed", train_seed_raw, "override config seed");
    std::string train_eps_raw;
    auto* train_eps_opt =
        train->add_option("--epsilon", train_eps_raw, "override privacy epsilon (number, 0 or inf)");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "run the pipeline across privacy budgets");
    std::string sweep_config, sweep_eps = "0,1,2,3,4,5,10,inf", sweep_seeds = "1,2,3,4,5";
    std::string sweep_out_dir = "sweep_out", sweep_label = "tiny-policy";
    sweep_cmd->add_option("--config", sweep_config, "run configuration JSON")->required();
    sweep_cmd->add_option("--epsilons", sweep_eps, "comma-separated budgets (accepts 0 and inf)");
    sweep_cmd->add_option("--seeds", sweep_seeds, "comma-separated seeds");
    sweep_cmd->add_option("--out-dir", sweep_out_dir, "output directory");
    sweep_cmd->add_option("--label", sweep_label, "model label for the results table");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "marginal-gain analysis of a reward curve");
    std::string an_input, an_model, an_optimizer, an_method, an_out_csv;
    analyze->add_option("--input", an_input, "sweep curve JSON or results-table CSV")->required();
    analyze->add_option("--model", an_model, "row selector for CSV input");
    analyze->add_option("--optimizer", an_optimizer, "row selector for CSV input");
    analyze->add_option("--method", an_method, "row selector for CSV input");
    analyze->add_option("--out-csv", an_out_csv, "write the report as CSV");

    // accountant
    auto* acct = app.add_subcommand("accountant", "privacy budget <-> noise multiplier");
    std::string acct_eps;
    double acct_sigma = 0.0, acct_delta = 1e-5;
    int acct_epochs = 1, acct_phases = 1;
    bool acct_disjoint = true;
    auto* acct_eps_opt = acct->add_option("--epsilon", acct_eps, "budget (number, 0 or inf)");
    auto* acct_sigma_opt = acct->add_option("--sigma", acct_sigma, "noise multiplier");
    acct->add_option("--delta", acct_delta, "failure probability");
    acct->add_option("--epochs", acct_epochs, "per-phase epochs E");
    acct->add_option("--phases", acct_phases, "number of pipeline phases for the table");
    acct->add_flag("--disjoint,!--no-disjoint", acct_disjoint,
                   "whether phase partitions are disjoint");
    std::string acct_csv;
    acct->add_option("--csv", acct_csv, "write the phase table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen) {
            return cmd_generate_data(gen_n, gen_vocab, gen_seed, gen_prompt_len, gen_response_len,
                                     gen_out);
        }
        if (*train) {
            if (*train_seed_opt) train_seed = train_seed_raw;
            if (*train_eps_opt) train_epsilon = train_eps_raw;
            return cmd_train(train_config, train_seed, train_epsilon, train_out_dir);
        }
        if (*sweep_cmd) {
            return cmd_sweep(sweep_config, sweep_eps, sweep_seeds, sweep_out_dir, sweep_label);
        }
        if (*analyze) {
            return cmd_analyze(an_input, an_model, an_optimizer, an_method, an_out_csv);
        }
        if (*acct) {
            std::optional<std::string> eps;
            std::optional<double> sigma;
            if (*acct_eps_opt) eps = acct_eps;
            if (*acct_sigma_opt) sigma = acct_sigma;
            return cmd_accountant(eps, sigma, acct_delta, acct_epochs, acct_phases, acct_disjoint,
                                  acct_csv);
        }
    } catch (const dpalign::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
