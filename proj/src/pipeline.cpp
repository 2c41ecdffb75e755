#include "dpalign/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dpalign/stats.hpp"

namespace dpalign {

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "sft") return LossKind::sft;
    if (s == "rm") return LossKind::rm;
    if (s == "dpo") return LossKind::dpo;
    if (s == "ppo") return LossKind::ppo;
    throw std::invalid_argument("unknown loss kind '" + s + "'");
}

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::sft: return "sft";
        case LossKind::rm: return "rm";
        case LossKind::dpo: return "dpo";
        case LossKind::ppo: return "ppo";
    }
    return "?";
}

PipelineKind pipeline_kind_from_string(const std::string& s) {
    if (s == "dpo" || s == "dpo_pipeline") return PipelineKind::dpo_pipeline;
    if (s == "rlhf" || s == "rlhf_pipeline") return PipelineKind::rlhf_pipeline;
    throw std::invalid_argument("unknown pipeline kind '" + s + "' (expected dpo or rlhf)");
}

std::string to_string(PipelineKind k) {
    return k == PipelineKind::dpo_pipeline ? "dpo" : "rlhf";
}

void PhaseSpec::validate() const {
    optimizer.validate();
    budget.validate();
    if (epochs < 1) throw std::invalid_argument("phase: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("phase: batch_size must be >= 1");
    const Calibration cal = calibrate(budget, AccountantConfig{epochs});
    if (optimizer.pure_noise != cal.pure_noise) {
        throw std::invalid_argument("phase: optimizer pure_noise flag inconsistent with budget");
    }
    const double tol = 1e-9 * std::max(1.0, cal.sigma);
    if (std::abs(optimizer.noise_multiplier - cal.sigma) > tol) {
        throw std::invalid_argument(
            "phase: optimizer noise_multiplier " + std::to_string(optimizer.noise_multiplier) +
            " does not match the accountant calibration " + std::to_string(cal.sigma) +
            " for epsilon=" + epsilon_to_string(budget.epsilon));
    }
}

void PipelineSpec::validate() const {
    const std::vector<LossKind> expected =
        kind == PipelineKind::dpo_pipeline
            ? std::vector<LossKind>{LossKind::sft, LossKind::dpo}
            : std::vector<LossKind>{LossKind::sft, LossKind::rm, LossKind::ppo};
    if (phases.size() != expected.size()) {
        throw std::invalid_argument("pipeline: " + to_string(kind) + " needs " +
                                    std::to_string(expected.size()) + " phases, got " +
                                    std::to_string(phases.size()));
    }
    for (std::size_t i = 0; i < phases.size(); ++i) {
        if (phases[i].loss_kind != expected[i]) {
            throw std::invalid_argument("pipeline: phase " + std::to_string(i + 1) + " must be " +
                                        to_string(expected[i]) + ", got " +
                                        to_string(phases[i].loss_kind));
        }
        phases[i].validate();
    }
    if (partition_fractions.size() != phases.size()) {
        throw std::invalid_argument("pipeline: partition_fractions length must equal phase count");
    }
    if (!(ppo.gamma >= 0.0 && ppo.gamma <= 1.0) || !(ppo.lambda_gae >= 0.0 && ppo.lambda_gae <= 1.0)) {
        throw std::invalid_argument("pipeline: gamma and lambda_gae must lie in [0, 1]");
    }
    if (!(ppo.clip_eps > 0.0 && ppo.clip_eps < 1.0)) {
        throw std::invalid_argument("pipeline: clip_eps must lie in (0, 1)");
    }
    if (ppo.max_response_len < 1 || ppo.rollout_batch < 1) {
        throw std::invalid_argument("pipeline: ppo rollout settings must be positive");
    }
    if (!(ppo.temperature > 0.0) || !(eval.temperature > 0.0)) {
        throw std::invalid_argument("pipeline: temperatures must be > 0");
    }
    if (eval.n_prompts < 1) throw std::invalid_argument("pipeline: eval.n_prompts must be >= 1");
}

namespace {

// One epoch plan: shuffled indices cut into batches of at most batch_size.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size, Rng& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
        const std::size_t stop = std::min(n, start + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return batches;
}

struct PhaseLoop {
    const PhaseSpec& spec;
    std::size_t part_size;
    Rng& rng;
    PhaseMetrics metrics;
    std::vector<int> visits;
    OptimizerState state;
    int clip_steps = 0;

    PhaseLoop(const PhaseSpec& s, std::size_t n, const ParamSet& params, Rng& r)
        : spec(s), part_size(n), rng(r), visits(n, 0), state(OptimizerState::init(params)) {
        if (n == 0) throw std::invalid_argument("phase: empty dataset part");
        metrics.kind = s.loss_kind;
        metrics.epochs = s.epochs;
        metrics.sigma = s.optimizer.noise_multiplier;
        metrics.pure_noise = s.optimizer.pure_noise;
    }

    // Runs all epochs; step_fn(batch) performs one loss+gradient+optimizer
    // step over `params` and returns the batch loss.
    template <typename StepFn>
    void run(StepFn&& step_fn) {
        for (int e = 0; e < spec.epochs; ++e) {
            double loss_sum = 0.0;
            std::size_t batches = 0;
            for (const auto& batch : epoch_batches(part_size, spec.batch_size, rng)) {
                for (std::size_t idx : batch) visits[idx] += 1;
                loss_sum += step_fn(batch);
                ++batches;
            }
            metrics.epoch_mean_loss.push_back(loss_sum / static_cast<double>(batches));
        }
        for (std::size_t i = 0; i < visits.size(); ++i) {
            if (visits[i] != spec.epochs) {
                throw std::logic_error("phase: example " + std::to_string(i) + " visited " +
                                       std::to_string(visits[i]) + " times, expected " +
                                       std::to_string(spec.epochs));
            }
        }
        metrics.steps = static_cast<int>(state.t);
        metrics.clip_activation_rate =
            state.t == 0 ? 0.0 : static_cast<double>(clip_steps) / static_cast<double>(state.t);
    }

    // Shared optimizer-step plumbing around a LossFn for the current params.
    double optimize(ParamSet& params, const LossFn& loss_fn) {
        try {
            auto [loss, grads] = gradient(params, loss_fn);
            StepResult res = step(params, grads, state, spec.optimizer, rng);
            params = std::move(res.params);
            state = std::move(res.state);
            if (res.clip_active) ++clip_steps;
            return loss;
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(abort_message(e.what()));
        }
    }

    // Per-sample variant: one LossFn per example in the batch.
    double optimize_per_sample(ParamSet& params, const std::vector<LossFn>& sample_fns) {
        try {
            std::vector<GradSet> grads;
            grads.reserve(sample_fns.size());
            double loss_sum = 0.0;
            for (const LossFn& fn : sample_fns) {
                auto [loss, g] = gradient(params, fn);
                loss_sum += loss;
                grads.push_back(std::move(g));
            }
            StepResult res = step_per_sample(params, grads, state, spec.optimizer, rng);
            params = std::move(res.params);
            state = std::move(res.state);
            if (res.clip_active) ++clip_steps;
            return loss_sum / static_cast<double>(sample_fns.size());
        } catch (const std::runtime_error& e) {
            throw std::runtime_error(abort_message(e.what()));
        }
    }

    std::string abort_message(const std::string& cause) const {
        return to_string(spec.loss_kind) + " phase aborted at step " +
               std::to_string(state.t + 1) + ": " + cause;
    }
};

std::vector<PreferenceTriple> select(const std::vector<PreferenceTriple>& part,
                                     const std::vector<std::size_t>& idx) {
    std::vector<PreferenceTriple> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(part[i]);
    return out;
}

template <typename MakeBatchLoss, typename MakeSampleLoss>
PhaseMetrics run_triple_phase(ParamSet& params, const std::vector<PreferenceTriple>& part,
                              const PhaseSpec& spec, Rng& rng, MakeBatchLoss&& make_batch_loss,
                              MakeSampleLoss&& make_sample_loss) {
    spec.validate();
    PhaseLoop loop(spec, part.size(), params, rng);
    loop.run([&](const std::vector<std::size_t>& batch_idx) {
        std::vector<PreferenceTriple> batch = select(part, batch_idx);
        if (spec.optimizer.clipping_mode == ClippingMode::batch) {
            return loop.optimize(params, make_batch_loss(std::move(batch)));
        }
        std::vector<LossFn> fns;
        fns.reserve(batch.size());
        for (const PreferenceTriple& t : batch) fns.push_back(make_sample_loss(t));
        return loop.optimize_per_sample(params, fns);
    });
    return loop.metrics;
}

}  // namespace

PhaseMetrics run_sft_phase(TinyPolicy& policy, const std::vector<PreferenceTriple>& part,
                           const PhaseSpec& spec, Rng& rng) {
    if (spec.loss_kind != LossKind::sft) throw std::invalid_argument("run_sft_phase: wrong loss kind");
    return run_triple_phase(
        policy.params, part, spec, rng,
        [&policy](std::vector<PreferenceTriple> batch) -> LossFn {
            return [&policy, batch = std::move(batch)](Tape& tape, const VarMap& vars) {
                return sft_loss_var(tape, vars, policy, batch);
            };
        },
        [&policy](const PreferenceTriple& t) -> LossFn {
            return [&policy, t](Tape& tape, const VarMap& vars) {
                return sft_loss_var(tape, vars, policy, {t});
            };
        });
}

PhaseMetrics run_dpo_phase(TinyPolicy& policy, const std::vector<PreferenceTriple>& part,
                           const PhaseSpec& spec, Rng& rng) {
    if (spec.loss_kind != LossKind::dpo) throw std::invalid_argument("run_dpo_phase: wrong loss kind");
    return run_triple_phase(
        policy.params, part, spec, rng,
        [&policy](std::vector<PreferenceTriple> batch) -> LossFn {
            return [&policy, batch = std::move(batch)](Tape& tape, const VarMap& vars) {
                return dpo_loss_var(tape, vars, policy, batch);
            };
        },
        [&policy](const PreferenceTriple& t) -> LossFn {
            return [&policy, t](Tape& tape, const VarMap& vars) {
                return dpo_loss_var(tape, vars, policy, {t});
            };
        });
}

PhaseMetrics run_rm_phase(RewardNet& net, const std::vector<PreferenceTriple>& part,
                          const PhaseSpec& spec, Rng& rng) {
    if (spec.loss_kind != LossKind::rm) throw std::invalid_argument("run_rm_phase: wrong loss kind");
    return run_triple_phase(
        net.params, part, spec, rng,
        [&net](std::vector<PreferenceTriple> batch) -> LossFn {
            return [&net, batch = std::move(batch)](Tape& tape, const VarMap& vars) {
                return rm_loss_var(tape, vars, net, batch);
            };
        },
        [&net](const PreferenceTriple& t) -> LossFn {
            return [&net, t](Tape& tape, const VarMap& vars) {
                return rm_loss_var(tape, vars, net, {t});
            };
        });
}

namespace {

// Merged parameter set for the joint policy+value PPO step; names are
// prefixed so one privatized gradient covers both networks.
ParamSet merge_policy_value(const TinyPolicy& policy, const ValueNet& value_net) {
    ParamSet merged;
    for (const auto& [name, t] : policy.params) merged.insert("policy/" + name, t);
    for (const auto& [name, t] : value_net.params) merged.insert("value/" + name, t);
    return merged;
}

void split_policy_value(const ParamSet& merged, TinyPolicy& policy, ValueNet& value_net) {
    for (auto& [name, t] : policy.params) t = merged.at("policy/" + name);
    for (auto& [name, t] : value_net.params) t = merged.at("value/" + name);
}

struct RolloutBatch {
    std::vector<Trajectory> trajectories;
    std::vector<AdvantageEstimate> advantages;
};

// Rolls out the current policy on the given prompts, scores complete
// responses with the frozen reward net (terminal reward), and fills values
// and old logprobs from the current value net / policy.
RolloutBatch collect_rollouts(const TinyPolicy& policy, const ValueNet& value_net,
                              const RewardNet& frozen_rm, const std::vector<TokenSeq>& prompts,
                              const PpoSettings& ppo, Rng& rng) {
    RolloutBatch out;
    std::vector<PromptResponse> pairs;
    for (const TokenSeq& prompt : prompts) {
        TokenSeq response = sample_response(policy, prompt, ppo.max_response_len, ppo.temperature, rng);
        if (response.empty()) continue;  // immediate end token: nothing to optimize
        pairs.push_back({prompt, response});
    }
    if (pairs.empty()) return out;

    // Old logprobs and values for all rollouts in two forward passes.
    Tape tape;
    VarMap pvars;
    for (const auto& [name, t] : policy.params) pvars.emplace(name, tape.leaf(t));
    Var old_lp = policy_position_logprobs(tape, pvars, policy, pairs);
    const Tensor& old_lp_t = tape.value(old_lp);

    Tape vtape;
    VarMap vvars;
    for (const auto& [name, t] : value_net.params) vvars.emplace(name, vtape.leaf(t));
    Var vals = value_of_prefixes(vtape, vvars, value_net, pairs);
    const Tensor& vals_t = vtape.value(vals);

    std::size_t row = 0;
    for (const PromptResponse& pr : pairs) {
        const std::size_t n = pr.response.size();
        Trajectory traj;
        traj.prompt = pr.prompt;
        traj.actions = pr.response;
        traj.rewards.assign(n, 0.0);
        traj.rewards[n - 1] = reward_score(frozen_rm, pr.prompt, pr.response);
        traj.old_logprobs.assign(old_lp_t.values.begin() + static_cast<std::ptrdiff_t>(row),
                                 old_lp_t.values.begin() + static_cast<std::ptrdiff_t>(row + n));
        traj.values.assign(vals_t.values.begin() + static_cast<std::ptrdiff_t>(row),
                           vals_t.values.begin() + static_cast<std::ptrdiff_t>(row + n));
        traj.values.push_back(0.0);  // terminal state bootstrap
        row += n;
        traj.validate();
        out.trajectories.push_back(std::move(traj));
    }
    for (const Trajectory& traj : out.trajectories) {
        out.advantages.push_back(gae(traj, ppo.gamma, ppo.lambda_gae));
    }
    return out;
}

}  // namespace

PhaseMetrics run_ppo_phase(TinyPolicy& policy, ValueNet& value_net, const RewardNet& frozen_rm,
                           const std::vector<PreferenceTriple>& part, const PhaseSpec& spec,
                           const PpoSettings& ppo, Rng& rng) {
    if (spec.loss_kind != LossKind::ppo) throw std::invalid_argument("run_ppo_phase: wrong loss kind");
    spec.validate();
    // The rollout budget caps how many episodes feed one optimizer step.
    PhaseSpec ppo_spec = spec;
    ppo_spec.batch_size = std::min(spec.batch_size, ppo.rollout_batch);
    ParamSet merged = merge_policy_value(policy, value_net);
    PhaseLoop loop(ppo_spec, part.size(), merged, rng);
    auto make_loss = [&policy, &value_net, &ppo](RolloutBatch rb) -> LossFn {
        return [&policy, &value_net, &ppo, rb = std::move(rb)](Tape& tape, const VarMap& vars) {
            Var policy_loss = ppo_loss_var(tape, vars, policy, rb.trajectories, rb.advantages,
                                           ppo.clip_eps, "policy/");
            Var value_loss =
                value_mse_var(tape, vars, value_net, rb.trajectories, rb.advantages, "value/");
            return policy_loss + scale(value_loss, 0.5);
        };
    };
    loop.run([&](const std::vector<std::size_t>& batch_idx) {
        std::vector<TokenSeq> prompts;
        prompts.reserve(batch_idx.size());
        for (std::size_t i : batch_idx) prompts.push_back(part[i].prompt);
        split_policy_value(merged, policy, value_net);
        RolloutBatch rb = collect_rollouts(policy, value_net, frozen_rm, prompts, ppo, rng);
        if (rb.trajectories.empty()) return 0.0;
        if (ppo_spec.optimizer.clipping_mode == ClippingMode::batch) {
            return loop.optimize(merged, make_loss(std::move(rb)));
        }
        // per-sample mode: each trajectory is one example
        std::vector<LossFn> fns;
        fns.reserve(rb.trajectories.size());
        for (std::size_t i = 0; i < rb.trajectories.size(); ++i) {
            RolloutBatch single;
            single.trajectories = {rb.trajectories[i]};
            single.advantages = {rb.advantages[i]};
            fns.push_back(make_loss(std::move(single)));
        }
        return loop.optimize_per_sample(merged, fns);
    });
    split_policy_value(merged, policy, value_net);
    return loop.metrics;
}

EvalResult evaluate_alignment(const TinyPolicy& policy, const GroundTruthScorer& scorer,
                              const std::vector<TokenSeq>& prompts, int n_samples,
                              double temperature, int max_response_len, Rng& rng) {
    if (prompts.empty()) throw std::invalid_argument("evaluate_alignment: no prompts");
    if (n_samples < 1) throw std::invalid_argument("evaluate_alignment: n_samples must be >= 1");
    std::vector<double> scores;
    scores.reserve(static_cast<std::size_t>(n_samples));
    for (int i = 0; i < n_samples; ++i) {
        const TokenSeq& prompt = prompts[static_cast<std::size_t>(i) % prompts.size()];
        TokenSeq response = sample_response(policy, prompt, max_response_len, temperature, rng);
        scores.push_back(scorer(prompt, response));
    }
    return {stats::mean(scores), stats::standard_error(scores)};
}

GroundTruthScorer scorer_from_reward_net(const RewardNet& net) {
    return [net](const TokenSeq& x, const TokenSeq& y) { return reward_score(net, x, y); };
}

nlohmann::json PipelineReport::to_json() const {
    nlohmann::json j;
    j["pipeline"] = pipeline_kind;
    j["seed"] = seed;
    j["wall_ms"] = wall_ms;
    nlohmann::json phases_json = nlohmann::json::array();
    for (const PhaseMetrics& m : phases) {
        phases_json.push_back({{"kind", to_string(m.kind)},
                               {"epochs", m.epochs},
                               {"steps", m.steps},
                               {"epoch_mean_loss", m.epoch_mean_loss},
                               {"clip_activation_rate", m.clip_activation_rate},
                               {"sigma", m.sigma},
                               {"pure_noise", m.pure_noise},
                               {"eval_mean", m.eval_mean},
                               {"eval_std_err", m.eval_std_err}});
    }
    j["phases"] = phases_json;
    nlohmann::json budget_json = nlohmann::json::array();
    for (const auto& row : budget.per_phase) {
        budget_json.push_back({{"phase", row.phase},
                               {"epsilon", epsilon_to_string(row.budget.epsilon)},
                               {"delta", row.budget.delta}});
    }
    j["budget"] = {{"per_phase", budget_json},
                   {"partitions_disjoint", budget.partitions_disjoint},
                   {"overall",
                    {{"epsilon", epsilon_to_string(budget.overall.epsilon)},
                     {"delta", budget.overall.delta}}}};
    return j;
}

PipelineResult run_pipeline(const PipelineSpec& spec, const AlignmentDataset& dataset) {
    spec.validate();
    if (dataset.triples.empty()) throw std::invalid_argument("run_pipeline: empty dataset");
    const auto t_start = std::chrono::steady_clock::now();

    Rng base(spec.seed);
    PhasePartition partition =
        partition_disjoint(dataset, spec.partition_fractions, Rng::mix(spec.seed, 0x9a271710ULL));
    partition.check_disjoint_exhaustive(dataset.triples.size());

    std::vector<std::vector<PreferenceTriple>> parts;
    for (const auto& idx_list : partition.parts) {
        std::vector<PreferenceTriple> part;
        part.reserve(idx_list.size());
        for (std::size_t i : idx_list) part.push_back(dataset.triples[i]);
        parts.push_back(std::move(part));
    }

    GroundTruthScorer scorer = ground_truth_scorer(dataset.metadata);
    std::vector<TokenSeq> eval_prompts =
        held_out_prompts(dataset, static_cast<std::size_t>(spec.eval.n_prompts), spec.eval.seed);

    TinyPolicy policy = TinyPolicy::init(spec.model.vocab_size, spec.model.embed_dim,
                                         spec.model.hidden_dim, spec.model.context_window,
                                         Rng::mix(spec.seed, 1));
    PipelineResult result;
    result.report.seed = spec.seed;
    result.report.pipeline_kind = to_string(spec.kind);

    auto post_phase_eval = [&](PhaseMetrics& metrics, std::uint64_t stream) {
        Rng eval_rng(Rng::mix(spec.eval.seed, stream));
        EvalResult er = evaluate_alignment(policy, scorer, eval_prompts, spec.eval.n_prompts,
                                           spec.eval.temperature, spec.eval.max_response_len,
                                           eval_rng);
        metrics.eval_mean = er.mean;
        metrics.eval_std_err = er.std_err;
    };

    if (spec.kind == PipelineKind::dpo_pipeline) {
        Rng rng0 = base.fork(100);
        PhaseMetrics m0 = run_sft_phase(policy, parts[0], spec.phases[0], rng0);
        post_phase_eval(m0, 201);
        result.report.phases.push_back(std::move(m0));

        Rng rng1 = base.fork(101);
        PhaseMetrics m1 = run_dpo_phase(policy, parts[1], spec.phases[1], rng1);
        post_phase_eval(m1, 202);
        result.report.phases.push_back(std::move(m1));
    } else {
        Rng rng0 = base.fork(100);
        PhaseMetrics m0 = run_sft_phase(policy, parts[0], spec.phases[0], rng0);
        post_phase_eval(m0, 201);
        result.report.phases.push_back(std::move(m0));

        RewardNet rm = RewardNet::init(spec.model.vocab_size, spec.model.embed_dim,
                                       spec.model.hidden_dim, Rng::mix(spec.seed, 2));
        Rng rng1 = base.fork(101);
        PhaseMetrics m1 = run_rm_phase(rm, parts[1], spec.phases[1], rng1);
        post_phase_eval(m1, 202);  // policy unchanged by the RM phase
        result.report.phases.push_back(std::move(m1));

        ValueNet value_net = ValueNet::init(spec.model.vocab_size, spec.model.embed_dim,
                                            spec.model.hidden_dim, Rng::mix(spec.seed, 3));
        Rng rng2 = base.fork(102);
        PhaseMetrics m2 = run_ppo_phase(policy, value_net, rm, parts[2], spec.phases[2], spec.ppo,
                                        rng2);
        post_phase_eval(m2, 203);
        result.report.phases.push_back(std::move(m2));
        result.reward_net = std::move(rm);
    }

    std::vector<PrivacyBudget> phase_budgets;
    for (const PhaseSpec& p : spec.phases) phase_budgets.push_back(p.budget);
    result.report.budget = phase_budget_report(phase_budgets, /*partitions_disjoint=*/true);

    result.policy = std::move(policy);
    result.report.wall_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t_start)
                                .count();
    return result;
}

}  // namespace dpalign
