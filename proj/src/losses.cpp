#include "dpalign/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace dpalign {

void Trajectory::validate() const {
    const std::size_t n = actions.size();
    if (n == 0) throw std::invalid_argument("trajectory: no actions");
    if (rewards.size() != n) throw std::invalid_argument("trajectory: rewards length mismatch");
    if (old_logprobs.size() != n) {
        throw std::invalid_argument("trajectory: old_logprobs length mismatch");
    }
    if (values.size() != n + 1) {
        throw std::invalid_argument("trajectory: values must have length steps + 1 (bootstrap)");
    }
    for (double lp : old_logprobs) {
        if (lp > 1e-9) throw std::invalid_argument("trajectory: old_logprobs must be <= 0");
        if (!std::isfinite(lp)) throw std::invalid_argument("trajectory: non-finite old_logprob");
    }
    for (double r : rewards) {
        if (!std::isfinite(r)) throw std::invalid_argument("trajectory: non-finite reward");
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("trajectory: non-finite value");
    }
}

namespace {

std::vector<PromptResponse> chosen_pairs(const std::vector<PreferenceTriple>& batch) {
    std::vector<PromptResponse> out;
    out.reserve(batch.size());
    for (const PreferenceTriple& t : batch) out.push_back({t.prompt, t.chosen});
    return out;
}

std::vector<PromptResponse> rejected_pairs(const std::vector<PreferenceTriple>& batch) {
    std::vector<PromptResponse> out;
    out.reserve(batch.size());
    for (const PreferenceTriple& t : batch) out.push_back({t.prompt, t.rejected});
    return out;
}

void require_nonempty(const char* who, std::size_t n) {
    if (n == 0) throw std::invalid_argument(std::string(who) + ": empty batch");
}

std::vector<PromptResponse> rollout_pairs(const std::vector<Trajectory>& trajectories) {
    std::vector<PromptResponse> out;
    out.reserve(trajectories.size());
    for (const Trajectory& tr : trajectories) {
        tr.validate();
        out.push_back({tr.prompt, tr.actions});
    }
    return out;
}

}  // namespace

Var sft_loss_var(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                 const std::vector<PreferenceTriple>& batch, const std::string& prefix) {
    require_nonempty("sft_loss", batch.size());
    Var lp = policy_sequence_logprobs(tape, vars, policy, chosen_pairs(batch), prefix);
    return scale(mean_all(lp), -1.0);
}

Var rm_loss_var(Tape& tape, const VarMap& vars, const RewardNet& net,
                const std::vector<PreferenceTriple>& batch, const std::string& prefix) {
    require_nonempty("rm_loss", batch.size());
    Var plus = reward_scores(tape, vars, net, chosen_pairs(batch), prefix);
    Var minus = reward_scores(tape, vars, net, rejected_pairs(batch), prefix);
    // -log sigmoid(margin) == softplus(-margin)
    return mean_all(softplus(minus - plus));
}

Var dpo_loss_var(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                 const std::vector<PreferenceTriple>& batch, const std::string& prefix) {
    require_nonempty("dpo_loss", batch.size());
    Var lp_plus = policy_sequence_logprobs(tape, vars, policy, chosen_pairs(batch), prefix);
    Var lp_minus = policy_sequence_logprobs(tape, vars, policy, rejected_pairs(batch), prefix);
    // -log( e^{l+} / (e^{l+} + e^{l-}) ) == logsumexp(0, l- - l+) == softplus(l- - l+)
    return mean_all(softplus(lp_minus - lp_plus));
}

Var ppo_loss_var(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                 const std::vector<Trajectory>& trajectories,
                 const std::vector<AdvantageEstimate>& advantages, double clip_eps,
                 const std::string& prefix) {
    require_nonempty("ppo_loss", trajectories.size());
    if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
        throw std::invalid_argument("ppo_loss: clip_eps must lie in (0, 1)");
    }
    if (advantages.size() != trajectories.size()) {
        throw std::invalid_argument("ppo_loss: advantages/trajectories count mismatch");
    }
    std::vector<double> old_flat;
    std::vector<double> adv_flat;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        const Trajectory& tr = trajectories[i];
        if (advantages[i].advantages.size() != tr.actions.size()) {
            throw std::invalid_argument("ppo_loss: advantage length mismatch for trajectory " +
                                        std::to_string(i));
        }
        old_flat.insert(old_flat.end(), tr.old_logprobs.begin(), tr.old_logprobs.end());
        adv_flat.insert(adv_flat.end(), advantages[i].advantages.begin(),
                        advantages[i].advantages.end());
    }
    Var new_lp = policy_position_logprobs(tape, vars, policy, rollout_pairs(trajectories), prefix);
    Var old_lp = tape.constant(Tensor({old_flat.size()}, old_flat));
    Var adv = tape.constant(Tensor({adv_flat.size()}, adv_flat));
    Var ratio = exp_elem(new_lp - old_lp);
    Var surrogate = minimum(ratio * adv, clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv);
    return scale(mean_all(surrogate), -1.0);
}

Var value_mse_var(Tape& tape, const VarMap& vars, const ValueNet& net,
                  const std::vector<Trajectory>& trajectories,
                  const std::vector<AdvantageEstimate>& advantages, const std::string& prefix) {
    require_nonempty("value_mse", trajectories.size());
    std::vector<double> returns_flat;
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        if (advantages[i].returns.size() != trajectories[i].actions.size()) {
            throw std::invalid_argument("value_mse: returns length mismatch for trajectory " +
                                        std::to_string(i));
        }
        returns_flat.insert(returns_flat.end(), advantages[i].returns.begin(),
                            advantages[i].returns.end());
    }
    Var values = value_of_prefixes(tape, vars, net, rollout_pairs(trajectories), prefix);
    Var target = tape.constant(Tensor({returns_flat.size()}, returns_flat));
    return mean_all(square(values - target));
}

namespace {

double run_scalar(const ParamSet& params, const LossFn& fn) { return evaluate(params, fn); }

}  // namespace

double sft_loss(const TinyPolicy& policy, const std::vector<PreferenceTriple>& batch) {
    return run_scalar(policy.params, [&](Tape& tape, const VarMap& vars) {
        return sft_loss_var(tape, vars, policy, batch);
    });
}

double rm_loss(const RewardNet& net, const std::vector<PreferenceTriple>& batch) {
    return run_scalar(net.params, [&](Tape& tape, const VarMap& vars) {
        return rm_loss_var(tape, vars, net, batch);
    });
}

double dpo_loss(const TinyPolicy& policy, const std::vector<PreferenceTriple>& batch) {
    return run_scalar(policy.params, [&](Tape& tape, const VarMap& vars) {
        return dpo_loss_var(tape, vars, policy, batch);
    });
}

double ppo_loss(const TinyPolicy& policy, const std::vector<Trajectory>& trajectories,
                const std::vector<AdvantageEstimate>& advantages, double clip_eps) {
    return run_scalar(policy.params, [&](Tape& tape, const VarMap& vars) {
        return ppo_loss_var(tape, vars, policy, trajectories, advantages, clip_eps);
    });
}

AdvantageEstimate gae(const Trajectory& traj, double gamma, double lambda_gae) {
    traj.validate();
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gae: gamma must be in [0, 1]");
    if (!(lambda_gae >= 0.0 && lambda_gae <= 1.0)) {
        throw std::invalid_argument("gae: lambda must be in [0, 1]");
    }
    const std::size_t n = traj.actions.size();
    AdvantageEstimate est;
    est.advantages.assign(n, 0.0);
    est.returns.assign(n, 0.0);
    double next_adv = 0.0;
    for (std::size_t i = n; i-- > 0;) {
        const double delta = traj.rewards[i] + gamma * traj.values[i + 1] - traj.values[i];
        next_adv = delta + gamma * lambda_gae * next_adv;
        est.advantages[i] = next_adv;
        est.returns[i] = next_adv + traj.values[i];
    }
    return est;
}

}  // namespace dpalign
