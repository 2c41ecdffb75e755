#pragma once

#include <string>
#include <vector>

#include "dpalign/autograd.hpp"
#include "dpalign/models.hpp"
#include "dpalign/tensor.hpp"

namespace dpalign {

struct PreferenceTriple {
    TokenSeq prompt;
    TokenSeq chosen;    // preferred response
    TokenSeq rejected;  // dispreferred response
};

// One PPO rollout episode. States are the token prefixes (prompt, then
// prompt + generated tokens); rewards/values/old_logprobs are per step,
// with values carrying one extra bootstrap entry.
struct Trajectory {
    TokenSeq prompt;
    TokenSeq actions;                  // generated response tokens
    std::vector<double> rewards;       // per step
    std::vector<double> values;        // per state, length = steps + 1
    std::vector<double> old_logprobs;  // log pi_old(a_t | s_t), <= 0

    void validate() const;
};

struct AdvantageEstimate {
    std::vector<double> advantages;
    std::vector<double> returns;
};

// --- differentiable losses (graph builders) --------------------------------

// Mean over the batch of -log pi(chosen | prompt).
Var sft_loss_var(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                 const std::vector<PreferenceTriple>& batch, const std::string& prefix = "");

// Bradley-Terry: mean of -log sigmoid(R(x,y+) - R(x,y-)), via stable softplus.
Var rm_loss_var(Tape& tape, const VarMap& vars, const RewardNet& net,
                const std::vector<PreferenceTriple>& batch, const std::string& prefix = "");

// Reference-free pairwise loss: mean of softplus(l- - l+) where l+/l- are
// sequence log-probs, i.e. -log( pi(y+|x) / (pi(y+|x) + pi(y-|x)) ).
Var dpo_loss_var(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                 const std::vector<PreferenceTriple>& batch, const std::string& prefix = "");

// Clipped-surrogate policy loss, negated for minimization. Advantages are
// treated as constants; `advantages` must align with the trajectories'
// actions, flattened trajectory-major.
Var ppo_loss_var(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                 const std::vector<Trajectory>& trajectories,
                 const std::vector<AdvantageEstimate>& advantages, double clip_eps,
                 const std::string& prefix = "");

// Mean squared error of the value net against GAE returns (unscaled; the
// training loop applies the 0.5 coefficient).
Var value_mse_var(Tape& tape, const VarMap& vars, const ValueNet& net,
                  const std::vector<Trajectory>& trajectories,
                  const std::vector<AdvantageEstimate>& advantages, const std::string& prefix = "");

// --- numeric wrappers -------------------------------------------------------

double sft_loss(const TinyPolicy& policy, const std::vector<PreferenceTriple>& batch);
double rm_loss(const RewardNet& net, const std::vector<PreferenceTriple>& batch);
double dpo_loss(const TinyPolicy& policy, const std::vector<PreferenceTriple>& batch);
double ppo_loss(const TinyPolicy& policy, const std::vector<Trajectory>& trajectories,
                const std::vector<AdvantageEstimate>& advantages, double clip_eps);

// Generalized advantage estimation, computed backward:
//   delta_t = r_t + gamma * V(s_{t+1}) - V(s_t)
//   A_t = delta_t + gamma * lambda * A_{t+1},  returns_t = A_t + V(s_t)
AdvantageEstimate gae(const Trajectory& traj, double gamma, double lambda_gae);

}  // namespace dpalign
