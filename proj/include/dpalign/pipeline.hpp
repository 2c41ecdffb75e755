#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dpalign/accountant.hpp"
#include "dpalign/data.hpp"
#include "dpalign/losses.hpp"
#include "dpalign/models.hpp"
#include "dpalign/optimizer.hpp"

namespace dpalign {

enum class LossKind { sft, rm, dpo, ppo };
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

enum class PipelineKind { dpo_pipeline, rlhf_pipeline };
PipelineKind pipeline_kind_from_string(const std::string& s);
std::string to_string(PipelineKind k);

struct PhaseSpec {
    LossKind loss_kind = LossKind::sft;
    DpOptimizerConfig optimizer;
    int epochs = 3;
    int batch_size = 32;
    PrivacyBudget budget;

    // The optimizer's noise multiplier (and pure-noise flag) must agree with
    // the budget per the accountant; checked before any phase runs.
    void validate() const;
};

struct ModelSettings {
    int vocab_size = 16;
    int embed_dim = 12;
    int hidden_dim = 24;
    int context_window = 32;
};

struct PpoSettings {
    double gamma = 0.99;
    double lambda_gae = 0.95;
    double clip_eps = 0.2;
    int max_response_len = 8;
    double temperature = 1.0;  // rollout sampling
    int rollout_batch = 64;    // rollouts per optimizer step
};

struct EvalSettings {
    int n_prompts = 64;
    double temperature = 0.7;
    int max_response_len = 8;
    std::uint64_t seed = 9001;
};

struct PipelineSpec {
    PipelineKind kind = PipelineKind::dpo_pipeline;
    std::vector<PhaseSpec> phases;              // [sft, dpo] or [sft, rm, ppo]
    std::vector<double> partition_fractions;    // one per phase
    std::uint64_t seed = 1;
    ModelSettings model;
    PpoSettings ppo;
    EvalSettings eval;

    void validate() const;
};

struct PhaseMetrics {
    LossKind kind = LossKind::sft;
    int epochs = 0;
    int steps = 0;
    std::vector<double> epoch_mean_loss;
    double clip_activation_rate = 0.0;  // fraction of steps where clipping fired
    double sigma = 0.0;
    bool pure_noise = false;
    // Ground-truth reward on held-out prompts after the phase finished.
    double eval_mean = 0.0;
    double eval_std_err = 0.0;
};

struct PipelineReport {
    std::vector<PhaseMetrics> phases;
    PhaseBudgetReport budget;
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
    std::string pipeline_kind;

    nlohmann::json to_json() const;
};

struct PipelineResult {
    TinyPolicy policy;
    std::optional<RewardNet> reward_net;  // trained in the rlhf pipeline
    PipelineReport report;
};

// --- single-phase drivers ---------------------------------------------------
// Each runs `spec.epochs` passes of shuffled without-replacement mini-batches
// over `part`, stepping the DP optimizer once per batch, and verifies that
// every example was visited exactly `epochs` times.

PhaseMetrics run_sft_phase(TinyPolicy& policy, const std::vector<PreferenceTriple>& part,
                           const PhaseSpec& spec, Rng& rng);
PhaseMetrics run_dpo_phase(TinyPolicy& policy, const std::vector<PreferenceTriple>& part,
                           const PhaseSpec& spec, Rng& rng);
PhaseMetrics run_rm_phase(RewardNet& net, const std::vector<PreferenceTriple>& part,
                          const PhaseSpec& spec, Rng& rng);
// PPO: rollouts from the current policy, scored by the frozen reward net;
// the value net trains jointly through the same privatized gradient step.
PhaseMetrics run_ppo_phase(TinyPolicy& policy, ValueNet& value_net, const RewardNet& frozen_rm,
                           const std::vector<PreferenceTriple>& part, const PhaseSpec& spec,
                           const PpoSettings& ppo, Rng& rng);

// --- full pipeline ------------------------------------------------------------

PipelineResult run_pipeline(const PipelineSpec& spec, const AlignmentDataset& dataset);

// Samples one response per visited prompt (cycling when n_samples exceeds
// the prompt count), scores each, and returns mean and standard error.
// The scorer is either the dataset's ground-truth rule or a trained reward
// net wrapped via scorer_from_reward_net.
struct EvalResult {
    double mean = 0.0;
    double std_err = 0.0;
};
EvalResult evaluate_alignment(const TinyPolicy& policy, const GroundTruthScorer& scorer,
                              const std::vector<TokenSeq>& prompts, int n_samples,
                              double temperature, int max_response_len, Rng& rng);

GroundTruthScorer scorer_from_reward_net(const RewardNet& net);

}  // namespace dpalign
