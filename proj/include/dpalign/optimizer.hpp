#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpalign/rng.hpp"
#include "dpalign/tensor.hpp"

namespace dpalign {

enum class OptimizerVariant { dp_sgd, dp_adam, dp_adamw };

enum class ClippingMode {
    batch,       // clip the batch-mean gradient once (sensitivity C under
                 // whole-batch adjacency; the literal algorithm)
    per_sample,  // clip each example's gradient to C, average, add noise
                 // with std sigma*C/B (per-record sensitivity C/B)
};

OptimizerVariant optimizer_variant_from_string(const std::string& s);
std::string to_string(OptimizerVariant v);
ClippingMode clipping_mode_from_string(const std::string& s);
std::string to_string(ClippingMode m);

struct DpOptimizerConfig {
    OptimizerVariant variant = OptimizerVariant::dp_adamw;
    double learning_rate = 5e-5;
    double weight_decay = 0.01;   // decoupled; ignored for dp_sgd, forced 0 for dp_adam
    double beta1 = 0.9;
    double beta2 = 0.999;
    double clip_norm = 0.1;       // C
    double noise_multiplier = 0.0;  // sigma
    double denom_epsilon = 1e-8;
    ClippingMode clipping_mode = ClippingMode::batch;
    bool pure_noise = false;      // epsilon = 0 sentinel: drop the signal, keep the noise

    void validate() const;
};

struct OptimizerState {
    GradSet m;   // first moment
    GradSet v;   // second moment (raw, before noise correction)
    std::int64_t t = 0;  // completed steps; the first update uses t = 1

    static OptimizerState init(const ParamSet& params);
};

// g / max(1, ||g||_2 / C): global-norm clipping. ||g|| = 0 returns g unchanged.
GradSet clip_gradient(const GradSet& g, double clip_norm);

// Adds i.i.d. Gaussian noise with per-coordinate std sigma*C to an
// already-clipped gradient. Deterministic for a fixed rng state.
GradSet privatize_gradient(const GradSet& g_clipped, double sigma, double clip_norm, Rng& rng);

// [v - (1 - beta2^t) * sigma^2 * C^2]_+ : removes the expected noise
// contribution from the second moment, clamped at zero elementwise.
GradSet corrected_second_moment(const GradSet& v, std::int64_t t, double beta2, double sigma,
                                double clip_norm);

struct StepResult {
    ParamSet params;
    OptimizerState state;
    bool clip_active = false;      // any clipping happened this step
    double grad_norm = 0.0;        // pre-clip norm (batch mode: the mean gradient)
};

// One optimizer step on the batch-mean gradient (ClippingMode::batch).
StepResult step(const ParamSet& params, const GradSet& grads, const OptimizerState& state,
                const DpOptimizerConfig& config, Rng& rng);

// Per-sample variant: clips each example's gradient, averages, and adds
// noise with std sigma*C/B before the shared moment/update logic.
StepResult step_per_sample(const ParamSet& params, const std::vector<GradSet>& sample_grads,
                           const OptimizerState& state, const DpOptimizerConfig& config, Rng& rng);

}  // namespace dpalign
