#include "dpalign/optimizer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dpalign {

OptimizerVariant optimizer_variant_from_string(const std::string& s) {
    if (s == "dp_sgd") return OptimizerVariant::dp_sgd;
    if (s == "dp_adam") return OptimizerVariant::dp_adam;
    if (s == "dp_adamw") return OptimizerVariant::dp_adamw;
    throw std::invalid_argument("unknown optimizer variant '" + s +
                                "' (expected dp_sgd, dp_adam or dp_adamw)");
}

std::string to_string(OptimizerVariant v) {
    switch (v) {
        case OptimizerVariant::dp_sgd: return "dp_sgd";
        case OptimizerVariant::dp_adam: return "dp_adam";
        case OptimizerVariant::dp_adamw: return "dp_adamw";
    }
    return "?";
}

ClippingMode clipping_mode_from_string(const std::string& s) {
    if (s == "batch") return ClippingMode::batch;
    if (s == "per_sample") return ClippingMode::per_sample;
    throw std::invalid_argument("unknown clipping mode '" + s + "' (expected batch or per_sample)");
}

std::string to_string(ClippingMode m) {
    return m == ClippingMode::batch ? "batch" : "per_sample";
}

void DpOptimizerConfig::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("optimizer: learning_rate must be > 0");
    if (weight_decay < 0.0) throw std::invalid_argument("optimizer: weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("optimizer: beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("optimizer: beta2 must be in [0,1)");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("optimizer: clip_norm must be > 0");
    if (noise_multiplier < 0.0) throw std::invalid_argument("optimizer: noise_multiplier must be >= 0");
    if (!(denom_epsilon > 0.0)) throw std::invalid_argument("optimizer: denom_epsilon must be > 0");
}

OptimizerState OptimizerState::init(const ParamSet& params) {
    OptimizerState s;
    s.m = GradSet::zeros_like(params);
    s.v = GradSet::zeros_like(params);
    s.t = 0;
    return s;
}

GradSet clip_gradient(const GradSet& g, double clip_norm) {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_gradient: clip_norm must be > 0");
    for (const auto& [name, t] : g) {
        if (!t.all_finite()) {
            throw std::runtime_error("clip_gradient: non-finite gradient for '" + name + "'");
        }
    }
    const double norm = global_l2_norm(g);
    const double divisor = std::max(1.0, norm / clip_norm);
    if (divisor == 1.0) return g;
    GradSet out = g;
    const double inv = 1.0 / divisor;
    for (auto& [name, t] : out) {
        for (double& v : t.values) v *= inv;
    }
    return out;
}

GradSet privatize_gradient(const GradSet& g_clipped, double sigma, double clip_norm, Rng& rng) {
    if (sigma < 0.0) throw std::invalid_argument("privatize_gradient: sigma must be >= 0");
    if (sigma == 0.0) return g_clipped;
    const double stddev = sigma * clip_norm;
    GradSet out = g_clipped;
    for (auto& [name, t] : out) {
        for (double& v : t.values) v += rng.gaussian(0.0, stddev);
    }
    return out;
}

GradSet corrected_second_moment(const GradSet& v, std::int64_t t, double beta2, double sigma,
                                double clip_norm) {
    if (t < 1) throw std::invalid_argument("corrected_second_moment: t must be >= 1");
    const double correction =
        (1.0 - std::pow(beta2, static_cast<double>(t))) * sigma * sigma * clip_norm * clip_norm;
    GradSet out = v;
    for (auto& [name, tensor] : out) {
        for (double& x : tensor.values) x = std::max(x - correction, 0.0);
    }
    return out;
}

namespace {

// Shared core: applies the moment updates and parameter rule to an already
// privatized gradient. noise_sigma_effective is the per-coordinate noise std
// divided by C (i.e. sigma for batch mode, sigma/B for per-sample mode).
StepResult apply_update(const ParamSet& params, const GradSet& g_tilde, const OptimizerState& state,
                        const DpOptimizerConfig& config, bool clip_active, double grad_norm,
                        double noise_sigma_effective) {
    if (state.t == std::numeric_limits<std::int64_t>::max()) {
        throw std::overflow_error("optimizer step: step counter overflow");
    }
    const std::int64_t t = state.t + 1;

    StepResult result;
    result.clip_active = clip_active;
    result.grad_norm = grad_norm;
    result.state.t = t;

    if (config.variant == OptimizerVariant::dp_sgd) {
        // plain noisy step, no moments
        result.state.m = state.m;
        result.state.v = state.v;
        ParamSet next = params;
        for (auto& [name, theta] : next) {
            const Tensor& g = g_tilde.at(name);
            for (std::size_t i = 0; i < theta.numel(); ++i) {
                theta.values[i] -= config.learning_rate * g.values[i];
            }
            if (!theta.all_finite()) {
                throw std::runtime_error("dp_sgd step: non-finite update for parameter '" + name + "'");
            }
        }
        result.params = std::move(next);
        return result;
    }

    const double lambda =
        config.variant == OptimizerVariant::dp_adam ? 0.0 : config.weight_decay;
    const double b1 = config.beta1;
    const double b2 = config.beta2;
    const double b1t = std::pow(b1, static_cast<double>(t));
    const double b2t = std::pow(b2, static_cast<double>(t));
    const double bias_factor = std::sqrt(1.0 - b2t) / (1.0 - b1t);
    const double eta = config.learning_rate;
    const double correction =
        (1.0 - b2t) * noise_sigma_effective * noise_sigma_effective * config.clip_norm * config.clip_norm;

    GradSet m = state.m;
    GradSet v = state.v;
    ParamSet next = params;
    for (auto& [name, theta] : next) {
        const Tensor& g = g_tilde.at(name);
        Tensor& mt = m.at(name);
        Tensor& vt = v.at(name);
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            const double gi = g.values[i];
            mt.values[i] = b1 * mt.values[i] + (1.0 - b1) * gi;
            vt.values[i] = b2 * vt.values[i] + (1.0 - b2) * gi * gi;
            const double v_corr = std::max(vt.values[i] - correction, 0.0);
            const double update = eta * mt.values[i] / std::sqrt(v_corr + config.denom_epsilon) * bias_factor;
            theta.values[i] = (1.0 - lambda * eta) * theta.values[i] - update;
        }
        if (!theta.all_finite()) {
            throw std::runtime_error("optimizer step: non-finite update for parameter '" + name + "'");
        }
    }
    result.params = std::move(next);
    result.state.m = std::move(m);
    result.state.v = std::move(v);
    return result;
}

GradSet zeros_signal(const GradSet& like) { return GradSet::zeros_like(like); }

}  // namespace

StepResult step(const ParamSet& params, const GradSet& grads, const OptimizerState& state,
                const DpOptimizerConfig& config, Rng& rng) {
    config.validate();
    if (!params.same_structure(grads)) {
        throw std::invalid_argument("optimizer step: gradient structure does not match parameters");
    }
    if (!state.m.same_structure(params) || !state.v.same_structure(params)) {
        throw std::invalid_argument("optimizer step: state structure does not match parameters");
    }
    const double norm = global_l2_norm(grads);
    GradSet clipped = clip_gradient(grads, config.clip_norm);
    if (config.pure_noise) clipped = zeros_signal(clipped);
    GradSet g_tilde = privatize_gradient(clipped, config.noise_multiplier, config.clip_norm, rng);
    return apply_update(params, g_tilde, state, config, norm > config.clip_norm, norm,
                        config.noise_multiplier);
}

StepResult step_per_sample(const ParamSet& params, const std::vector<GradSet>& sample_grads,
                           const OptimizerState& state, const DpOptimizerConfig& config, Rng& rng) {
    config.validate();
    if (sample_grads.empty()) {
        throw std::invalid_argument("step_per_sample: need at least one sample gradient");
    }
    const double batch = static_cast<double>(sample_grads.size());
    GradSet mean = GradSet::zeros_like(params);
    bool any_clip = false;
    double max_norm = 0.0;
    for (const GradSet& g : sample_grads) {
        if (!params.same_structure(g)) {
            throw std::invalid_argument("step_per_sample: sample gradient structure mismatch");
        }
        const double norm = global_l2_norm(g);
        max_norm = std::max(max_norm, norm);
        any_clip = any_clip || norm > config.clip_norm;
        GradSet clipped = clip_gradient(g, config.clip_norm);
        for (auto& [name, t] : mean) {
            const Tensor& c = clipped.at(name);
            for (std::size_t i = 0; i < t.numel(); ++i) t.values[i] += c.values[i] / batch;
        }
    }
    if (config.pure_noise) mean = zeros_signal(mean);
    const double sigma_eff = config.noise_multiplier / batch;
    GradSet g_tilde = privatize_gradient(mean, sigma_eff, config.clip_norm, rng);
    return apply_update(params, g_tilde, state, config, any_clip, max_norm, sigma_eff);
}

}  // namespace dpalign
