#include "dpalign/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace dpalign {

using nlohmann::json;

std::string ConfigError::join(const std::vector<std::string>& v) {
    std::string out = "configuration invalid:";
    for (const std::string& s : v) out += "\n  - " + s;
    return out;
}

ConfigError::ConfigError(std::vector<std::string> violations)
    : std::runtime_error(join(violations)), violations_(std::move(violations)) {}

namespace {

// Small helper collecting violations while walking the document.
struct Walker {
    std::vector<std::string> errors;

    void unknown_keys(const json& obj, const std::string& path,
                      const std::set<std::string>& allowed) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (!allowed.count(it.key())) {
                errors.push_back(path + it.key() + ": unknown key");
            }
        }
    }

    template <typename T, typename Pred>
    void fetch(const json& obj, const std::string& path, const char* key, T& out, Pred pred,
               const char* what) {
        if (!obj.contains(key)) return;
        try {
            T v = obj.at(key).get<T>();
            if (!pred(v)) {
                errors.push_back(path + key + ": " + what);
                return;
            }
            out = v;
        } catch (const json::exception&) {
            errors.push_back(path + key + ": wrong type, " + what);
        }
    }

    template <typename T>
    void fetch_any(const json& obj, const std::string& path, const char* key, T& out) {
        fetch(obj, path, key, out, [](const T&) { return true; }, "invalid");
    }
};

}  // namespace

RunConfig RunConfig::from_json(const json& doc) {
    Walker w;
    RunConfig cfg;
    if (!doc.is_object()) throw ConfigError({"root: must be a JSON object"});
    w.unknown_keys(doc, "", {"pipeline", "seed", "data", "model", "optimizer", "privacy",
                             "training", "ppo", "evaluation"});

    if (doc.contains("pipeline")) {
        try {
            cfg.pipeline = pipeline_kind_from_string(doc.at("pipeline").get<std::string>());
        } catch (const std::exception& e) {
            w.errors.push_back(std::string("pipeline: ") + e.what());
        }
    }
    w.fetch(doc, "", "seed", cfg.seed, [](std::uint64_t) { return true; }, "must be an integer");

    if (doc.contains("data")) {
        const json& d = doc.at("data");
        w.unknown_keys(d, "data.", {"path", "n", "vocab", "prompt_len", "response_len", "seed"});
        if (d.contains("path")) {
            std::string p;
            w.fetch(d, "data.", "path", p, [](const std::string& s) { return !s.empty(); },
                    "must be a nonempty string");
            if (!p.empty()) cfg.data.path = p;
        }
        w.fetch(d, "data.", "n", cfg.data.n, [](std::size_t n) { return n >= 1; }, "must be >= 1");
        w.fetch(d, "data.", "vocab", cfg.data.vocab,
                [](int v) { return v >= 3 && v <= 64; }, "must be in [3, 64]");
        w.fetch(d, "data.", "prompt_len", cfg.data.prompt_len, [](int v) { return v >= 1; },
                "must be >= 1");
        w.fetch(d, "data.", "response_len", cfg.data.response_len, [](int v) { return v >= 1; },
                "must be >= 1");
        w.fetch_any(d, "data.", "seed", cfg.data.seed);
    }

    if (doc.contains("model")) {
        const json& m = doc.at("model");
        w.unknown_keys(m, "model.", {"embed_dim", "hidden_dim", "context_window"});
        w.fetch(m, "model.", "embed_dim", cfg.model.embed_dim, [](int v) { return v >= 1; },
                "must be >= 1");
        w.fetch(m, "model.", "hidden_dim", cfg.model.hidden_dim, [](int v) { return v >= 1; },
                "must be >= 1");
        w.fetch(m, "model.", "context_window", cfg.model.context_window,
                [](int v) { return v >= 1 && v <= 32; }, "must be in [1, 32]");
    }

    if (doc.contains("optimizer")) {
        const json& o = doc.at("optimizer");
        w.unknown_keys(o, "optimizer.",
                       {"variant", "learning_rate", "weight_decay", "beta1", "beta2", "clip_norm",
                        "denom_epsilon", "clipping_mode"});
        if (o.contains("variant")) {
            try {
                cfg.optimizer.variant = optimizer_variant_from_string(o.at("variant").get<std::string>());
            } catch (const std::exception& e) {
                w.errors.push_back(std::string("optimizer.variant: ") + e.what());
            }
        }
        if (o.contains("clipping_mode")) {
            try {
                cfg.optimizer.clipping_mode =
                    clipping_mode_from_string(o.at("clipping_mode").get<std::string>());
            } catch (const std::exception& e) {
                w.errors.push_back(std::string("optimizer.clipping_mode: ") + e.what());
            }
        }
        w.fetch(o, "optimizer.", "learning_rate", cfg.optimizer.learning_rate,
                [](double v) { return v > 0.0; }, "must be > 0");
        w.fetch(o, "optimizer.", "weight_decay", cfg.optimizer.weight_decay,
                [](double v) { return v >= 0.0; }, "must be >= 0");
        w.fetch(o, "optimizer.", "beta1", cfg.optimizer.beta1,
                [](double v) { return v >= 0.0 && v < 1.0; }, "must be in [0, 1)");
        w.fetch(o, "optimizer.", "beta2", cfg.optimizer.beta2,
                [](double v) { return v >= 0.0 && v < 1.0; }, "must be in [0, 1)");
        w.fetch(o, "optimizer.", "clip_norm", cfg.optimizer.clip_norm,
                [](double v) { return v > 0.0; }, "must be > 0");
        w.fetch(o, "optimizer.", "denom_epsilon", cfg.optimizer.denom_epsilon,
                [](double v) { return v > 0.0; }, "must be > 0");
    }

    if (doc.contains("privacy")) {
        const json& p = doc.at("privacy");
        w.unknown_keys(p, "privacy.", {"epsilon", "delta"});
        if (p.contains("epsilon")) {
            try {
                if (p.at("epsilon").is_string()) {
                    cfg.privacy.epsilon = epsilon_from_string(p.at("epsilon").get<std::string>());
                } else {
                    cfg.privacy.epsilon = p.at("epsilon").get<double>();
                    if (cfg.privacy.epsilon < 0.0) throw std::invalid_argument("negative");
                }
            } catch (const std::exception&) {
                w.errors.push_back("privacy.epsilon: must be a number >= 0, \"0\" or \"inf\"");
            }
        }
        w.fetch(p, "privacy.", "delta", cfg.privacy.delta,
                [](double v) { return v > 0.0 && v < 1.0; }, "must lie in (0, 1)");
    }

    if (doc.contains("training")) {
        const json& t = doc.at("training");
        w.unknown_keys(t, "training.", {"epochs", "batch_size", "partition_fractions"});
        w.fetch(t, "training.", "epochs", cfg.epochs, [](int v) { return v >= 1; }, "must be >= 1");
        w.fetch(t, "training.", "batch_size", cfg.batch_size, [](int v) { return v >= 1; },
                "must be >= 1");
        if (t.contains("partition_fractions")) {
            try {
                auto fr = t.at("partition_fractions").get<std::vector<double>>();
                double sum = 0.0;
                bool pos = !fr.empty();
                for (double f : fr) {
                    if (!(f > 0.0)) pos = false;
                    sum += f;
                }
                if (!pos || std::abs(sum - 1.0) > 1e-9) {
                    w.errors.push_back(
                        "training.partition_fractions: must be positive and sum to 1");
                } else {
                    cfg.partition_fractions = fr;
                }
            } catch (const json::exception&) {
                w.errors.push_back("training.partition_fractions: must be an array of numbers");
            }
        }
    }

    if (doc.contains("ppo")) {
        const json& p = doc.at("ppo");
        w.unknown_keys(p, "ppo.",
                       {"gamma", "lambda_gae", "clip_eps", "max_response_len", "temperature",
                        "rollout_batch"});
        w.fetch(p, "ppo.", "gamma", cfg.ppo.gamma,
                [](double v) { return v >= 0.0 && v <= 1.0; }, "must lie in [0, 1]");
        w.fetch(p, "ppo.", "lambda_gae", cfg.ppo.lambda_gae,
                [](double v) { return v >= 0.0 && v <= 1.0; }, "must lie in [0, 1]");
        w.fetch(p, "ppo.", "clip_eps", cfg.ppo.clip_eps,
                [](double v) { return v > 0.0 && v < 1.0; }, "must lie in (0, 1)");
        w.fetch(p, "ppo.", "max_response_len", cfg.ppo.max_response_len,
                [](int v) { return v >= 1; }, "must be >= 1");
        w.fetch(p, "ppo.", "temperature", cfg.ppo.temperature, [](double v) { return v > 0.0; },
                "must be > 0");
        w.fetch(p, "ppo.", "rollout_batch", cfg.ppo.rollout_batch, [](int v) { return v >= 1; },
                "must be >= 1");
    }

    if (doc.contains("evaluation")) {
        const json& e = doc.at("evaluation");
        w.unknown_keys(e, "evaluation.", {"n_prompts", "temperature", "max_response_len", "seed"});
        w.fetch(e, "evaluation.", "n_prompts", cfg.eval.n_prompts, [](int v) { return v >= 1; },
                "must be >= 1");
        w.fetch(e, "evaluation.", "temperature", cfg.eval.temperature,
                [](double v) { return v > 0.0; }, "must be > 0");
        w.fetch(e, "evaluation.", "max_response_len", cfg.eval.max_response_len,
                [](int v) { return v >= 1; }, "must be >= 1");
        w.fetch_any(e, "evaluation.", "seed", cfg.eval.seed);
    }

    if (cfg.partition_fractions.empty()) {
        cfg.partition_fractions = cfg.pipeline == PipelineKind::dpo_pipeline
                                      ? std::vector<double>{0.5, 0.5}
                                      : std::vector<double>{0.4, 0.3, 0.3};
    } else {
        const std::size_t expected = cfg.pipeline == PipelineKind::dpo_pipeline ? 2 : 3;
        if (cfg.partition_fractions.size() != expected) {
            w.errors.push_back("training.partition_fractions: need " + std::to_string(expected) +
                               " entries for the " + to_string(cfg.pipeline) + " pipeline");
        }
    }

    if (!w.errors.empty()) throw ConfigError(std::move(w.errors));
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError({"cannot open config file '" + path + "'"});
    json doc;
    try {
        is >> doc;
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("config is not valid JSON: ") + e.what()});
    }
    return from_json(doc);
}

AlignmentDataset RunConfig::load_or_generate_dataset() const {
    if (data.path) return load_jsonl(*data.path);
    return generate_synthetic_preferences(data.n, data.vocab, data.seed, data.prompt_len,
                                          data.response_len);
}

PipelineSpec RunConfig::to_pipeline_spec(int dataset_vocab) const {
    PipelineSpec spec;
    spec.kind = pipeline;
    spec.seed = seed;
    spec.model = model;
    spec.model.vocab_size = dataset_vocab;
    spec.ppo = ppo;
    spec.eval = eval;
    spec.partition_fractions = partition_fractions;

    const std::vector<LossKind> kinds =
        pipeline == PipelineKind::dpo_pipeline
            ? std::vector<LossKind>{LossKind::sft, LossKind::dpo}
            : std::vector<LossKind>{LossKind::sft, LossKind::rm, LossKind::ppo};
    const Calibration cal = calibrate(privacy, AccountantConfig{epochs});
    for (LossKind kind : kinds) {
        PhaseSpec phase;
        phase.loss_kind = kind;
        phase.epochs = epochs;
        phase.batch_size = batch_size;
        phase.budget = privacy;  // each phase gets the full budget (disjoint parts)
        phase.optimizer = optimizer;
        phase.optimizer.noise_multiplier = cal.sigma;
        phase.optimizer.pure_noise = cal.pure_noise;
        spec.phases.push_back(std::move(phase));
    }
    spec.validate();
    return spec;
}

}  // namespace dpalign
