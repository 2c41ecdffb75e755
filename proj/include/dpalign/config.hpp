#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dpalign/analysis.hpp"
#include "dpalign/data.hpp"
#include "dpalign/pipeline.hpp"

namespace dpalign {

// Carries every violation found while loading a run configuration, each
// prefixed with the offending key path.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

  private:
    static std::string join(const std::vector<std::string>& v);
    std::vector<std::string> violations_;
};

struct DataConfig {
    std::optional<std::string> path;  // load an existing JSONL dataset
    std::size_t n = 512;              // or generate one
    int vocab = 16;
    int prompt_len = 4;
    int response_len = 6;
    std::uint64_t seed = 7;
};

// One JSON document configuring a whole run. Defaults mirror the reference
// training configuration (batch 256 scaled to 32 at desk scale, lr 5e-5,
// epochs 3, C = 0.1, weight decay 0.01, betas 0.9/0.999, gamma 0.99,
// lambda 0.95, clip_eps 0.2, delta 1e-5). Unknown keys are rejected.
struct RunConfig {
    PipelineKind pipeline = PipelineKind::dpo_pipeline;
    std::uint64_t seed = 1;
    DataConfig data;
    ModelSettings model;          // vocab_size is taken from the dataset
    DpOptimizerConfig optimizer;  // noise_multiplier is derived from privacy
    PrivacyBudget privacy;
    int epochs = 3;
    int batch_size = 32;
    std::vector<double> partition_fractions;  // default [0.5,0.5] / [0.4,0.3,0.3]
    PpoSettings ppo;
    EvalSettings eval;

    static RunConfig from_json(const nlohmann::json& doc);
    static RunConfig from_file(const std::string& path);

    // Loads data.path or generates the synthetic dataset.
    AlignmentDataset load_or_generate_dataset() const;

    // Builds the pipeline spec, calibrating each phase's noise multiplier
    // from the privacy budget via the accountant.
    PipelineSpec to_pipeline_spec(int dataset_vocab) const;
};

}  // namespace dpalign
