#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dpalign/losses.hpp"
#include "dpalign/models.hpp"

namespace dpalign {

// Generation parameters of a synthetic dataset; enough to reconstruct the
// latent ground-truth reward for evaluation (never exposed to training).
struct DatasetMetadata {
    std::uint64_t seed = 0;
    int vocab_size = 16;
    int prompt_len = 4;
    int response_len = 6;
    std::string latent_reward = "token-affinity-v1";
};

struct AlignmentDataset {
    std::vector<PreferenceTriple> triples;
    DatasetMetadata metadata;
};

// Ordered disjoint index split of a dataset.
struct PhasePartition {
    std::vector<std::vector<std::size_t>> parts;

    // Throws unless parts are pairwise disjoint and jointly cover [0, n).
    void check_disjoint_exhaustive(std::size_t n) const;
};

// Latent scoring rule: mean per-token affinity of the response, with the
// affinity table drawn once from the generator seed. Prompts do not affect
// the score; an empty response scores 0.
using GroundTruthScorer = std::function<double(const TokenSeq& x, const TokenSeq& y)>;

std::vector<double> latent_affinity_table(const DatasetMetadata& meta);
GroundTruthScorer ground_truth_scorer(const DatasetMetadata& meta);

// Samples prompts and candidate-response pairs uniformly over [1, vocab),
// labels the higher-scoring candidate as chosen, regenerating exact ties.
AlignmentDataset generate_synthetic_preferences(std::size_t n, int vocab, std::uint64_t seed,
                                                int prompt_len = 4, int response_len = 6);

// More triples labeled by an existing dataset's latent reward, drawn from an
// independent stream; used as held-out evaluation sets.
std::vector<PreferenceTriple> sample_preference_triples(const DatasetMetadata& meta, std::size_t n,
                                                        std::uint64_t draw_seed);

// Held-out prompts from the same distribution, filtered against the
// dataset's training prompts.
std::vector<TokenSeq> held_out_prompts(const AlignmentDataset& dataset, std::size_t count,
                                       std::uint64_t seed);

// Deterministic shuffled split; sizes within +-1 of n * fraction. Fractions
// must be positive and sum to 1. A zero-sized part is an error.
PhasePartition partition_disjoint(const AlignmentDataset& dataset,
                                  const std::vector<double>& fractions, std::uint64_t seed);

// JSONL persistence: a metadata header line, then one
// {"prompt": [...], "chosen": [...], "rejected": [...]} object per line.
void save_jsonl(const std::string& path, const AlignmentDataset& dataset);
AlignmentDataset load_jsonl(const std::string& path);

}  // namespace dpalign
