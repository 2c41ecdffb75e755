#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpalign/autograd.hpp"
#include "dpalign/rng.hpp"
#include "dpalign/tensor.hpp"

namespace dpalign {

using Token = int;
using TokenSeq = std::vector<Token>;

// Token 0 is reserved as the end-of-sequence marker; datasets draw their
// tokens from [1, vocab).
inline constexpr Token kEndToken = 0;

struct PromptResponse {
    TokenSeq prompt;
    TokenSeq response;
};

// Autoregressive token policy, deliberately small: the next-token logits are
// an MLP over (mean of prefix embeddings, embedding of the previous token).
// Parameters: embed [V,d], w1_prefix [d,h], w1_last [d,h], b1 [h],
// w2 [h,V], b2 [V].
struct TinyPolicy {
    int vocab_size = 16;
    int embed_dim = 12;
    int hidden_dim = 24;
    int context_window = 32;
    ParamSet params;

    static TinyPolicy init(int vocab_size, int embed_dim, int hidden_dim, int context_window,
                           std::uint64_t seed);
};

// Scoring net for (prompt, response) pairs: mean-pooled token embeddings,
// one tanh hidden layer, scalar head. Also reused as the PPO value net
// (pooled over the state prefix instead of the full pair).
struct RewardNet {
    int vocab_size = 16;
    int embed_dim = 12;
    int hidden_dim = 24;
    ParamSet params;

    static RewardNet init(int vocab_size, int embed_dim, int hidden_dim, std::uint64_t seed);
};

using ValueNet = RewardNet;

// --- graph builders ------------------------------------------------------
// All builders read parameters from `vars` using `prefix` + canonical names,
// so several models can share one tape (e.g. policy + value head in PPO).

// Sum of response-token conditional log-probs per sequence: shape [S, 1].
Var policy_sequence_logprobs(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                             const std::vector<PromptResponse>& batch,
                             const std::string& prefix = "");

// Per response position log p(target | prefix), flattened over the batch: [P].
// Rows are ordered sequence-major, position-minor.
Var policy_position_logprobs(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                             const std::vector<PromptResponse>& batch,
                             const std::string& prefix = "");

// Reward scores per (prompt, response) pair: [S, 1].
Var reward_scores(Tape& tape, const VarMap& vars, const RewardNet& net,
                  const std::vector<PromptResponse>& batch, const std::string& prefix = "");

// Value estimates for every response position's state prefix (x, y_<i): [P].
// Row order matches policy_position_logprobs.
Var value_of_prefixes(Tape& tape, const VarMap& vars, const ValueNet& net,
                      const std::vector<PromptResponse>& batch, const std::string& prefix = "");

// --- numeric API ----------------------------------------------------------

// Sum_i log p(y_i | x, y_<i). Empty response returns 0. Throws when
// len(x) + len(y) exceeds the context window.
double sequence_logprob(const TinyPolicy& policy, const TokenSeq& x, const TokenSeq& y);

// Next-token distribution given a prefix, softened by temperature.
std::vector<double> next_token_distribution(const TinyPolicy& policy, const TokenSeq& prefix,
                                            double temperature);

// Autoregressive sampling; stops at kEndToken or max_len. temperature -> 0
// approaches greedy argmax decoding.
TokenSeq sample_response(const TinyPolicy& policy, const TokenSeq& x, int max_len,
                         double temperature, Rng& rng);

double reward_score(const RewardNet& net, const TokenSeq& x, const TokenSeq& y);

// --- checkpoints ----------------------------------------------------------
// Flat binary serialization of named tensors with a format-version header;
// byte-stable for identical parameters.

void save_checkpoint(const std::string& path, const ParamSet& params, const std::string& meta_json);
std::pair<ParamSet, std::string> load_checkpoint(const std::string& path);

void save_policy(const std::string& path, const TinyPolicy& policy);
TinyPolicy load_policy(const std::string& path);

}  // namespace dpalign
