#include "dpalign/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dpalign {

namespace {

Tensor uniform_init(const Shape& shape, double bound, Rng& rng) {
    Tensor t = Tensor::zeros(shape);
    for (double& v : t.values) v = rng.uniform(-bound, bound);
    return t;
}

void check_tokens(const char* who, const TokenSeq& seq, int vocab) {
    for (Token tok : seq) {
        if (tok < 0 || tok >= vocab) {
            throw std::invalid_argument(std::string(who) + ": token " + std::to_string(tok) +
                                        " outside vocabulary [0, " + std::to_string(vocab) + ")");
        }
    }
}

// Flattened response-position rows for a batch of sequences. Each row i of
// prefix_weights holds count(v in prefix)/len(prefix) over the vocabulary,
// last_onehot marks the immediately preceding token, and target is the token
// the policy must predict at that position.
struct PositionRows {
    Tensor prefix_weights;        // [P, V]
    Tensor last_onehot;           // [P, V]
    std::vector<std::size_t> target;      // [P]
    std::vector<std::size_t> seq_of_row;  // [P]
    std::size_t num_seqs = 0;
};

PositionRows build_position_rows(int vocab, int context_window,
                                 const std::vector<PromptResponse>& batch) {
    std::size_t total = 0;
    for (const PromptResponse& pr : batch) {
        if (static_cast<int>(pr.prompt.size() + pr.response.size()) > context_window) {
            throw std::invalid_argument("sequence length " +
                                        std::to_string(pr.prompt.size() + pr.response.size()) +
                                        " exceeds context window " + std::to_string(context_window));
        }
        check_tokens("policy batch", pr.prompt, vocab);
        check_tokens("policy batch", pr.response, vocab);
        total += pr.response.size();
    }
    PositionRows rows;
    rows.num_seqs = batch.size();
    const std::size_t v = static_cast<std::size_t>(vocab);
    rows.prefix_weights = Tensor::zeros({total, v});
    rows.last_onehot = Tensor::zeros({total, v});
    rows.target.reserve(total);
    rows.seq_of_row.reserve(total);

    std::size_t row = 0;
    std::vector<double> counts(v, 0.0);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const PromptResponse& pr = batch[s];
        std::fill(counts.begin(), counts.end(), 0.0);
        for (Token tok : pr.prompt) counts[static_cast<std::size_t>(tok)] += 1.0;
        std::size_t prefix_len = pr.prompt.size();
        Token last = pr.prompt.empty() ? -1 : pr.prompt.back();
        for (std::size_t i = 0; i < pr.response.size(); ++i) {
            if (prefix_len > 0) {
                const double inv = 1.0 / static_cast<double>(prefix_len);
                for (std::size_t c = 0; c < v; ++c) {
                    rows.prefix_weights.values[row * v + c] = counts[c] * inv;
                }
                rows.last_onehot.values[row * v + static_cast<std::size_t>(last)] = 1.0;
            }
            rows.target.push_back(static_cast<std::size_t>(pr.response[i]));
            rows.seq_of_row.push_back(s);
            counts[static_cast<std::size_t>(pr.response[i])] += 1.0;
            last = pr.response[i];
            ++prefix_len;
            ++row;
        }
    }
    return rows;
}

Var policy_logits(Tape& tape, const VarMap& vars, const PositionRows& rows,
                  const std::string& prefix) {
    Var embed = vars.at(prefix + "embed");
    Var w1p = vars.at(prefix + "w1_prefix");
    Var w1l = vars.at(prefix + "w1_last");
    Var b1 = vars.at(prefix + "b1");
    Var w2 = vars.at(prefix + "w2");
    Var b2 = vars.at(prefix + "b2");

    Var mw = tape.constant(rows.prefix_weights);
    Var lw = tape.constant(rows.last_onehot);
    Var prefix_emb = matmul(mw, embed);  // [P, d]
    Var last_emb = matmul(lw, embed);    // [P, d]
    Var hidden = tanh_act(add_rowvec(matmul(prefix_emb, w1p) + matmul(last_emb, w1l), b1));
    return add_rowvec(matmul(hidden, w2), b2);  // [P, V]
}

Var picked_logprobs(Var logits, const PositionRows& rows, int vocab) {
    Var logp = log_softmax_rows(logits);  // [P, V]
    std::vector<std::size_t> flat;
    flat.reserve(rows.target.size());
    for (std::size_t i = 0; i < rows.target.size(); ++i) {
        flat.push_back(i * static_cast<std::size_t>(vocab) + rows.target[i]);
    }
    return gather(logp, flat, Shape{rows.target.size()});  // [P]
}

// 0/1 segment matrix mapping positions to their sequence: [S, P].
Tensor segment_matrix(const PositionRows& rows) {
    Tensor seg = Tensor::zeros({rows.num_seqs, rows.seq_of_row.size()});
    for (std::size_t p = 0; p < rows.seq_of_row.size(); ++p) {
        seg.values[rows.seq_of_row[p] * rows.seq_of_row.size() + p] = 1.0;
    }
    return seg;
}

}  // namespace

TinyPolicy TinyPolicy::init(int vocab_size, int embed_dim, int hidden_dim, int context_window,
                            std::uint64_t seed) {
    if (vocab_size < 2 || vocab_size > 64) {
        throw std::invalid_argument("TinyPolicy: vocab_size must be in [2, 64]");
    }
    if (context_window < 1 || context_window > 32) {
        throw std::invalid_argument("TinyPolicy: context_window must be in [1, 32]");
    }
    if (embed_dim < 1 || hidden_dim < 1) {
        throw std::invalid_argument("TinyPolicy: dims must be positive");
    }
    TinyPolicy p;
    p.vocab_size = vocab_size;
    p.embed_dim = embed_dim;
    p.hidden_dim = hidden_dim;
    p.context_window = context_window;
    Rng rng(Rng::mix(seed, 0x706f6c69637901ULL));
    const std::size_t v = static_cast<std::size_t>(vocab_size);
    const std::size_t d = static_cast<std::size_t>(embed_dim);
    const std::size_t h = static_cast<std::size_t>(hidden_dim);
    p.params.insert("embed", uniform_init({v, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    p.params.insert("w1_prefix", uniform_init({d, h}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    p.params.insert("w1_last", uniform_init({d, h}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    p.params.insert("b1", Tensor::zeros({h}));
    p.params.insert("w2", uniform_init({h, v}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    p.params.insert("b2", Tensor::zeros({v}));
    return p;
}

RewardNet RewardNet::init(int vocab_size, int embed_dim, int hidden_dim, std::uint64_t seed) {
    if (vocab_size < 2 || vocab_size > 64) {
        throw std::invalid_argument("RewardNet: vocab_size must be in [2, 64]");
    }
    RewardNet n;
    n.vocab_size = vocab_size;
    n.embed_dim = embed_dim;
    n.hidden_dim = hidden_dim;
    Rng rng(Rng::mix(seed, 0x7265776172640aULL));
    const std::size_t v = static_cast<std::size_t>(vocab_size);
    const std::size_t d = static_cast<std::size_t>(embed_dim);
    const std::size_t h = static_cast<std::size_t>(hidden_dim);
    n.params.insert("embed", uniform_init({v, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    n.params.insert("w1", uniform_init({d, h}, 1.0 / std::sqrt(static_cast<double>(d)), rng));
    n.params.insert("b1", Tensor::zeros({h}));
    n.params.insert("w2", uniform_init({h, 1}, 1.0 / std::sqrt(static_cast<double>(h)), rng));
    n.params.insert("b2", Tensor::zeros({1}));
    return n;
}

Var policy_sequence_logprobs(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                             const std::vector<PromptResponse>& batch, const std::string& prefix) {
    PositionRows rows = build_position_rows(policy.vocab_size, policy.context_window, batch);
    Var logits = policy_logits(tape, vars, rows, prefix);
    Var picked = picked_logprobs(logits, rows, policy.vocab_size);
    Var seg = tape.constant(segment_matrix(rows));
    return matmul(seg, reshape(picked, {rows.target.size(), 1}));  // [S, 1]
}

Var policy_position_logprobs(Tape& tape, const VarMap& vars, const TinyPolicy& policy,
                             const std::vector<PromptResponse>& batch, const std::string& prefix) {
    PositionRows rows = build_position_rows(policy.vocab_size, policy.context_window, batch);
    Var logits = policy_logits(tape, vars, rows, prefix);
    return picked_logprobs(logits, rows, policy.vocab_size);
}

namespace {

// Mean-pooling weight rows over whole (prompt, response) pairs: [S, V].
Tensor pair_pool_matrix(int vocab, const std::vector<PromptResponse>& batch) {
    const std::size_t v = static_cast<std::size_t>(vocab);
    Tensor pool = Tensor::zeros({batch.size(), v});
    for (std::size_t s = 0; s < batch.size(); ++s) {
        const PromptResponse& pr = batch[s];
        check_tokens("reward batch", pr.prompt, vocab);
        check_tokens("reward batch", pr.response, vocab);
        const std::size_t n = pr.prompt.size() + pr.response.size();
        if (n == 0) continue;
        const double inv = 1.0 / static_cast<double>(n);
        for (Token tok : pr.prompt) pool.values[s * v + static_cast<std::size_t>(tok)] += inv;
        for (Token tok : pr.response) pool.values[s * v + static_cast<std::size_t>(tok)] += inv;
    }
    return pool;
}

Var scalar_head(Tape& tape, const VarMap& vars, Tensor pooling, const std::string& prefix) {
    Var embed = vars.at(prefix + "embed");
    Var w1 = vars.at(prefix + "w1");
    Var b1 = vars.at(prefix + "b1");
    Var w2 = vars.at(prefix + "w2");
    Var b2 = vars.at(prefix + "b2");
    Var pooled = matmul(tape.constant(std::move(pooling)), embed);  // [S, d]
    Var hidden = tanh_act(add_rowvec(matmul(pooled, w1), b1));      // [S, h]
    return add_rowvec(matmul(hidden, w2), b2);                      // [S, 1]
}

}  // namespace

Var reward_scores(Tape& tape, const VarMap& vars, const RewardNet& net,
                  const std::vector<PromptResponse>& batch, const std::string& prefix) {
    return scalar_head(tape, vars, pair_pool_matrix(net.vocab_size, batch), prefix);
}

Var value_of_prefixes(Tape& tape, const VarMap& vars, const ValueNet& net,
                      const std::vector<PromptResponse>& batch, const std::string& prefix) {
    // no context limit here: rollout sequences were already length-checked
    // against the policy's window when they were produced
    PositionRows rows = build_position_rows(net.vocab_size, 1 << 20, batch);
    Var values = scalar_head(tape, vars, rows.prefix_weights, prefix);  // [P, 1]
    return reshape(values, {rows.target.size()});
}

double sequence_logprob(const TinyPolicy& policy, const TokenSeq& x, const TokenSeq& y) {
    if (y.empty()) {
        check_tokens("sequence_logprob", x, policy.vocab_size);
        return 0.0;
    }
    Tape tape;
    VarMap vars;
    for (const auto& [name, t] : policy.params) vars.emplace(name, tape.leaf(t));
    Var lp = policy_sequence_logprobs(tape, vars, policy, {{x, y}});
    return tape.value(lp).values[0];
}

std::vector<double> next_token_distribution(const TinyPolicy& policy, const TokenSeq& prefix,
                                            double temperature) {
    if (!(temperature > 0.0)) {
        throw std::invalid_argument("next_token_distribution: temperature must be > 0");
    }
    if (static_cast<int>(prefix.size()) + 1 > policy.context_window) {
        throw std::invalid_argument("next_token_distribution: context window exceeded");
    }
    Tape tape;
    VarMap vars;
    for (const auto& [name, t] : policy.params) vars.emplace(name, tape.leaf(t));
    // One dummy target position; only the logits matter here.
    PositionRows rows = build_position_rows(policy.vocab_size, policy.context_window,
                                            {{prefix, TokenSeq{0}}});
    Var logits = policy_logits(tape, vars, rows, "");
    const Tensor& lv = tape.value(logits);
    // stable tempered softmax
    std::vector<double> probs(lv.values.begin(), lv.values.end());
    double mx = probs[0];
    for (double p : probs) mx = std::max(mx, p);
    double z = 0.0;
    for (double& p : probs) {
        p = std::exp((p - mx) / temperature);
        z += p;
    }
    for (double& p : probs) p /= z;
    return probs;
}

TokenSeq sample_response(const TinyPolicy& policy, const TokenSeq& x, int max_len,
                         double temperature, Rng& rng) {
    if (!(temperature > 0.0)) throw std::invalid_argument("sample_response: temperature must be > 0");
    TokenSeq prefix = x;
    TokenSeq out;
    for (int i = 0; i < max_len; ++i) {
        if (static_cast<int>(prefix.size()) + 1 > policy.context_window) break;
        std::vector<double> probs = next_token_distribution(policy, prefix, temperature);
        const double u = rng.uniform();
        double acc = 0.0;
        Token tok = policy.vocab_size - 1;
        for (int v = 0; v < policy.vocab_size; ++v) {
            acc += probs[static_cast<std::size_t>(v)];
            if (u < acc) {
                tok = v;
                break;
            }
        }
        if (tok == kEndToken) break;
        out.push_back(tok);
        prefix.push_back(tok);
    }
    return out;
}

double reward_score(const RewardNet& net, const TokenSeq& x, const TokenSeq& y) {
    Tape tape;
    VarMap vars;
    for (const auto& [name, t] : net.params) vars.emplace(name, tape.leaf(t));
    Var s = reward_scores(tape, vars, net, {{x, y}});
    return tape.value(s).values[0];
}

// --- checkpoint format -----------------------------------------------------
// magic "DPA1" | u32 meta_len | meta bytes | u32 tensor_count |
// per tensor: u32 name_len, name, u32 ndim, u64 dims..., f64 values...
// All integers little-endian; doubles raw IEEE-754.

namespace {

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

constexpr char kMagic[4] = {'D', 'P', 'A', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const ParamSet& params,
                     const std::string& meta_json) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(meta_json.size()));
    os.write(meta_json.data(), static_cast<std::streamsize>(meta_json.size()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t d : t.shape) write_pod<std::uint64_t>(os, d);
        os.write(reinterpret_cast<const char*>(t.values.data()),
                 static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

std::pair<ParamSet, std::string> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    }
    const auto meta_len = read_pod<std::uint32_t>(is);
    std::string meta(meta_len, '\0');
    is.read(meta.data(), meta_len);
    if (!is) throw std::runtime_error("checkpoint: truncated metadata");
    const auto count = read_pod<std::uint32_t>(is);
    ParamSet params;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = read_pod<std::uint32_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto ndim = read_pod<std::uint32_t>(is);
        Shape shape(ndim);
        for (auto& d : shape) d = read_pod<std::uint64_t>(is);
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
        params.insert(name, std::move(t));
    }
    return {std::move(params), std::move(meta)};
}

void save_policy(const std::string& path, const TinyPolicy& policy) {
    nlohmann::json meta{{"kind", "tiny_policy"},
                        {"vocab_size", policy.vocab_size},
                        {"embed_dim", policy.embed_dim},
                        {"hidden_dim", policy.hidden_dim},
                        {"context_window", policy.context_window}};
    save_checkpoint(path, policy.params, meta.dump());
}

TinyPolicy load_policy(const std::string& path) {
    auto [params, meta_str] = load_checkpoint(path);
    nlohmann::json meta = nlohmann::json::parse(meta_str);
    if (meta.value("kind", "") != "tiny_policy") {
        throw std::runtime_error("checkpoint: '" + path + "' is not a policy checkpoint");
    }
    TinyPolicy p;
    p.vocab_size = meta.at("vocab_size").get<int>();
    p.embed_dim = meta.at("embed_dim").get<int>();
    p.hidden_dim = meta.at("hidden_dim").get<int>();
    p.context_window = meta.at("context_window").get<int>();
    p.params = std::move(params);
    return p;
}

}  // namespace dpalign
