#include "dpalign/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dpalign {

using nlohmann::json;

void PhasePartition::check_disjoint_exhaustive(std::size_t n) const {
    std::vector<char> seen(n, 0);
    std::size_t total = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        for (std::size_t idx : parts[p]) {
            if (idx >= n) {
                throw std::logic_error("partition: index " + std::to_string(idx) + " out of range");
            }
            if (seen[idx]) {
                throw std::logic_error("partition: index " + std::to_string(idx) +
                                       " appears in more than one part");
            }
            seen[idx] = 1;
            ++total;
        }
    }
    if (total != n) {
        throw std::logic_error("partition: covers " + std::to_string(total) + " of " +
                               std::to_string(n) + " indices");
    }
}

std::vector<double> latent_affinity_table(const DatasetMetadata& meta) {
    Rng rng(Rng::mix(meta.seed, 0xaff17ab1eULL));
    std::vector<double> table(static_cast<std::size_t>(meta.vocab_size), 0.0);
    // token 0 is the end marker and never appears in data; score it neutral
    for (int v = 1; v < meta.vocab_size; ++v) {
        table[static_cast<std::size_t>(v)] = rng.uniform(-1.0, 1.0);
    }
    return table;
}

GroundTruthScorer ground_truth_scorer(const DatasetMetadata& meta) {
    auto table = latent_affinity_table(meta);
    return [table](const TokenSeq& /*x*/, const TokenSeq& y) {
        if (y.empty()) return 0.0;
        double sum = 0.0;
        for (Token t : y) {
            if (t < 0 || t >= static_cast<Token>(table.size())) {
                throw std::invalid_argument("ground_truth_scorer: token out of range");
            }
            sum += table[static_cast<std::size_t>(t)];
        }
        return sum / static_cast<double>(y.size());
    };
}

namespace {

TokenSeq random_tokens(Rng& rng, int len, int vocab) {
    TokenSeq out;
    out.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
        out.push_back(static_cast<Token>(rng.uniform_int(1, vocab - 1)));
    }
    return out;
}

}  // namespace

std::vector<PreferenceTriple> sample_preference_triples(const DatasetMetadata& meta, std::size_t n,
                                                        std::uint64_t draw_seed) {
    if (n < 1) throw std::invalid_argument("sample_preference_triples: n must be >= 1");
    GroundTruthScorer score = ground_truth_scorer(meta);
    Rng rng(Rng::mix(draw_seed, 0xda7a6e3dULL));
    std::vector<PreferenceTriple> triples;
    triples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        TokenSeq prompt = random_tokens(rng, meta.prompt_len, meta.vocab_size);
        TokenSeq a, b;
        double ra = 0.0, rb = 0.0;
        do {
            a = random_tokens(rng, meta.response_len, meta.vocab_size);
            b = random_tokens(rng, meta.response_len, meta.vocab_size);
            ra = score(prompt, a);
            rb = score(prompt, b);
        } while (ra == rb);  // exact ties regenerate the candidate pair
        if (ra >= rb) {
            triples.push_back({std::move(prompt), std::move(a), std::move(b)});
        } else {
            triples.push_back({std::move(prompt), std::move(b), std::move(a)});
        }
    }
    return triples;
}

AlignmentDataset generate_synthetic_preferences(std::size_t n, int vocab, std::uint64_t seed,
                                                int prompt_len, int response_len) {
    if (n < 1) throw std::invalid_argument("generate_synthetic_preferences: n must be >= 1");
    if (vocab < 3 || vocab > 64) {
        throw std::invalid_argument("generate_synthetic_preferences: vocab must be in [3, 64]");
    }
    if (prompt_len < 1 || response_len < 1) {
        throw std::invalid_argument("generate_synthetic_preferences: lengths must be >= 1");
    }
    AlignmentDataset ds;
    ds.metadata.seed = seed;
    ds.metadata.vocab_size = vocab;
    ds.metadata.prompt_len = prompt_len;
    ds.metadata.response_len = response_len;
    ds.triples = sample_preference_triples(ds.metadata, n, seed);
    return ds;
}

std::vector<TokenSeq> held_out_prompts(const AlignmentDataset& dataset, std::size_t count,
                                       std::uint64_t seed) {
    std::set<TokenSeq> train_prompts;
    for (const PreferenceTriple& t : dataset.triples) train_prompts.insert(t.prompt);
    Rng rng(Rng::mix(seed, 0xe7a1ULL));
    std::vector<TokenSeq> out;
    std::set<TokenSeq> used;
    std::size_t attempts = 0;
    while (out.size() < count) {
        if (++attempts > count * 1000) {
            throw std::runtime_error("held_out_prompts: prompt space too small to stay disjoint");
        }
        TokenSeq p = random_tokens(rng, dataset.metadata.prompt_len, dataset.metadata.vocab_size);
        if (train_prompts.count(p) || used.count(p)) continue;
        used.insert(p);
        out.push_back(std::move(p));
    }
    return out;
}

PhasePartition partition_disjoint(const AlignmentDataset& dataset,
                                  const std::vector<double>& fractions, std::uint64_t seed) {
    if (fractions.empty()) throw std::invalid_argument("partition: need at least one fraction");
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw std::invalid_argument("partition: fractions must be positive");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("partition: fractions must sum to 1");
    }
    const std::size_t n = dataset.triples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(Rng::mix(seed, 0x9a271710ULL));
    rng.shuffle(order.begin(), order.end());

    // largest-remainder apportionment keeps every size within +-1 of n*f
    std::vector<std::size_t> sizes(fractions.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        const double exact = fractions[i] * static_cast<double>(n);
        sizes[i] = static_cast<std::size_t>(std::floor(exact));
        assigned += sizes[i];
        remainders.push_back({exact - std::floor(exact), i});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
        sizes[remainders[k % remainders.size()].second] += 1;
    }

    PhasePartition partition;
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (sizes[i] == 0) {
            throw std::invalid_argument("partition: part " + std::to_string(i + 1) +
                                        " would be empty (n too small for the fractions)");
        }
        partition.parts.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                     order.begin() + static_cast<std::ptrdiff_t>(cursor + sizes[i]));
        cursor += sizes[i];
    }
    partition.check_disjoint_exhaustive(n);
    return partition;
}

namespace {

json tokens_to_json(const TokenSeq& seq) {
    json arr = json::array();
    for (Token t : seq) arr.push_back(t);
    return arr;
}

TokenSeq tokens_from_json(const json& arr, const char* field, std::size_t line_no) {
    if (!arr.is_array() || arr.empty()) {
        throw std::runtime_error("jsonl line " + std::to_string(line_no) + ": field '" + field +
                                 "' must be a nonempty token array");
    }
    TokenSeq out;
    out.reserve(arr.size());
    for (const json& v : arr) {
        if (!v.is_number_integer()) {
            throw std::runtime_error("jsonl line " + std::to_string(line_no) + ": field '" + field +
                                     "' contains a non-integer token");
        }
        out.push_back(v.get<Token>());
    }
    return out;
}

}  // namespace

void save_jsonl(const std::string& path, const AlignmentDataset& dataset) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_jsonl: cannot open '" + path + "'");
    json header{{"format", "dpalign-preferences-v1"},
                {"seed", dataset.metadata.seed},
                {"vocab_size", dataset.metadata.vocab_size},
                {"prompt_len", dataset.metadata.prompt_len},
                {"response_len", dataset.metadata.response_len},
                {"latent_reward", dataset.metadata.latent_reward},
                {"count", dataset.triples.size()}};
    os << header.dump() << "\n";
    for (const PreferenceTriple& t : dataset.triples) {
        json row{{"prompt", tokens_to_json(t.prompt)},
                 {"chosen", tokens_to_json(t.chosen)},
                 {"rejected", tokens_to_json(t.rejected)}};
        os << row.dump() << "\n";
    }
    if (!os) throw std::runtime_error("save_jsonl: write failed for '" + path + "'");
}

AlignmentDataset load_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_jsonl: cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    AlignmentDataset ds;
    bool have_header = false;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                                     " is not valid JSON: " + e.what());
        }
        if (!have_header) {
            if (!obj.is_object() || obj.value("format", "") != "dpalign-preferences-v1") {
                throw std::runtime_error("load_jsonl: line 1 must be a dpalign-preferences-v1 header");
            }
            ds.metadata.seed = obj.value("seed", 0ULL);
            ds.metadata.vocab_size = obj.value("vocab_size", 0);
            ds.metadata.prompt_len = obj.value("prompt_len", 0);
            ds.metadata.response_len = obj.value("response_len", 0);
            ds.metadata.latent_reward = obj.value("latent_reward", "");
            have_header = true;
            continue;
        }
        if (!obj.is_object() || !obj.contains("prompt") || !obj.contains("chosen") ||
            !obj.contains("rejected")) {
            throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                                     " is missing prompt/chosen/rejected");
        }
        PreferenceTriple t;
        t.prompt = tokens_from_json(obj["prompt"], "prompt", line_no);
        t.chosen = tokens_from_json(obj["chosen"], "chosen", line_no);
        t.rejected = tokens_from_json(obj["rejected"], "rejected", line_no);
        ds.triples.push_back(std::move(t));
    }
    if (!have_header) throw std::runtime_error("load_jsonl: '" + path + "' is empty");
    if (ds.triples.empty()) {
        throw std::runtime_error("load_jsonl: '" + path + "' contains no preference triples");
    }
    return ds;
}

}  // namespace dpalign
