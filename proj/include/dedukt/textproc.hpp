#pragma once
// Bag-of-words text processing: tokenization, vocabulary construction,
// sparse term-count vectors and the cosine similarity between them.
//
// The default tokenizer is segmenter-free: non-CJK word characters group
// into tokens, while each CJK character contributes a unigram and each
// adjacent CJK pair a bigram. Pre-segmented input is supported through
// ExternalTokens mode for corpora that ship their own word segmentation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dedukt/detail/digest.hpp"
#include "dedukt/detail/unicode.hpp"
#include "dedukt/error.hpp"

namespace dedukt {

enum class TokenizerMode { Whitespace, CjkGram, ExternalTokens };

struct TokenizerConfig {
    TokenizerMode mode = TokenizerMode::CjkGram;
    bool lowercase = true;
    bool strip_punctuation = true;
};

inline const char* tokenizer_mode_name(TokenizerMode m) {
    switch (m) {
        case TokenizerMode::Whitespace: return "whitespace";
        case TokenizerMode::CjkGram: return "cjk-gram";
        case TokenizerMode::ExternalTokens: return "external";
    }
    return "?";
}

inline std::optional<TokenizerMode> tokenizer_mode_from_name(std::string_view s) {
    if (s == "whitespace") return TokenizerMode::Whitespace;
    if (s == "cjk-gram") return TokenizerMode::CjkGram;
    if (s == "external") return TokenizerMode::ExternalTokens;
    return std::nullopt;
}

namespace detail {

// Shared scanner: splits text into word segments and CJK runs, applying the
// configured lowercasing and punctuation stripping.
template <typename EmitWord, typename EmitCjkRun>
void scan_text(std::string_view text, const TokenizerConfig& cfg, EmitWord&& emit_word,
               EmitCjkRun&& emit_run) {
    std::string word;
    std::vector<std::string> run; // one UTF-8 string per CJK character
    auto flush_word = [&] {
        if (!word.empty()) {
            emit_word(word);
            word.clear();
        }
    };
    auto flush_run = [&] {
        if (!run.empty()) {
            emit_run(run);
            run.clear();
        }
    };
    std::size_t i = 0;
    while (i < text.size()) {
        char32_t cp = decode_utf8(text, i);
        bool sep = is_space(cp) || (cfg.strip_punctuation && is_punct(cp));
        if (sep) {
            flush_word();
            flush_run();
            continue;
        }
        if (cfg.mode == TokenizerMode::CjkGram && is_cjk(cp)) {
            flush_word();
            std::string ch;
            encode_utf8(cp, ch);
            run.push_back(std::move(ch));
            continue;
        }
        flush_run();
        encode_utf8(cfg.lowercase ? to_lower(cp) : cp, word);
    }
    flush_word();
    flush_run();
}

} // namespace detail

// Tokenizes text deterministically. In CjkGram mode a run of k CJK
// characters yields its k unigrams followed by its k-1 adjacent bigrams.
// ExternalTokens mode has no text-derived tokenization; use the overload
// that supplies the pre-segmented tokens.
inline std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg) {
    if (cfg.mode == TokenizerMode::ExternalTokens) {
        throw Error(Errc::ExternalTokensMissing, "textproc",
                    "tokenizer mode is 'external' but no token array was supplied");
    }
    std::vector<std::string> out;
    detail::scan_text(
        text, cfg, [&](const std::string& w) { out.push_back(w); },
        [&](const std::vector<std::string>& run) {
            for (const auto& ch : run) out.push_back(ch);
            for (std::size_t i = 0; i + 1 < run.size(); ++i) out.push_back(run[i] + run[i + 1]);
        });
    return out;
}

inline std::vector<std::string> tokenize(std::string_view text, const TokenizerConfig& cfg,
                                         const std::vector<std::string>* external_tokens) {
    if (cfg.mode == TokenizerMode::ExternalTokens) {
        if (external_tokens == nullptr) {
            throw Error(Errc::ExternalTokensMissing, "textproc",
                        "tokenizer mode is 'external' but no token array was supplied");
        }
        return *external_tokens; // pre-segmented input passes through verbatim
    }
    return tokenize(text, cfg);
}

class Vocabulary {
public:
    Vocabulary() = default;

    // All tokens with total corpus frequency >= min_count, in first-occurrence order.
    static Vocabulary build(const std::vector<std::vector<std::string>>& docs, int min_count) {
        if (min_count < 1) {
            throw Error(Errc::InvalidParams, "textproc", "min_count must be >= 1");
        }
        Vocabulary v;
        v.min_count_ = min_count;
        std::unordered_map<std::string, std::int64_t> freq;
        std::vector<std::string> first_seen;
        for (const auto& doc : docs) {
            for (const auto& tok : doc) {
                auto [it, inserted] = freq.try_emplace(tok, 0);
                if (inserted) first_seen.push_back(tok);
                ++it->second;
            }
        }
        for (auto& tok : first_seen) {
            if (freq[tok] >= min_count) {
                v.index_.emplace(tok, static_cast<int>(v.tokens_.size()));
                v.tokens_.push_back(std::move(tok));
            }
        }
        return v;
    }

    int size() const { return static_cast<int>(tokens_.size()); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    int min_count() const { return min_count_; }

    std::optional<int> find(std::string_view token) const {
        auto it = index_.find(std::string(token));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    // Stable digest over the ordered token list; embedded in model files so a
    // model is never applied under a different vocabulary.
    std::string fingerprint() const {
        detail::Sha256 h;
        for (const auto& t : tokens_) {
            h.update(t);
            h.update("\n", 1);
        }
        auto d = h.finish();
        return detail::to_hex(d.data(), d.size());
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    int min_count_ = 1;
};

inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                                   int min_count) {
    return Vocabulary::build(docs, min_count);
}

// Sparse term-count vector: (token id, count) pairs sorted by id, counts > 0.
struct TermVector {
    std::vector<std::pair<int, int>> counts;
    int dimension = 0;

    bool zero() const { return counts.empty(); }

    std::int64_t total() const {
        std::int64_t s = 0;
        for (const auto& [id, c] : counts) s += c;
        return s;
    }

    int count_for(int id) const {
        auto it = std::lower_bound(counts.begin(), counts.end(), id,
                                   [](const auto& p, int v) { return p.first < v; });
        return it != counts.end() && it->first == id ? it->second : 0;
    }
};

// Counts in-vocabulary tokens; out-of-vocabulary tokens are dropped.
inline TermVector vectorize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::unordered_map<int, int> acc;
    for (const auto& tok : tokens) {
        if (auto id = vocab.find(tok)) ++acc[*id];
    }
    TermVector v;
    v.dimension = vocab.size();
    v.counts.assign(acc.begin(), acc.end());
    std::sort(v.counts.begin(), v.counts.end());
    return v;
}

// Cosine similarity between two count vectors, accumulated in ascending id
// order and clamped to [0,1]. Vectors must share a dimension and be nonzero.
inline double cosine_similarity(const TermVector& a, const TermVector& b) {
    if (a.dimension != b.dimension) {
        throw Error(Errc::DimensionMismatch, "textproc",
                    "vector dimensions differ: " + std::to_string(a.dimension) + " vs " +
                        std::to_string(b.dimension));
    }
    if (a.zero() || b.zero()) {
        throw Error(Errc::ZeroVector, "textproc", "cosine similarity of an all-zero vector");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.counts.size() || j < b.counts.size()) {
        if (j >= b.counts.size() || (i < a.counts.size() && a.counts[i].first < b.counts[j].first)) {
            na += double(a.counts[i].second) * a.counts[i].second;
            ++i;
        } else if (i >= a.counts.size() || b.counts[j].first < a.counts[i].first) {
            nb += double(b.counts[j].second) * b.counts[j].second;
            ++j;
        } else {
            dot += double(a.counts[i].second) * b.counts[j].second;
            na += double(a.counts[i].second) * a.counts[i].second;
            nb += double(b.counts[j].second) * b.counts[j].second;
            ++i;
            ++j;
        }
    }
    double denom = std::sqrt(na) * std::sqrt(nb);
    double s = dot / denom;
    return std::clamp(s, 0.0, 1.0);
}

} // namespace dedukt
