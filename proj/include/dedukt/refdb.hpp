#pragma once
// Reference database: source-material and web-reference sentences with
// exact brute-force top-k cosine retrieval. Small corpora (one article plus
// its references) make a scan both simpler and perfectly deterministic.

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "dedukt/detail/io.hpp"
#include "dedukt/detail/unicode.hpp"
#include "dedukt/error.hpp"
#include "dedukt/textproc.hpp"

namespace dedukt {

struct RefEntry {
    int ref_id = 0;
    std::string sentence;
    TermVector vector;
};

struct RefDb {
    std::vector<RefEntry> entries;
    Vocabulary vocabulary;
    TokenizerConfig tokenizer;
    int min_count = 1;
    int dropped = 0; // sentences whose vector came out all-zero
};

// Vocabulary from the sentences themselves; zero-vector sentences (nothing
// survived min_count) are dropped and counted. Duplicate sentences keep
// their own entries and ids.
inline RefDb build_refdb(const std::vector<std::string>& sentences, const TokenizerConfig& cfg,
                         int min_count = 1) {
    RefDb db;
    db.tokenizer = cfg;
    db.min_count = min_count;
    std::vector<std::vector<std::string>> docs;
    docs.reserve(sentences.size());
    for (const auto& s : sentences) docs.push_back(tokenize(s, cfg));
    db.vocabulary = build_vocabulary(docs, min_count);
    int next_id = 0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        TermVector v = vectorize(docs[i], db.vocabulary);
        if (v.zero()) {
            ++db.dropped;
            continue;
        }
        db.entries.push_back({next_id++, sentences[i], std::move(v)});
    }
    if (db.entries.empty()) {
        throw Error(Errc::EmptyRefDb, "refdb", "no usable sentences (all empty or below min_count)");
    }
    return db;
}

struct RefHit {
    int ref_id = 0;
    std::string sentence;
    double score = 0.0;
};

// Top-k by cosine, ties broken toward the lower ref_id. A query that
// vectorizes to zero matches nothing and returns an empty list.
inline std::vector<RefHit> most_similar(const RefDb& db, std::string_view query, int k) {
    if (k < 1) throw Error(Errc::InvalidParams, "refdb", "k must be >= 1");
    TermVector qv = vectorize(tokenize(query, db.tokenizer), db.vocabulary);
    if (qv.zero()) return {};
    std::vector<RefHit> hits;
    hits.reserve(db.entries.size());
    for (const auto& e : db.entries) {
        hits.push_back({e.ref_id, e.sentence, cosine_similarity(qv, e.vector)});
    }
    std::sort(hits.begin(), hits.end(), [](const RefHit& a, const RefHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.ref_id < b.ref_id;
    });
    if (static_cast<int>(hits.size()) > k) hits.resize(k);
    return hits;
}

// Splits raw reference material at terminal punctuation, Latin and CJK
// alike (. ! ? ; 。 ！ ？ ； …). Trailing closers/quotes stay attached to
// their sentence; blank results are dropped.
inline std::vector<std::string> segment_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    std::size_t i = 0;
    bool ended = false;
    auto is_closer = [](char32_t c) {
        return c == ')' || c == ']' || c == '"' || c == '\'' || c == 0x201D || c == 0x2019 ||
               c == 0xFF09 || c == 0x300D || c == 0x300F || c == 0x3011 || c == 0x300B;
    };
    auto flush = [&] {
        std::size_t a = current.find_first_not_of(" \t\r\n");
        std::size_t b = current.find_last_not_of(" \t\r\n");
        if (a != std::string::npos) out.push_back(current.substr(a, b - a + 1));
        current.clear();
    };
    while (i < text.size()) {
        std::size_t start = i;
        char32_t cp = detail::decode_utf8(text, i);
        if (ended && !detail::is_sentence_end(cp) && !is_closer(cp)) {
            flush();
            ended = false;
        }
        current.append(text.substr(start, i - start));
        if (detail::is_sentence_end(cp)) ended = true;
        if (cp == '\n') {
            flush();
            ended = false;
        }
    }
    flush();
    return out;
}

inline void save_refdb(const RefDb& db, const std::string& path) {
    nlohmann::json j;
    j["format"] = "dedukt-refdb";
    j["format_version"] = 1;
    j["tokenizer"] = {{"mode", tokenizer_mode_name(db.tokenizer.mode)},
                      {"lowercase", db.tokenizer.lowercase},
                      {"strip_punctuation", db.tokenizer.strip_punctuation}};
    j["min_count"] = db.min_count;
    nlohmann::json sentences = nlohmann::json::array();
    for (const auto& e : db.entries) sentences.push_back(e.sentence);
    j["sentences"] = std::move(sentences);
    detail::write_file_atomic(path, j.dump(2) + "\n", "refdb");
}

inline RefDb load_refdb(const std::string& path) {
    std::string content = detail::read_file(path, "refdb");
    nlohmann::json j = nlohmann::json::parse(content, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "dedukt-refdb") {
        throw Error(Errc::SchemaViolation, "refdb", "not a refdb file: " + path);
    }
    TokenizerConfig cfg;
    auto mode = tokenizer_mode_from_name(j["tokenizer"].value("mode", "cjk-gram"));
    if (!mode) throw Error(Errc::SchemaViolation, "refdb", "unknown tokenizer mode");
    cfg.mode = *mode;
    cfg.lowercase = j["tokenizer"].value("lowercase", true);
    cfg.strip_punctuation = j["tokenizer"].value("strip_punctuation", true);
    std::vector<std::string> sentences = j.at("sentences").get<std::vector<std::string>>();
    return build_refdb(sentences, cfg, j.value("min_count", 1));
}

} // namespace dedukt
