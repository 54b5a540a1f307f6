#pragma once
// Shared fixtures for the test suites: scratch directories, small
// codebooks/templates, synthetic datasets and the separable corpus used by
// the forest checks.

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "dedukt/coder.hpp"
#include "dedukt/corpus.hpp"
#include "dedukt/detail/prng.hpp"
#include "dedukt/textproc.hpp"

namespace testutil {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        std::random_device rd;
        dir_ = base / ("dedukt_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::filesystem::path path() const { return dir_; }
    std::string file(const std::string& name) const { return (dir_ / name).string(); }

private:
    std::filesystem::path dir_;
};

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
}

inline dedukt::Codebook annotation_codebook() {
    return dedukt::Codebook(
        "annotation",
        {{"A",
          {"Highlight and directly or selectively copy ideas from the material."},
          {"The plum blossom stands for perseverance through the winter."}},
         {"C1",
          {"Make inferences, generalizations or summaries based on the highlighted content."},
          {"I believe the flower mirrors the poet's own resilience in adversity."}},
         {"C2",
          {"Integrate other information from the material or other materials for comparison."},
          {"Earlier poems used red beans for love; plum blossoms carry friendship too."}}});
}

inline dedukt::Codebook discussion_codebook() {
    return dedukt::Codebook(
        "discussion",
        {{"M", {"Assigning, coordinating, and supervising tasks."}, {"Let us start with the translation."}},
         {"P", {"Copying the original text or online information, or summarizing others' opinions."}, {}},
         {"A", {"Expressing agreement.", "Expressing opposition."}, {"Yeah, you're right."}},
         {"C",
          {"Raising cognitive doubts or questions.",
           "Independently proposing a new and original point of view."},
          {}},
         {"I",
          {"Agreeing with a partner's perspective and providing additional explanations.",
           "Opposing a partner's viewpoint and providing additional explanations.",
           "Responding to and supplementing questions and doubts from peers."},
          {}}});
}

inline dedukt::PromptTemplate annotation_template() {
    dedukt::PromptTemplate t;
    t.background =
        "A university poetry appreciation course where students read an article about plum "
        "imagery and annotate passages they find interesting.";
    t.instructions =
        "Assign exactly one code from the encoding rules to the student input below.";
    t.output_format = "Reply with the code identifier only, for example: C1";
    t.fewshot_examples = {
        {"Highlight: Plum blossoms symbolized friendship.\nComment: Plum blossoms symbolized "
         "friendship.",
         "A"},
        {"Highlight: They bloom first in the cold.\nComment: I think the early bloom mirrors "
         "scholars who stand alone.",
         "C1"},
        {"Highlight: Plum stands for homesickness.\nComment: Willow branches meant farewell in "
         "other poems, so flowers carry fixed meanings.",
         "C2"}};
    return t;
}

inline std::string template_json() {
    nlohmann::json j;
    auto t = annotation_template();
    j["background"] = t.background;
    j["instructions"] = t.instructions;
    j["output_format"] = t.output_format;
    j["fewshot_examples"] = nlohmann::json::array();
    for (const auto& ex : t.fewshot_examples) {
        j["fewshot_examples"].push_back({{"item", ex.item}, {"code", ex.code}});
    }
    return j.dump(2) + "\n";
}

inline std::string annotation_codebook_json() {
    auto cb = annotation_codebook();
    nlohmann::json j;
    j["scheme_name"] = "annotation";
    j["codes"] = nlohmann::json::array();
    for (const auto& def : cb.codes()) {
        j["codes"].push_back(
            {{"code", def.code}, {"behaviors", def.behaviors}, {"exemplars", def.exemplars}});
    }
    return j.dump(2) + "\n";
}

inline dedukt::DiscourseItem make_annotation(const std::string& id, const std::string& comment,
                                             const std::string& gold = {},
                                             const std::string& highlight = {}) {
    dedukt::DiscourseItem item;
    item.id = id;
    item.kind = dedukt::ItemKind::Annotation;
    item.comment = comment;
    item.highlight = highlight;
    item.gold_label = gold;
    return item;
}

inline dedukt::DiscourseItem make_turn(const std::string& id, const std::string& group, int index,
                                       const std::string& speaker, const std::string& utterance,
                                       const std::string& gold = {}) {
    dedukt::DiscourseItem item;
    item.id = id;
    item.kind = dedukt::ItemKind::DialogTurn;
    item.group_id = group;
    item.turn_index = index;
    item.speaker = speaker;
    item.utterance = utterance;
    item.gold_label = gold;
    return item;
}

// n annotation items with unique comments and gold labels cycling A/C1/C2.
inline dedukt::LabeledDataset synthetic_annotations(int n) {
    const char* codes[] = {"A", "C1", "C2"};
    const char* phrases[] = {"the plum endures the frost", "blossoms open before spring",
                             "poets praise the lone branch"};
    std::vector<dedukt::DiscourseItem> items;
    for (int i = 0; i < n; ++i) {
        std::string comment = std::string(phrases[i % 3]) + " variant" + std::to_string(i);
        items.push_back(make_annotation("a" + std::to_string(i), comment, codes[i % 3],
                                        "highlighted passage " + std::to_string(i)));
    }
    return dedukt::LabeledDataset(dedukt::ItemKind::Annotation, std::move(items));
}

// Separable BoW corpus: each class has a disjoint set of marker tokens and
// every document mixes markers with ~30% shared noise tokens.
struct SeparableCorpus {
    std::vector<std::vector<std::string>> docs;
    std::vector<std::string> labels;
};

inline SeparableCorpus separable_corpus(int n_docs, int n_classes,
                                        const std::vector<std::string>& class_codes,
                                        std::uint64_t seed) {
    SeparableCorpus corpus;
    dedukt::detail::SplitMix64 rng(seed);
    const int noise_pool = 12;
    for (int d = 0; d < n_docs; ++d) {
        int cls = d % n_classes;
        std::vector<std::string> doc;
        int marker_count = 4 + static_cast<int>(rng.bounded(3));
        for (int i = 0; i < marker_count; ++i) {
            doc.push_back("marker" + std::to_string(cls) + "_" + std::to_string(rng.bounded(3)));
        }
        int noise_count = static_cast<int>(0.3 * marker_count / 0.7) + 1;
        for (int i = 0; i < noise_count; ++i) {
            doc.push_back("noise" + std::to_string(rng.bounded(noise_pool)));
        }
        corpus.docs.push_back(std::move(doc));
        corpus.labels.push_back(class_codes[cls]);
    }
    return corpus;
}

} // namespace testutil
