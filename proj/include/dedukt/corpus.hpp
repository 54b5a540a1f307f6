#pragma once
// Labeled discourse datasets and coding schemes: loading, validation,
// deterministic train/test splitting, and prediction-set I/O.
//
// Dataset files are UTF-8 JSON Lines, one item per line. Codebooks are a
// single JSON object whose code order is canonical everywhere downstream
// (confusion-matrix axes, vote tie-breaking, prompt rendering).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dedukt/detail/io.hpp"
#include "dedukt/detail/prng.hpp"
#include "dedukt/error.hpp"

namespace dedukt {

enum class ItemKind { Annotation, DialogTurn };

inline const char* item_kind_name(ItemKind k) {
    return k == ItemKind::Annotation ? "annotation" : "dialog_turn";
}

struct DiscourseItem {
    std::string id;
    ItemKind kind = ItemKind::Annotation;
    std::string highlight;  // annotation: source passage the student marked
    std::string comment;    // annotation: the student's own text (non-empty)
    std::string group_id;   // dialog: owning discussion group
    int turn_index = -1;    // dialog: position within the group, contiguous from 0
    std::string speaker;    // dialog: opaque speaker tag
    std::string utterance;  // dialog: the turn's text (non-empty)
    std::string gold_label;
    std::optional<std::vector<std::string>> tokens; // pre-segmented tokens, if the export has them

    bool has_gold() const { return !gold_label.empty(); }

    // Text fed to BoW engines: the student's own words. Highlights are
    // near-copies of the material, so they are opt-in.
    std::string classification_text(bool include_highlight = false) const {
        if (kind == ItemKind::DialogTurn) return utterance;
        if (include_highlight && !highlight.empty()) return highlight + "\n" + comment;
        return comment;
    }
};

struct CodeDef {
    std::string code;
    std::vector<std::string> behaviors;
    std::vector<std::string> exemplars;
};

class Codebook {
public:
    Codebook(std::string scheme_name, std::vector<CodeDef> codes)
        : scheme_name_(std::move(scheme_name)), codes_(std::move(codes)) {
        if (codes_.size() < 2) {
            throw Error(Errc::TooFewCodes, "corpus",
                        "codebook '" + scheme_name_ + "' needs at least 2 codes, has " +
                            std::to_string(codes_.size()));
        }
        for (std::size_t i = 0; i < codes_.size(); ++i) {
            const auto& def = codes_[i];
            if (def.code.empty()) {
                throw Error(Errc::SchemaViolation, "corpus", "empty code identifier");
            }
            if (def.behaviors.empty()) {
                throw Error(Errc::EmptyBehaviors, "corpus",
                            "code '" + def.code + "' has no behavior descriptions");
            }
            if (!index_.emplace(def.code, static_cast<int>(i)).second) {
                throw Error(Errc::DuplicateCode, "corpus", "code '" + def.code + "' declared twice");
            }
        }
    }

    const std::string& scheme_name() const { return scheme_name_; }
    const std::vector<CodeDef>& codes() const { return codes_; }
    int size() const { return static_cast<int>(codes_.size()); }

    std::optional<int> find(std::string_view code) const {
        auto it = index_.find(std::string(code));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(std::string_view code) const { return find(code).has_value(); }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        out.reserve(codes_.size());
        for (const auto& c : codes_) out.push_back(c.code);
        return out;
    }

private:
    std::string scheme_name_;
    std::vector<CodeDef> codes_;
    std::unordered_map<std::string, int> index_;
};

struct SplitSpec {
    double train_ratio = 0.8;
    std::uint64_t seed = 0;
    std::optional<std::pair<int, int>> explicit_counts;
    bool stratified = false;
};

class LabeledDataset {
public:
    LabeledDataset(ItemKind kind, std::vector<DiscourseItem> items)
        : kind_(kind), items_(std::move(items)) {
        for (std::size_t i = 0; i < items_.size(); ++i) {
            index_.emplace(items_[i].id, i);
        }
    }

    ItemKind kind() const { return kind_; }
    const std::vector<DiscourseItem>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

    const DiscourseItem* find(std::string_view id) const {
        auto it = index_.find(std::string(id));
        return it == index_.end() ? nullptr : &items_[it->second];
    }

    bool fully_labeled() const {
        return std::all_of(items_.begin(), items_.end(),
                           [](const DiscourseItem& it) { return it.has_gold(); });
    }

    // Dialog turns of one group, in turn order. Only meaningful for
    // DialogTurn datasets, whose items are stored sorted by (group, turn).
    std::vector<std::pair<std::string, std::vector<const DiscourseItem*>>> dialogs() const {
        std::vector<std::pair<std::string, std::vector<const DiscourseItem*>>> out;
        for (const auto& item : items_) {
            if (out.empty() || out.back().first != item.group_id) {
                out.emplace_back(item.group_id, std::vector<const DiscourseItem*>{});
            }
            out.back().second.push_back(&item);
        }
        return out;
    }

private:
    ItemKind kind_;
    std::vector<DiscourseItem> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline std::string json_line_error(std::size_t line_no, const std::string& what) {
    return "line " + std::to_string(line_no) + ": " + what;
}

inline DiscourseItem parse_item_record(const nlohmann::json& j, ItemKind expected,
                                       std::size_t line_no) {
    auto fail = [&](const std::string& msg) -> void {
        throw Error(Errc::SchemaViolation, "corpus", json_line_error(line_no, msg));
    };
    if (!j.is_object()) fail("record is not an object");
    static const std::unordered_set<std::string> known = {
        "id", "kind", "highlight", "comment", "group_id",
        "turn_index", "speaker", "utterance", "gold_label", "tokens"};
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) fail("unknown field '" + key + "'");
    }
    DiscourseItem item;
    if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty()) {
        fail("missing or empty 'id'");
    }
    item.id = j["id"].get<std::string>();
    if (!j.contains("kind") || !j["kind"].is_string()) fail("missing 'kind'");
    std::string kind = j["kind"].get<std::string>();
    if (kind == "annotation") {
        item.kind = ItemKind::Annotation;
    } else if (kind == "dialog_turn") {
        item.kind = ItemKind::DialogTurn;
    } else {
        fail("unknown kind '" + kind + "'");
    }
    if (item.kind != expected) {
        fail("record of kind '" + kind + "' in a " + std::string(item_kind_name(expected)) +
             " dataset");
    }
    auto get_str = [&](const char* key) -> std::string {
        if (!j.contains(key)) return {};
        if (!j[key].is_string()) fail(std::string("field '") + key + "' is not a string");
        return j[key].get<std::string>();
    };
    item.highlight = get_str("highlight");
    item.comment = get_str("comment");
    item.group_id = get_str("group_id");
    item.speaker = get_str("speaker");
    item.utterance = get_str("utterance");
    item.gold_label = get_str("gold_label");
    if (j.contains("turn_index")) {
        if (!j["turn_index"].is_number_integer() || j["turn_index"].get<long long>() < 0) {
            fail("'turn_index' must be a non-negative integer");
        }
        item.turn_index = j["turn_index"].get<int>();
    }
    if (j.contains("tokens")) {
        if (!j["tokens"].is_array()) fail("'tokens' must be an array of strings");
        std::vector<std::string> toks;
        for (const auto& t : j["tokens"]) {
            if (!t.is_string()) fail("'tokens' must be an array of strings");
            toks.push_back(t.get<std::string>());
        }
        item.tokens = std::move(toks);
    }
    if (item.kind == ItemKind::Annotation) {
        if (item.comment.empty()) fail("annotation record missing 'comment'");
        if (!item.group_id.empty() || item.turn_index >= 0 || !item.speaker.empty() ||
            !item.utterance.empty()) {
            fail("annotation record carries dialog fields");
        }
    } else {
        if (item.utterance.empty()) fail("dialog record missing 'utterance'");
        if (item.group_id.empty()) fail("dialog record missing 'group_id'");
        if (item.turn_index < 0) fail("dialog record missing 'turn_index'");
        if (!item.highlight.empty() || !item.comment.empty()) {
            fail("dialog record carries annotation fields");
        }
    }
    return item;
}

inline nlohmann::json item_to_json(const DiscourseItem& item) {
    nlohmann::json j;
    j["id"] = item.id;
    j["kind"] = item_kind_name(item.kind);
    if (item.kind == ItemKind::Annotation) {
        if (!item.highlight.empty()) j["highlight"] = item.highlight;
        j["comment"] = item.comment;
    } else {
        j["group_id"] = item.group_id;
        j["turn_index"] = item.turn_index;
        if (!item.speaker.empty()) j["speaker"] = item.speaker;
        j["utterance"] = item.utterance;
    }
    if (!item.gold_label.empty()) j["gold_label"] = item.gold_label;
    if (item.tokens) j["tokens"] = *item.tokens;
    return j;
}

} // namespace detail

// Loads a JSONL dataset, validates every record and, for dialog data, sorts
// turns by (group_id, turn_index) and checks contiguity from 0.
inline LabeledDataset load_dataset(const std::string& path, ItemKind kind) {
    std::string content = detail::read_file(path, "corpus");
    std::vector<DiscourseItem> items;
    std::unordered_set<std::string> seen_ids;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        std::string line = content.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw Error(Errc::SchemaViolation, "corpus",
                        detail::json_line_error(line_no, "invalid JSON"));
        }
        DiscourseItem item = detail::parse_item_record(j, kind, line_no);
        if (!seen_ids.insert(item.id).second) {
            throw Error(Errc::DuplicateId, "corpus",
                        detail::json_line_error(line_no, "duplicate id '" + item.id + "'"));
        }
        items.push_back(std::move(item));
    }
    if (kind == ItemKind::DialogTurn) {
        std::stable_sort(items.begin(), items.end(),
                         [](const DiscourseItem& a, const DiscourseItem& b) {
                             return std::tie(a.group_id, a.turn_index) <
                                    std::tie(b.group_id, b.turn_index);
                         });
        for (std::size_t i = 0; i < items.size(); ++i) {
            bool new_group = i == 0 || items[i].group_id != items[i - 1].group_id;
            int expected = new_group ? 0 : items[i - 1].turn_index + 1;
            if (items[i].turn_index != expected) {
                if (!new_group && items[i].turn_index == items[i - 1].turn_index) {
                    throw Error(Errc::NonContiguousTurns, "corpus",
                                "group '" + items[i].group_id + "' has duplicate turn_index " +
                                    std::to_string(items[i].turn_index));
                }
                throw Error(Errc::NonContiguousTurns, "corpus",
                            "group '" + items[i].group_id + "' expected turn_index " +
                                std::to_string(expected) + ", found " +
                                std::to_string(items[i].turn_index));
            }
        }
    }
    return LabeledDataset(kind, std::move(items));
}

inline void write_dataset(const LabeledDataset& dataset, const std::string& path) {
    std::string out;
    for (const auto& item : dataset.items()) {
        out += detail::item_to_json(item).dump();
        out += '\n';
    }
    detail::write_file_atomic(path, out, "corpus");
}

inline Codebook load_codebook(const std::string& path) {
    std::string content = detail::read_file(path, "corpus");
    nlohmann::json j = nlohmann::json::parse(content, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("scheme_name") ||
        !j.contains("codes") || !j["codes"].is_array()) {
        throw Error(Errc::SchemaViolation, "corpus",
                    "codebook must be an object with 'scheme_name' and 'codes'");
    }
    std::vector<CodeDef> codes;
    for (const auto& cj : j["codes"]) {
        CodeDef def;
        if (!cj.is_object() || !cj.contains("code") || !cj["code"].is_string()) {
            throw Error(Errc::SchemaViolation, "corpus", "code entry missing 'code'");
        }
        def.code = cj["code"].get<std::string>();
        if (cj.contains("behaviors")) {
            for (const auto& b : cj["behaviors"]) def.behaviors.push_back(b.get<std::string>());
        }
        if (cj.contains("exemplars")) {
            for (const auto& e : cj["exemplars"]) def.exemplars.push_back(e.get<std::string>());
        }
        codes.push_back(std::move(def));
    }
    return Codebook(j["scheme_name"].get<std::string>(), std::move(codes));
}

// Deterministic split: a SplitMix64-seeded Fisher-Yates shuffle of item
// indices picks the train side; both sides keep dataset file order.
inline std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& dataset,
                                                               const SplitSpec& spec) {
    const auto& items = dataset.items();
    const int n = static_cast<int>(items.size());
    for (const auto& item : items) {
        if (!item.has_gold()) {
            throw Error(Errc::UnlabeledItem, "corpus",
                        "item '" + item.id + "' has no gold label; splits need labeled data");
        }
    }
    int n_train;
    if (spec.explicit_counts) {
        auto [tr, te] = *spec.explicit_counts;
        if (tr < 0 || te < 0 || tr + te != n) {
            throw Error(Errc::CountMismatch, "corpus",
                        "explicit counts " + std::to_string(tr) + "+" + std::to_string(te) +
                            " do not partition " + std::to_string(n) + " items");
        }
        n_train = tr;
    } else {
        if (!(spec.train_ratio > 0.0 && spec.train_ratio < 1.0)) {
            throw Error(Errc::InvalidParams, "corpus", "train_ratio must be in (0,1)");
        }
        n_train = static_cast<int>(std::floor(spec.train_ratio * n));
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    detail::SplitMix64 rng(spec.seed);

    std::vector<char> in_train(n, 0);
    if (!spec.stratified) {
        detail::shuffle(order, rng);
        for (int i = 0; i < n_train; ++i) in_train[order[i]] = 1;
    } else {
        // Per-label proportional split: floor(ratio * n_label) per label in
        // first-occurrence order, then top up by largest fractional remainder
        // until the requested train size is reached.
        std::vector<std::string> label_order;
        std::map<std::string, std::vector<int>> by_label;
        for (int i = 0; i < n; ++i) {
            auto [it, inserted] = by_label.try_emplace(items[i].gold_label);
            if (inserted) label_order.push_back(items[i].gold_label);
            it->second.push_back(i);
        }
        double ratio = static_cast<double>(n_train) / n;
        int assigned = 0;
        std::vector<std::pair<double, std::string>> remainders;
        std::map<std::string, int> take;
        for (const auto& lab : label_order) {
            double exact = ratio * static_cast<double>(by_label[lab].size());
            int t = static_cast<int>(std::floor(exact));
            take[lab] = t;
            assigned += t;
            remainders.emplace_back(exact - t, lab);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t i = 0; assigned < n_train && i < remainders.size(); ++i) {
            const auto& lab = remainders[i].second;
            if (take[lab] < static_cast<int>(by_label[lab].size())) {
                ++take[lab];
                ++assigned;
            }
        }
        for (const auto& lab : label_order) {
            auto idx = by_label[lab];
            detail::shuffle(idx, rng);
            for (int i = 0; i < take[lab]; ++i) in_train[idx[i]] = 1;
        }
    }

    std::vector<DiscourseItem> train, test;
    for (int i = 0; i < n; ++i) {
        (in_train[i] ? train : test).push_back(items[i]);
    }
    return {LabeledDataset(dataset.kind(), std::move(train)),
            LabeledDataset(dataset.kind(), std::move(test))};
}

enum class PredStatus { Ok, Failed };
enum class PredRoute { DirectGate, Llm, Forest, External };

inline const char* pred_route_name(PredRoute r) {
    switch (r) {
        case PredRoute::DirectGate: return "direct_gate";
        case PredRoute::Llm: return "llm";
        case PredRoute::Forest: return "forest";
        case PredRoute::External: return "external";
    }
    return "?";
}

struct PredictionEntry {
    std::string label;
    PredStatus status = PredStatus::Ok;
    std::optional<PredRoute> route;
    std::string raw_response;
};

struct PredictionSet {
    std::string engine_name;
    std::map<std::string, PredictionEntry> entries; // item id -> prediction
};

// CSV import for predictions produced outside this toolkit. Header must be
// exactly "item_id,label"; every id must exist in the dataset and every
// label in the codebook.
inline PredictionSet import_external_predictions(const std::string& path,
                                                 const LabeledDataset& dataset,
                                                 const Codebook& codebook,
                                                 const std::string& engine_name) {
    std::string content = detail::read_file(path, "corpus");
    PredictionSet preds;
    preds.engine_name = engine_name;
    std::size_t pos = 0, line_no = 0;
    bool saw_header = false;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        std::string line = content.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != "item_id,label") {
                throw Error(Errc::SchemaViolation, "corpus",
                            "expected header 'item_id,label', found '" + line + "'");
            }
            saw_header = true;
            continue;
        }
        std::size_t comma = line.find(',');
        if (comma == std::string::npos) {
            throw Error(Errc::SchemaViolation, "corpus",
                        detail::json_line_error(line_no, "expected 'item_id,label'"));
        }
        std::string id = line.substr(0, comma);
        std::string label = line.substr(comma + 1);
        if (dataset.find(id) == nullptr) {
            throw Error(Errc::UnknownId, "corpus",
                        detail::json_line_error(line_no, "unknown item id '" + id + "'"));
        }
        if (!codebook.contains(label)) {
            throw Error(Errc::UnknownLabel, "corpus",
                        detail::json_line_error(line_no, "label '" + label +
                                                             "' is not in codebook '" +
                                                             codebook.scheme_name() + "'"));
        }
        PredictionEntry entry;
        entry.label = label;
        entry.status = PredStatus::Ok;
        entry.route = PredRoute::External;
        if (!preds.entries.emplace(id, std::move(entry)).second) {
            throw Error(Errc::DuplicateId, "corpus",
                        detail::json_line_error(line_no, "duplicate id '" + id + "'"));
        }
    }
    if (!saw_header) {
        throw Error(Errc::SchemaViolation, "corpus", "empty predictions file");
    }
    return preds;
}

inline void write_predictions(const PredictionSet& preds, const std::string& path) {
    std::string out;
    {
        nlohmann::json header;
        header["engine_name"] = preds.engine_name;
        out += header.dump();
        out += '\n';
    }
    for (const auto& [id, entry] : preds.entries) {
        nlohmann::json j;
        j["item_id"] = id;
        j["label"] = entry.label;
        j["status"] = entry.status == PredStatus::Ok ? "ok" : "failed";
        if (entry.route) j["route"] = pred_route_name(*entry.route);
        if (!entry.raw_response.empty()) j["raw_response"] = entry.raw_response;
        out += j.dump();
        out += '\n';
    }
    detail::write_file_atomic(path, out, "corpus");
}

inline PredictionSet load_predictions(const std::string& path) {
    std::string content = detail::read_file(path, "corpus");
    PredictionSet preds;
    std::size_t pos = 0, line_no = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        std::string line = content.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(Errc::SchemaViolation, "corpus",
                        detail::json_line_error(line_no, "invalid JSON"));
        }
        if (line_no == 1 && j.contains("engine_name")) {
            preds.engine_name = j["engine_name"].get<std::string>();
            continue;
        }
        PredictionEntry entry;
        std::string id = j.at("item_id").get<std::string>();
        entry.label = j.value("label", std::string());
        entry.status = j.value("status", std::string("ok")) == "ok" ? PredStatus::Ok
                                                                    : PredStatus::Failed;
        if (j.contains("route")) {
            std::string r = j["route"].get<std::string>();
            if (r == "direct_gate") entry.route = PredRoute::DirectGate;
            else if (r == "llm") entry.route = PredRoute::Llm;
            else if (r == "forest") entry.route = PredRoute::Forest;
            else if (r == "external") entry.route = PredRoute::External;
        }
        entry.raw_response = j.value("raw_response", std::string());
        if (!preds.entries.emplace(std::move(id), std::move(entry)).second) {
            throw Error(Errc::DuplicateId, "corpus",
                        detail::json_line_error(line_no, "duplicate item_id"));
        }
    }
    return preds;
}

} // namespace dedukt
