#pragma once
// The LLM deductive-coding engine. Builds the five-part classification
// prompt in its four variants (plain, gated with the direct code removed,
// retrieval-augmented, full-dialog context), routes near-copies through the
// similarity gate without spending an LLM call, parses replies back into
// codebook codes, runs whole datasets, and exports fine-tuning data.
//
// Prose content (course background, instructions, output format, few-shot
// examples) comes verbatim from the template file; the code contributes
// only the structural section markers and rule/example scaffolding below.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dedukt/corpus.hpp"
#include "dedukt/detail/digest.hpp"
#include "dedukt/detail/io.hpp"
#include "dedukt/detail/prng.hpp"
#include "dedukt/error.hpp"
#include "dedukt/llm_gateway.hpp"
#include "dedukt/refdb.hpp"

namespace dedukt {

namespace prompts {

inline constexpr std::string_view kBackgroundHeader = "【Introduction to the Course Background】";
inline constexpr std::string_view kInstructionsHeader = "【Issuance of Instructions】";
inline constexpr std::string_view kRulesHeader = "【Detailed Introduction to Encoding Rules】";
inline constexpr std::string_view kOutputHeader = "【Output Structure and Examples】";
inline constexpr std::string_view kInputHeader = "【Input data】";
inline constexpr std::string_view kDialogHeader = "【Student dialogs】";
inline constexpr std::string_view kTwoStepInstruction =
    "Work in two steps: first describe how the input relates to each reference sentence, "
    "then decide on exactly one code.";
inline constexpr std::string_view kDialogContextInstruction =
    "Code only the turn marked with '>>>'. Consider the surrounding turns of the dialog "
    "when deciding.";
inline constexpr std::string_view kFormatReminder =
    "Reply with exactly one code identifier from the encoding rules and nothing else.";

} // namespace prompts

struct FewShotExample {
    std::string item; // rendered discourse example
    std::string code; // its gold code
};

struct PromptTemplate {
    std::string background;
    std::string instructions;
    std::string output_format;
    std::vector<FewShotExample> fewshot_examples;
};

inline PromptTemplate load_template(const std::string& path, const Codebook& codebook) {
    nlohmann::json j = nlohmann::json::parse(detail::read_file(path, "coder"), nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(Errc::SchemaViolation, "coder", "template file is not a JSON object");
    }
    PromptTemplate t;
    t.background = j.value("background", std::string());
    t.instructions = j.value("instructions", std::string());
    t.output_format = j.value("output_format", std::string());
    if (t.background.empty() || t.instructions.empty() || t.output_format.empty()) {
        throw Error(Errc::SchemaViolation, "coder",
                    "template needs non-empty background, instructions and output_format");
    }
    if (j.contains("fewshot_examples")) {
        for (const auto& ej : j["fewshot_examples"]) {
            FewShotExample ex;
            ex.item = ej.at("item").get<std::string>();
            ex.code = ej.at("code").get<std::string>();
            if (!codebook.contains(ex.code)) {
                throw Error(Errc::UnknownLabel, "coder",
                            "few-shot example uses code '" + ex.code +
                                "' absent from the codebook");
            }
            t.fewshot_examples.push_back(std::move(ex));
        }
    }
    return t;
}

struct GateConfig {
    double threshold = 0.9;        // strict: only scores above it route directly
    std::string direct_code = "A"; // the near-copy code
};

struct RagConfig {
    int k = 2;
    bool two_step_instruction = true;
};

enum class Strategy { PromptOnly, GateThenPrompt, GateThenRagPrompt, DialogContext };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::PromptOnly: return "prompt-only";
        case Strategy::GateThenPrompt: return "gate";
        case Strategy::GateThenRagPrompt: return "gate+rag";
        case Strategy::DialogContext: return "dialog";
    }
    return "?";
}

inline std::optional<Strategy> strategy_from_name(std::string_view s) {
    if (s == "prompt-only") return Strategy::PromptOnly;
    if (s == "gate") return Strategy::GateThenPrompt;
    if (s == "gate+rag") return Strategy::GateThenRagPrompt;
    if (s == "dialog") return Strategy::DialogContext;
    return std::nullopt;
}

struct StrategyConfig {
    Strategy strategy = Strategy::PromptOnly;
    std::optional<GateConfig> gate;
    std::optional<RagConfig> rag;
    bool include_fewshot = true;
};

// Prompt variant for annotation items. WithReferences checks that exactly
// expected_k references were retrieved.
struct PromptVariant {
    enum class Kind { Full, WithoutDirectCode, WithReferences };
    Kind kind = Kind::Full;
    std::string excluded_code;           // WithoutDirectCode
    std::vector<std::string> references; // WithReferences
    int expected_k = 0;                  // WithReferences
    bool two_step = true;                // WithReferences
    bool include_fewshot = true;

    static PromptVariant full() { return {}; }

    static PromptVariant without_direct_code(std::string code) {
        PromptVariant v;
        v.kind = Kind::WithoutDirectCode;
        v.excluded_code = std::move(code);
        return v;
    }

    static PromptVariant with_references(std::vector<std::string> refs, int k, bool two_step) {
        PromptVariant v;
        v.kind = Kind::WithReferences;
        v.references = std::move(refs);
        v.expected_k = k;
        v.two_step = two_step;
        return v;
    }
};

namespace detail {

inline std::string render_encoding_rules(const Codebook& codebook,
                                         const std::string& excluded_code) {
    std::string out;
    bool first = true;
    for (const auto& def : codebook.codes()) {
        if (!excluded_code.empty() && def.code == excluded_code) continue;
        if (!first) out += "\n";
        first = false;
        out += "Code " + def.code + ":\n";
        for (const auto& b : def.behaviors) out += "- " + b + "\n";
        for (const auto& e : def.exemplars) out += "Example: " + e + "\n";
    }
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

inline std::string render_fewshot(const std::vector<FewShotExample>& examples) {
    std::string out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        out += "\n\nExample " + std::to_string(i + 1) + ":\nInput: " + examples[i].item +
               "\nOutput: " + examples[i].code;
    }
    return out;
}

inline std::string render_annotation_input(const DiscourseItem& item) {
    return std::string(prompts::kInputHeader) + "\nHighlight: " + item.highlight +
           "\nComment: " + item.comment;
}

inline std::string render_turn(const DiscourseItem& item) {
    if (item.speaker.empty()) return item.utterance;
    return item.speaker + ": " + item.utterance;
}

inline std::string render_system(const Codebook& codebook, const PromptTemplate& tmpl,
                                 const std::string& excluded_code,
                                 const std::string& extra_instruction, bool include_fewshot) {
    std::string out;
    out += std::string(prompts::kBackgroundHeader) + "\n" + tmpl.background;
    out += "\n\n" + std::string(prompts::kInstructionsHeader) + "\n" + tmpl.instructions;
    if (!extra_instruction.empty()) out += "\n" + extra_instruction;
    out += "\n\n" + std::string(prompts::kRulesHeader) + "\n" +
           render_encoding_rules(codebook, excluded_code);
    out += "\n\n" + std::string(prompts::kOutputHeader) + "\n" + tmpl.output_format;
    if (include_fewshot) out += render_fewshot(tmpl.fewshot_examples);
    return out;
}

} // namespace detail

// Five-part annotation prompt: background, instructions, encoding rules,
// output structure with few-shot examples (system message), then the input
// data and any retrieved references (user message).
inline ChatRequest build_annotation_prompt(const Codebook& codebook, const PromptTemplate& tmpl,
                                           const DiscourseItem& item,
                                           const PromptVariant& variant) {
    if (item.kind != ItemKind::Annotation) {
        throw Error(Errc::WrongKind, "coder",
                    "item '" + item.id + "' is not an annotation");
    }
    std::string excluded;
    std::string extra_instruction;
    if (variant.kind == PromptVariant::Kind::WithoutDirectCode) {
        excluded = variant.excluded_code;
    }
    if (variant.kind == PromptVariant::Kind::WithReferences) {
        if (static_cast<int>(variant.references.size()) != variant.expected_k) {
            throw Error(Errc::ReferenceCountMismatch, "coder",
                        "expected " + std::to_string(variant.expected_k) + " references, got " +
                            std::to_string(variant.references.size()));
        }
        if (variant.two_step) extra_instruction = std::string(prompts::kTwoStepInstruction);
    }
    std::string user = detail::render_annotation_input(item);
    if (variant.kind == PromptVariant::Kind::WithReferences) {
        for (std::size_t i = 0; i < variant.references.size(); ++i) {
            user += "\nReference" + std::to_string(i + 1) + ": " + variant.references[i];
        }
    }
    ChatRequest req;
    req.messages.push_back({"system", detail::render_system(codebook, tmpl, excluded,
                                                            extra_instruction,
                                                            variant.include_fewshot)});
    req.messages.push_back({"user", std::move(user)});
    return req;
}

// Dialog prompt: the four fixed sections plus the whole group transcript in
// turn order, with exactly one turn marked '>>>' for coding.
inline ChatRequest build_dialog_prompt(const Codebook& codebook, const PromptTemplate& tmpl,
                                       const std::vector<const DiscourseItem*>& dialog,
                                       int target_index, bool include_fewshot = true) {
    if (dialog.empty()) {
        throw Error(Errc::MissingDialogs, "coder", "empty dialog");
    }
    if (target_index < 0 || target_index >= static_cast<int>(dialog.size())) {
        throw Error(Errc::IndexOutOfRange, "coder",
                    "target turn " + std::to_string(target_index) + " outside dialog of " +
                        std::to_string(dialog.size()) + " turns");
    }
    for (const auto* turn : dialog) {
        if (turn->kind != ItemKind::DialogTurn) {
            throw Error(Errc::WrongKind, "coder", "item '" + turn->id + "' is not a dialog turn");
        }
    }
    std::string transcript(prompts::kDialogHeader);
    for (std::size_t i = 0; i < dialog.size(); ++i) {
        transcript += "\n";
        if (static_cast<int>(i) == target_index) transcript += ">>> ";
        transcript += "[" + std::to_string(dialog[i]->turn_index) + "] " +
                      detail::render_turn(*dialog[i]);
    }
    ChatRequest req;
    req.messages.push_back(
        {"system", detail::render_system(codebook, tmpl, {},
                                         std::string(prompts::kDialogContextInstruction),
                                         include_fewshot)});
    req.messages.push_back({"user", std::move(transcript)});
    return req;
}

// Gate outcome: either the direct code (score strictly above the threshold)
// or a deferral carrying the best score seen.
struct GateRoute {
    bool direct = false;
    std::string code;
    double best_score = 0.0;
};

inline GateRoute gate_route(const DiscourseItem& item, const RefDb& db, const GateConfig& gate) {
    if (item.kind != ItemKind::Annotation) {
        throw Error(Errc::WrongKind, "coder", "gate applies to annotation items only");
    }
    auto hits = most_similar(db, item.comment, 1);
    if (hits.empty()) return {false, {}, 0.0}; // comment vectorized to zero
    if (hits.front().score > gate.threshold) {
        return {true, gate.direct_code, hits.front().score};
    }
    return {false, {}, hits.front().score};
}

// Resolves a reply to a codebook code. Pass 1 accepts a trimmed verbatim
// code; pass 2 accepts a reply mentioning exactly one distinct code as a
// standalone token (not embedded in a longer alphanumeric run).
inline std::string parse_llm_response(std::string_view reply, const Codebook& codebook) {
    auto is_word = [](char c) {
        return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    };
    std::string_view trimmed = reply;
    while (!trimmed.empty() && (trimmed.front() == ' ' || trimmed.front() == '\t' ||
                                trimmed.front() == '\r' || trimmed.front() == '\n')) {
        trimmed.remove_prefix(1);
    }
    while (!trimmed.empty() && (trimmed.back() == ' ' || trimmed.back() == '\t' ||
                                trimmed.back() == '\r' || trimmed.back() == '\n')) {
        trimmed.remove_suffix(1);
    }
    if (codebook.contains(trimmed)) return std::string(trimmed);

    std::vector<std::string> found;
    for (const auto& def : codebook.codes()) {
        const std::string& code = def.code;
        std::size_t at = 0;
        bool hit = false;
        while ((at = reply.find(code, at)) != std::string_view::npos) {
            bool left_ok = at == 0 || !is_word(reply[at - 1]);
            std::size_t end = at + code.size();
            bool right_ok = end >= reply.size() || !is_word(reply[end]);
            if (left_ok && right_ok) {
                hit = true;
                break;
            }
            ++at;
        }
        if (hit) found.push_back(code);
    }
    if (found.size() == 1) return found.front();
    throw ReplyParseError(std::string(reply), std::move(found));
}

// Runs a whole dataset through one strategy. Gate strategies route
// near-copies directly (no LLM call); everything else gets one prompt, one
// completion and one parse, with a single reminder retry on a parse
// failure. Per-item failures are recorded, never fatal.
inline PredictionSet code_dataset(const LabeledDataset& dataset, const Codebook& codebook,
                                  const PromptTemplate& tmpl, const StrategyConfig& strategy,
                                  const RefDb* db, LlmGateway& gateway) {
    const bool gated = strategy.strategy == Strategy::GateThenPrompt ||
                       strategy.strategy == Strategy::GateThenRagPrompt;
    if (strategy.strategy == Strategy::DialogContext) {
        if (dataset.kind() != ItemKind::DialogTurn || dataset.size() == 0) {
            throw Error(Errc::MissingDialogs, "coder",
                        "dialog strategy needs a non-empty dialog dataset");
        }
    } else if (dataset.kind() != ItemKind::Annotation) {
        throw Error(Errc::WrongKind, "coder",
                    "strategy '" + std::string(strategy_name(strategy.strategy)) +
                        "' applies to annotation datasets");
    }
    if (gated) {
        if (db == nullptr) {
            throw Error(Errc::MissingRefDb, "coder",
                        "strategy '" + std::string(strategy_name(strategy.strategy)) +
                            "' needs a reference database");
        }
        if (!strategy.gate) {
            throw Error(Errc::InvalidParams, "coder", "gate strategy without gate config");
        }
        if (!codebook.contains(strategy.gate->direct_code)) {
            throw Error(Errc::UnknownLabel, "coder",
                        "gate direct code '" + strategy.gate->direct_code +
                            "' is not in the codebook");
        }
    }
    if (strategy.strategy == Strategy::GateThenRagPrompt && !strategy.rag) {
        throw Error(Errc::InvalidParams, "coder", "gate+rag strategy without rag config");
    }

    struct Job {
        const DiscourseItem* item;
        const std::vector<const DiscourseItem*>* dialog = nullptr;
        int target_index = 0;
    };
    std::vector<Job> jobs;
    std::vector<std::pair<std::string, std::vector<const DiscourseItem*>>> dialogs;
    if (strategy.strategy == Strategy::DialogContext) {
        dialogs = dataset.dialogs();
        for (const auto& [group, turns] : dialogs) {
            for (std::size_t i = 0; i < turns.size(); ++i) {
                jobs.push_back({turns[i], &turns, static_cast<int>(i)});
            }
        }
    } else {
        for (const auto& item : dataset.items()) jobs.push_back({&item, nullptr, 0});
    }

    auto run_job = [&](const Job& job) -> PredictionEntry {
        PredictionEntry entry;
        if (gated) {
            GateRoute route = gate_route(*job.item, *db, *strategy.gate);
            if (route.direct) {
                entry.label = route.code;
                entry.status = PredStatus::Ok;
                entry.route = PredRoute::DirectGate;
                return entry;
            }
        }
        ChatRequest req;
        switch (strategy.strategy) {
            case Strategy::PromptOnly: {
                auto v = PromptVariant::full();
                v.include_fewshot = strategy.include_fewshot;
                req = build_annotation_prompt(codebook, tmpl, *job.item, v);
                break;
            }
            case Strategy::GateThenPrompt: {
                auto v = PromptVariant::without_direct_code(strategy.gate->direct_code);
                v.include_fewshot = strategy.include_fewshot;
                req = build_annotation_prompt(codebook, tmpl, *job.item, v);
                break;
            }
            case Strategy::GateThenRagPrompt: {
                auto hits = most_similar(*db, job.item->comment, strategy.rag->k);
                if (static_cast<int>(hits.size()) < strategy.rag->k) {
                    // degenerate query or tiny database: fall back to the plain prompt
                    auto v = PromptVariant::full();
                    v.include_fewshot = strategy.include_fewshot;
                    req = build_annotation_prompt(codebook, tmpl, *job.item, v);
                } else {
                    std::vector<std::string> refs;
                    refs.reserve(hits.size());
                    for (const auto& h : hits) refs.push_back(h.sentence);
                    auto v = PromptVariant::with_references(std::move(refs), strategy.rag->k,
                                                            strategy.rag->two_step_instruction);
                    v.include_fewshot = strategy.include_fewshot;
                    req = build_annotation_prompt(codebook, tmpl, *job.item, v);
                }
                break;
            }
            case Strategy::DialogContext:
                req = build_dialog_prompt(codebook, tmpl, *job.dialog, job.target_index,
                                          strategy.include_fewshot);
                break;
        }
        entry.route = PredRoute::Llm;
        std::string reply;
        try {
            reply = gateway.chat_complete(req).content;
            entry.raw_response = reply;
            entry.label = parse_llm_response(reply, codebook);
            entry.status = PredStatus::Ok;
            return entry;
        } catch (const ReplyParseError&) {
            // one retry with a format reminder appended to the conversation
            ChatRequest retry = req;
            retry.messages.push_back({"assistant", reply});
            retry.messages.push_back({"user", std::string(prompts::kFormatReminder)});
            try {
                std::string reply2 = gateway.chat_complete(retry).content;
                entry.raw_response = reply2;
                entry.label = parse_llm_response(reply2, codebook);
                entry.status = PredStatus::Ok;
                return entry;
            } catch (const Error& e) {
                entry.status = PredStatus::Failed;
                entry.label.clear();
                if (entry.raw_response.empty()) entry.raw_response = e.what();
                return entry;
            }
        } catch (const Error& e) {
            entry.status = PredStatus::Failed;
            entry.label.clear();
            entry.raw_response = e.what();
            return entry;
        }
    };

    // no single item may abort the run, whatever it throws
    auto safe_run = [&](const Job& job) -> PredictionEntry {
        try {
            return run_job(job);
        } catch (const std::exception& e) {
            PredictionEntry entry;
            entry.status = PredStatus::Failed;
            entry.route = PredRoute::Llm;
            entry.raw_response = e.what();
            return entry;
        }
    };

    std::vector<PredictionEntry> results(jobs.size());
    int workers = std::min<int>(gateway.config().max_concurrency, static_cast<int>(jobs.size()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) results[i] = safe_run(jobs[i]);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1)) {
                    results[i] = safe_run(jobs[i]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    PredictionSet out;
    out.engine_name = std::string(strategy_name(strategy.strategy)) + ":" + gateway.config().model;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        out.entries.emplace(jobs[i].item->id, std::move(results[i]));
    }
    return out;
}

struct FinetuneExportConfig {
    int sample_count = 100;
    std::uint64_t seed = 42;
    int epochs_metadata = 3; // recorded in the manifest, never executed here
    std::string base_model_metadata = "gpt-3.5-turbo";
    bool include_fewshot = true;
};

struct FinetuneManifest {
    int epochs = 0;
    std::string base_model;
    int sample_count = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> sample_ids;
    std::string content_digest;
};

// Writes sample_count chat records {system, user, assistant=gold code} in
// the draw order of a seeded shuffle, plus a sidecar manifest recording the
// fine-tune configuration this export targets.
inline FinetuneManifest export_finetune_dataset(const LabeledDataset& train,
                                                const Codebook& codebook,
                                                const PromptTemplate& tmpl,
                                                const FinetuneExportConfig& cfg,
                                                const std::string& out_path) {
    if (!train.fully_labeled()) {
        throw Error(Errc::UnlabeledItem, "coder", "fine-tune export needs gold labels throughout");
    }
    if (cfg.sample_count < 1) {
        throw Error(Errc::InvalidParams, "coder", "sample_count must be >= 1");
    }
    if (cfg.sample_count > static_cast<int>(train.size())) {
        throw Error(Errc::CountTooLarge, "coder",
                    "sample_count " + std::to_string(cfg.sample_count) + " exceeds training size " +
                        std::to_string(train.size()));
    }
    std::vector<int> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    detail::SplitMix64 rng(cfg.seed);
    detail::shuffle(order, rng);

    std::string system = detail::render_system(codebook, tmpl, {}, {}, cfg.include_fewshot);
    std::string out;
    FinetuneManifest manifest;
    for (int i = 0; i < cfg.sample_count; ++i) {
        const DiscourseItem& item = train.items()[order[i]];
        std::string user = item.kind == ItemKind::Annotation
                               ? detail::render_annotation_input(item)
                               : std::string(prompts::kInputHeader) + "\n" +
                                     detail::render_turn(item);
        nlohmann::json rec;
        rec["messages"] = nlohmann::json::array({
            nlohmann::json{{"role", "system"}, {"content", system}},
            nlohmann::json{{"role", "user"}, {"content", user}},
            nlohmann::json{{"role", "assistant"}, {"content", item.gold_label}},
        });
        out += rec.dump();
        out += '\n';
        manifest.sample_ids.push_back(item.id);
    }
    detail::write_file_atomic(out_path, out, "coder");

    manifest.epochs = cfg.epochs_metadata;
    manifest.base_model = cfg.base_model_metadata;
    manifest.sample_count = cfg.sample_count;
    manifest.seed = cfg.seed;
    manifest.content_digest = detail::sha256_hex(out);
    nlohmann::json mj;
    mj["format"] = "dedukt-finetune-manifest";
    mj["epochs"] = manifest.epochs;
    mj["base_model"] = manifest.base_model;
    mj["sample_count"] = manifest.sample_count;
    mj["seed"] = manifest.seed;
    mj["sample_ids"] = manifest.sample_ids;
    mj["content_digest"] = manifest.content_digest;
    detail::write_file_atomic(out_path + ".manifest.json", mj.dump(2) + "\n", "coder");
    return manifest;
}

} // namespace dedukt
