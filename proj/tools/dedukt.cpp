// dedukt: deductive coding of educational discourse against a codebook.
// Subcommands cover the full pipeline: split a labeled dataset, train and
// apply the bag-of-words random forest, run the LLM coding strategies
// (optionally fully mocked), import external predictions, evaluate, and
// render reports. Every file is written atomically and every produced
// output gets a sidecar manifest with input digests and the effective
// configuration.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dedukt/coder.hpp"
#include "dedukt/corpus.hpp"
#include "dedukt/detail/digest.hpp"
#include "dedukt/detail/io.hpp"
#include "dedukt/error.hpp"
#include "dedukt/forest.hpp"
#include "dedukt/llm_gateway.hpp"
#include "dedukt/metrics.hpp"
#include "dedukt/refdb.hpp"
#include "dedukt/textproc.hpp"
#include "dedukt/version.hpp"

namespace {

using nlohmann::json;

struct ManifestBuilder {
    std::string subcommand;
    json inputs = json::object();
    json config = json::object();
    json outputs = json::array();

    void input(const std::string& path) {
        if (path.empty()) return;
        inputs[path] = dedukt::detail::sha256_hex(dedukt::detail::read_file(path, "cli"));
    }

    void output(const std::string& path) { outputs.push_back(path); }

    void write(const std::string& anchor_path) const {
        json j;
        j["tool"] = dedukt::kToolName;
        j["version"] = dedukt::kToolVersion;
        j["subcommand"] = subcommand;
        j["inputs"] = inputs;
        j["config"] = config;
        j["outputs"] = outputs;
        dedukt::detail::write_file_atomic(anchor_path + ".manifest.json", j.dump(2) + "\n", "cli");
    }
};

dedukt::ItemKind parse_kind(const std::string& s) {
    if (s == "annotation") return dedukt::ItemKind::Annotation;
    if (s == "dialog") return dedukt::ItemKind::DialogTurn;
    throw dedukt::Error(dedukt::Errc::InvalidConfig, "cli",
                        "--kind must be 'annotation' or 'dialog', got '" + s + "'");
}

dedukt::TokenizerConfig tokenizer_from_flags(const std::string& mode, bool no_lowercase,
                                             bool keep_punctuation) {
    dedukt::TokenizerConfig cfg;
    auto m = dedukt::tokenizer_mode_from_name(mode);
    if (!m) {
        throw dedukt::Error(dedukt::Errc::InvalidConfig, "cli",
                            "--tokenizer must be cjk-gram, whitespace or external");
    }
    cfg.mode = *m;
    cfg.lowercase = !no_lowercase;
    cfg.strip_punctuation = !keep_punctuation;
    return cfg;
}

std::vector<std::string> dataset_tokens(const dedukt::LabeledDataset& dataset, std::size_t i,
                                        const dedukt::TokenizerConfig& cfg,
                                        bool concat_highlight) {
    const auto& item = dataset.items()[i];
    const std::vector<std::string>* ext =
        item.tokens.has_value() ? &*item.tokens : nullptr;
    if (cfg.mode == dedukt::TokenizerMode::ExternalTokens) {
        return dedukt::tokenize(item.classification_text(concat_highlight), cfg, ext);
    }
    return dedukt::tokenize(item.classification_text(concat_highlight), cfg);
}

dedukt::ReportFormat parse_format(const std::string& s) {
    if (s == "plain") return dedukt::ReportFormat::PlainTable;
    if (s == "markdown") return dedukt::ReportFormat::Markdown;
    if (s == "record") return dedukt::ReportFormat::MachineRecord;
    throw dedukt::Error(dedukt::Errc::InvalidConfig, "cli",
                        "--format must be plain, markdown or record");
}

// ---------------------------------------------------------------- split

struct SplitArgs {
    std::string dataset, kind = "annotation", out_train, out_test;
    double ratio = 0.8;
    std::uint64_t seed = 42;
    int train_count = -1, test_count = -1;
    bool stratify = false;
};

int run_split(const SplitArgs& a) {
    auto dataset = dedukt::load_dataset(a.dataset, parse_kind(a.kind));
    dedukt::SplitSpec spec;
    spec.train_ratio = a.ratio;
    spec.seed = a.seed;
    spec.stratified = a.stratify;
    if (a.train_count >= 0 || a.test_count >= 0) {
        if (a.train_count < 0 || a.test_count < 0) {
            throw dedukt::Error(dedukt::Errc::InvalidConfig, "cli",
                                "--train-count and --test-count must be given together");
        }
        spec.explicit_counts = {a.train_count, a.test_count};
    }
    auto [train, test] = dedukt::split_dataset(dataset, spec);
    dedukt::write_dataset(train, a.out_train);
    dedukt::write_dataset(test, a.out_test);

    ManifestBuilder m;
    m.subcommand = "split";
    m.input(a.dataset);
    m.config = {{"kind", a.kind},       {"ratio", a.ratio},
                {"seed", a.seed},       {"stratify", a.stratify},
                {"train_count", a.train_count}, {"test_count", a.test_count}};
    m.output(a.out_train);
    m.output(a.out_test);
    m.write(a.out_train);
    std::cout << "split: " << train.size() << " train / " << test.size() << " test\n";
    return 0;
}

// ---------------------------------------------------------------- build-refdb

struct RefdbArgs {
    std::string input, out, tokenizer = "cjk-gram";
    bool presegmented = false, no_lowercase = false, keep_punctuation = false;
    int min_count = 1;
};

int run_build_refdb(const RefdbArgs& a) {
    std::string raw = dedukt::detail::read_file(a.input, "refdb");
    std::vector<std::string> sentences;
    if (a.presegmented) {
        std::size_t pos = 0;
        while (pos < raw.size()) {
            std::size_t eol = raw.find('\n', pos);
            if (eol == std::string::npos) eol = raw.size();
            std::string line = raw.substr(pos, eol - pos);
            pos = eol + 1;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) sentences.push_back(line);
        }
    } else {
        sentences = dedukt::segment_sentences(raw);
    }
    auto cfg = tokenizer_from_flags(a.tokenizer, a.no_lowercase, a.keep_punctuation);
    auto db = dedukt::build_refdb(sentences, cfg, a.min_count);
    dedukt::save_refdb(db, a.out);

    ManifestBuilder m;
    m.subcommand = "build-refdb";
    m.input(a.input);
    m.config = {{"tokenizer", a.tokenizer},
                {"presegmented", a.presegmented},
                {"lowercase", !a.no_lowercase},
                {"strip_punctuation", !a.keep_punctuation},
                {"min_count", a.min_count}};
    m.output(a.out);
    m.write(a.out);
    std::cout << "refdb: " << db.entries.size() << " sentences ("
              << db.dropped << " dropped), vocabulary " << db.vocabulary.size() << "\n";
    return 0;
}

// ---------------------------------------------------------------- train-forest

struct TrainForestArgs {
    std::string dataset, kind = "annotation", codebook, out;
    int trees = 100;
    std::uint64_t seed = 42;
    std::string max_features = "sqrt";
    int min_samples_leaf = 1;
    int max_depth = -1;
    bool no_bootstrap = false;
    int threads = 1;
    std::string tokenizer = "cjk-gram";
    bool no_lowercase = false, keep_punctuation = false;
    int min_count = 1;
    bool concat_highlight = false;
};

int run_train_forest(const TrainForestArgs& a) {
    auto dataset = dedukt::load_dataset(a.dataset, parse_kind(a.kind));
    auto codebook = dedukt::load_codebook(a.codebook);
    if (!dataset.fully_labeled()) {
        throw dedukt::Error(dedukt::Errc::UnlabeledItem, "cli",
                            "training dataset must be fully gold-labeled");
    }
    auto cfg = tokenizer_from_flags(a.tokenizer, a.no_lowercase, a.keep_punctuation);
    std::vector<std::vector<std::string>> docs;
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        docs.push_back(dataset_tokens(dataset, i, cfg, a.concat_highlight));
        labels.push_back(dataset.items()[i].gold_label);
    }
    auto vocab = dedukt::build_vocabulary(docs, a.min_count);
    std::vector<dedukt::TermVector> vectors;
    vectors.reserve(docs.size());
    for (const auto& d : docs) vectors.push_back(dedukt::vectorize(d, vocab));

    dedukt::ForestParams params;
    params.n_estimators = a.trees;
    params.seed = a.seed;
    params.max_features = dedukt::MaxFeatures::parse(a.max_features);
    params.min_samples_leaf = a.min_samples_leaf;
    if (a.max_depth >= 0) params.max_depth = a.max_depth;
    params.bootstrap = !a.no_bootstrap;
    dedukt::TrainOptions options;
    options.n_threads = a.threads;

    auto model = dedukt::train_forest(vectors, labels, params, codebook, vocab.fingerprint(),
                                      options);
    dedukt::save_model(model, vocab, a.out);

    ManifestBuilder m;
    m.subcommand = "train-forest";
    m.input(a.dataset);
    m.input(a.codebook);
    m.config = {{"kind", a.kind},
                {"trees", a.trees},
                {"seed", a.seed},
                {"max_features", a.max_features},
                {"min_samples_leaf", a.min_samples_leaf},
                {"max_depth", a.max_depth},
                {"bootstrap", !a.no_bootstrap},
                {"tokenizer", a.tokenizer},
                {"lowercase", !a.no_lowercase},
                {"strip_punctuation", !a.keep_punctuation},
                {"min_count", a.min_count},
                {"concat_highlight", a.concat_highlight},
                {"model_digest", dedukt::model_digest(model)}};
    m.output(a.out);
    m.write(a.out);
    std::cout << "forest: " << a.trees << " trees over vocabulary " << vocab.size()
              << ", digest " << dedukt::model_digest(model).substr(0, 12) << "\n";
    return 0;
}

// ---------------------------------------------------------------- code-forest

struct CodeForestArgs {
    std::string model, dataset, kind = "annotation", out, engine_name = "forest";
    std::string tokenizer = "cjk-gram";
    bool no_lowercase = false, keep_punctuation = false;
    bool concat_highlight = false;
};

int run_code_forest(const CodeForestArgs& a) {
    auto saved = dedukt::load_model(a.model);
    if (saved.vocab.size() == 0) {
        throw dedukt::Error(dedukt::Errc::CorruptModel, "cli",
                            "model file has no vocabulary section; cannot vectorize input");
    }
    auto dataset = dedukt::load_dataset(a.dataset, parse_kind(a.kind));
    auto cfg = tokenizer_from_flags(a.tokenizer, a.no_lowercase, a.keep_punctuation);
    dedukt::PredictionSet preds;
    preds.engine_name = a.engine_name;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        auto tokens = dataset_tokens(dataset, i, cfg, a.concat_highlight);
        auto vec = dedukt::vectorize(tokens, saved.vocab);
        auto p = dedukt::predict_label(saved.model, vec);
        dedukt::PredictionEntry entry;
        entry.label = p.label;
        entry.status = dedukt::PredStatus::Ok;
        entry.route = dedukt::PredRoute::Forest;
        preds.entries.emplace(dataset.items()[i].id, std::move(entry));
    }
    dedukt::write_predictions(preds, a.out);

    ManifestBuilder m;
    m.subcommand = "code-forest";
    m.input(a.model);
    m.input(a.dataset);
    m.config = {{"kind", a.kind},
                {"engine_name", a.engine_name},
                {"tokenizer", a.tokenizer},
                {"lowercase", !a.no_lowercase},
                {"strip_punctuation", !a.keep_punctuation},
                {"concat_highlight", a.concat_highlight}};
    m.output(a.out);
    m.write(a.out);
    std::cout << "code-forest: " << preds.entries.size() << " predictions\n";
    return 0;
}

// ---------------------------------------------------------------- code-llm

struct CodeLlmArgs {
    std::string dataset, kind = "annotation", codebook, tmpl, strategy, refdb, out;
    double threshold = 0.9;
    std::string direct_code = "A";
    int k = 2;
    bool no_two_step = false;
    bool no_fewshot = false;
    std::string mock, cache_dir;
    std::string model = "gpt-4-1106-preview", base_url = "https://api.openai.com";
    double temperature = 0.0;
    int max_tokens = 4096;
    double frequency_penalty = 0.0, presence_penalty = 0.0;
    int max_retries = 3, concurrency = 4, retry_base_ms = 1000;
};

int run_code_llm(const CodeLlmArgs& a) {
    auto strat = dedukt::strategy_from_name(a.strategy);
    if (!strat) {
        throw dedukt::Error(dedukt::Errc::InvalidConfig, "cli",
                            "--strategy must be prompt-only, gate, gate+rag or dialog");
    }
    bool gated = *strat == dedukt::Strategy::GateThenPrompt ||
                 *strat == dedukt::Strategy::GateThenRagPrompt;
    if (gated && a.refdb.empty()) {
        throw dedukt::Error(dedukt::Errc::MissingRefDb, "cli",
                            "--refdb is required for strategy '" + a.strategy + "'");
    }
    auto dataset = dedukt::load_dataset(a.dataset, parse_kind(a.kind));
    auto codebook = dedukt::load_codebook(a.codebook);
    auto tmpl = dedukt::load_template(a.tmpl, codebook);

    std::optional<dedukt::RefDb> db;
    if (!a.refdb.empty()) db = dedukt::load_refdb(a.refdb);

    dedukt::StrategyConfig strategy;
    strategy.strategy = *strat;
    strategy.include_fewshot = !a.no_fewshot;
    if (gated) strategy.gate = dedukt::GateConfig{a.threshold, a.direct_code};
    if (*strat == dedukt::Strategy::GateThenRagPrompt) {
        strategy.rag = dedukt::RagConfig{a.k, !a.no_two_step};
    }

    dedukt::LlmConfig llm;
    llm.base_url = a.base_url;
    llm.model = a.model;
    llm.temperature = a.temperature;
    llm.max_tokens = a.max_tokens;
    llm.frequency_penalty = a.frequency_penalty;
    llm.presence_penalty = a.presence_penalty;
    llm.max_retries = a.max_retries;
    llm.max_concurrency = a.concurrency;
    llm.retry_base_ms = a.retry_base_ms;
    llm.mock_script = a.mock;
    llm.cache_dir = a.cache_dir;
    if (llm.cache_dir.empty()) {
        if (const char* env = std::getenv("DEDUKT_CACHE_DIR")) llm.cache_dir = env;
    }

    dedukt::LlmGateway gateway(llm);
    auto preds = dedukt::code_dataset(dataset, codebook, tmpl, strategy,
                                      db ? &*db : nullptr, gateway);
    dedukt::write_predictions(preds, a.out);

    auto stats = gateway.stats();
    ManifestBuilder m;
    m.subcommand = "code-llm";
    m.input(a.dataset);
    m.input(a.codebook);
    m.input(a.tmpl);
    if (!a.refdb.empty()) m.input(a.refdb);
    if (!a.mock.empty()) m.input(a.mock);
    m.config = {{"kind", a.kind},
                {"strategy", a.strategy},
                {"threshold", a.threshold},
                {"direct_code", a.direct_code},
                {"k", a.k},
                {"two_step", !a.no_two_step},
                {"fewshot", !a.no_fewshot},
                {"model", a.model},
                {"base_url", a.base_url},
                {"temperature", a.temperature},
                {"max_tokens", a.max_tokens},
                {"frequency_penalty", a.frequency_penalty},
                {"presence_penalty", a.presence_penalty},
                {"max_retries", a.max_retries},
                {"concurrency", a.concurrency},
                {"mock", a.mock},
                {"cache_dir", llm.cache_dir},
                {"provider_calls", stats.provider_calls},
                {"cache_hits", stats.cache_hits}};
    m.output(a.out);
    m.write(a.out);

    long failed = 0;
    long direct = 0;
    for (const auto& [id, e] : preds.entries) {
        if (e.status == dedukt::PredStatus::Failed) ++failed;
        if (e.route == dedukt::PredRoute::DirectGate) ++direct;
    }
    std::cout << "code-llm: " << preds.entries.size() << " items, " << direct
              << " gated direct, " << failed << " failed, " << stats.provider_calls
              << " provider calls (" << stats.cache_hits << " cache hits)\n";
    return 0;
}

// ---------------------------------------------------------------- import-preds

struct ImportArgs {
    std::string preds, dataset, kind = "annotation", codebook, engine_name = "external", out;
};

int run_import(const ImportArgs& a) {
    auto dataset = dedukt::load_dataset(a.dataset, parse_kind(a.kind));
    auto codebook = dedukt::load_codebook(a.codebook);
    auto preds = dedukt::import_external_predictions(a.preds, dataset, codebook, a.engine_name);
    dedukt::write_predictions(preds, a.out);

    ManifestBuilder m;
    m.subcommand = "import-preds";
    m.input(a.preds);
    m.input(a.dataset);
    m.input(a.codebook);
    m.config = {{"kind", a.kind}, {"engine_name", a.engine_name}};
    m.output(a.out);
    m.write(a.out);
    std::cout << "import-preds: " << preds.entries.size() << " predictions\n";
    return 0;
}

// ---------------------------------------------------------------- eval / report

struct EvalArgs {
    std::string preds, dataset, kind = "annotation", codebook, out;
    std::string failed_policy = "exclude", zero_division = "zero", format = "plain";
};

int run_eval(const EvalArgs& a) {
    auto dataset = dedukt::load_dataset(a.dataset, parse_kind(a.kind));
    auto codebook = dedukt::load_codebook(a.codebook);
    auto preds = dedukt::load_predictions(a.preds);
    dedukt::FailedPolicy policy;
    if (a.failed_policy == "exclude") {
        policy = dedukt::FailedPolicy::Exclude;
    } else if (a.failed_policy == "count-as-wrong") {
        policy = dedukt::FailedPolicy::CountAsWrong;
    } else {
        throw dedukt::Error(dedukt::Errc::InvalidConfig, "cli",
                            "--failed-policy must be exclude or count-as-wrong");
    }
    dedukt::ZeroDivision zd;
    if (a.zero_division == "zero") {
        zd = dedukt::ZeroDivision::Zero;
    } else if (a.zero_division == "one") {
        zd = dedukt::ZeroDivision::One;
    } else {
        throw dedukt::Error(dedukt::Errc::InvalidConfig, "cli",
                            "--zero-division must be zero or one");
    }
    auto cm = dedukt::confusion_matrix(dataset, preds, codebook, policy);
    auto report = dedukt::build_report(cm, zd, preds.engine_name);
    std::cout << dedukt::render_report(report, parse_format(a.format));
    dedukt::detail::write_file_atomic(
        a.out, dedukt::render_report(report, dedukt::ReportFormat::MachineRecord), "cli");

    ManifestBuilder m;
    m.subcommand = "eval";
    m.input(a.preds);
    m.input(a.dataset);
    m.input(a.codebook);
    m.config = {{"kind", a.kind},
                {"failed_policy", a.failed_policy},
                {"zero_division", a.zero_division},
                {"format", a.format}};
    m.output(a.out);
    m.write(a.out);
    return 0;
}

struct ReportArgs {
    std::string report, format = "plain";
};

int run_report(const ReportArgs& a) {
    std::string content = dedukt::detail::read_file(a.report, "cli");
    auto rep = dedukt::parse_machine_record(content);
    std::cout << dedukt::render_report(rep, parse_format(a.format));
    return 0;
}

// ---------------------------------------------------------------- export-finetune

struct FinetuneArgs {
    std::string dataset, kind = "annotation", codebook, tmpl, out;
    int count = 0;
    std::uint64_t seed = 42;
    int epochs = 3;
    std::string base_model = "gpt-3.5-turbo";
    bool no_fewshot = false;
};

int run_export_finetune(const FinetuneArgs& a) {
    auto dataset = dedukt::load_dataset(a.dataset, parse_kind(a.kind));
    auto codebook = dedukt::load_codebook(a.codebook);
    auto tmpl = dedukt::load_template(a.tmpl, codebook);
    dedukt::FinetuneExportConfig cfg;
    cfg.sample_count = a.count;
    cfg.seed = a.seed;
    cfg.epochs_metadata = a.epochs;
    cfg.base_model_metadata = a.base_model;
    cfg.include_fewshot = !a.no_fewshot;
    auto manifest = dedukt::export_finetune_dataset(dataset, codebook, tmpl, cfg, a.out);

    ManifestBuilder m;
    m.subcommand = "export-finetune";
    m.input(a.dataset);
    m.input(a.codebook);
    m.input(a.tmpl);
    m.config = {{"kind", a.kind},
                {"count", a.count},
                {"seed", a.seed},
                {"epochs", a.epochs},
                {"base_model", a.base_model},
                {"fewshot", !a.no_fewshot},
                {"content_digest", manifest.content_digest}};
    m.output(a.out);
    m.output(a.out + ".manifest.json");
    m.write(a.out + ".run");
    std::cout << "export-finetune: " << manifest.sample_count << " records, digest "
              << manifest.content_digest.substr(0, 12) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deductive coding of educational discourse"};
    app.set_version_flag("--version", std::string(dedukt::kToolName) + " " + dedukt::kToolVersion);
    app.set_config("--config", "", "key-value config file; explicit flags win");
    app.require_subcommand(1);

    SplitArgs split_args;
    auto* split = app.add_subcommand("split", "split a labeled dataset into train/test");
    split->add_option("--dataset", split_args.dataset, "dataset JSONL")->required();
    split->add_option("--kind", split_args.kind, "annotation|dialog");
    split->add_option("--ratio", split_args.ratio, "train fraction (default 0.8)");
    split->add_option("--seed", split_args.seed, "shuffle seed");
    split->add_option("--train-count", split_args.train_count, "explicit train size");
    split->add_option("--test-count", split_args.test_count, "explicit test size");
    split->add_flag("--stratify", split_args.stratify, "stratify by gold label");
    split->add_option("--out-train", split_args.out_train, "train output JSONL")->required();
    split->add_option("--out-test", split_args.out_test, "test output JSONL")->required();

    RefdbArgs refdb_args;
    auto* refdb = app.add_subcommand("build-refdb", "build a reference sentence database");
    refdb->add_option("--input", refdb_args.input, "reference material (plain text)")->required();
    refdb->add_flag("--presegmented", refdb_args.presegmented, "input is one sentence per line");
    refdb->add_option("--tokenizer", refdb_args.tokenizer, "cjk-gram|whitespace");
    refdb->add_flag("--no-lowercase", refdb_args.no_lowercase, "keep letter case");
    refdb->add_flag("--keep-punctuation", refdb_args.keep_punctuation, "keep punctuation");
    refdb->add_option("--min-count", refdb_args.min_count, "vocabulary min count");
    refdb->add_option("--out", refdb_args.out, "refdb output file")->required();

    TrainForestArgs tf_args;
    auto* tf = app.add_subcommand("train-forest", "train the random-forest engine");
    tf->add_option("--dataset", tf_args.dataset, "training dataset JSONL")->required();
    tf->add_option("--kind", tf_args.kind, "annotation|dialog");
    tf->add_option("--codebook", tf_args.codebook, "codebook JSON")->required();
    tf->add_option("--trees", tf_args.trees, "number of trees (default 100)");
    tf->add_option("--seed", tf_args.seed, "master seed (default 42)");
    tf->add_option("--max-features", tf_args.max_features, "sqrt|all|fixed:K");
    tf->add_option("--min-samples-leaf", tf_args.min_samples_leaf, "minimum leaf size");
    tf->add_option("--max-depth", tf_args.max_depth, "depth cap (-1 = unlimited)");
    tf->add_flag("--no-bootstrap", tf_args.no_bootstrap, "train each tree on the full set");
    tf->add_option("--threads", tf_args.threads, "tree-building threads");
    tf->add_option("--tokenizer", tf_args.tokenizer, "cjk-gram|whitespace|external");
    tf->add_flag("--no-lowercase", tf_args.no_lowercase, "keep letter case");
    tf->add_flag("--keep-punctuation", tf_args.keep_punctuation, "keep punctuation");
    tf->add_option("--min-count", tf_args.min_count, "vocabulary min count");
    tf->add_flag("--concat-highlight", tf_args.concat_highlight,
                 "classify highlight+comment instead of comment only");
    tf->add_option("--out", tf_args.out, "model output file")->required();

    CodeForestArgs cf_args;
    auto* cf = app.add_subcommand("code-forest", "apply a trained forest to a dataset");
    cf->add_option("--model", cf_args.model, "model file from train-forest")->required();
    cf->add_option("--dataset", cf_args.dataset, "dataset JSONL")->required();
    cf->add_option("--kind", cf_args.kind, "annotation|dialog");
    cf->add_option("--engine-name", cf_args.engine_name, "name recorded in predictions");
    cf->add_option("--tokenizer", cf_args.tokenizer, "cjk-gram|whitespace|external");
    cf->add_flag("--no-lowercase", cf_args.no_lowercase, "keep letter case");
    cf->add_flag("--keep-punctuation", cf_args.keep_punctuation, "keep punctuation");
    cf->add_flag("--concat-highlight", cf_args.concat_highlight,
                 "classify highlight+comment instead of comment only");
    cf->add_option("--out", cf_args.out, "predictions output JSONL")->required();

    CodeLlmArgs cl_args;
    auto* cl = app.add_subcommand("code-llm", "code a dataset with an LLM strategy");
    cl->add_option("--dataset", cl_args.dataset, "dataset JSONL")->required();
    cl->add_option("--kind", cl_args.kind, "annotation|dialog");
    cl->add_option("--codebook", cl_args.codebook, "codebook JSON")->required();
    cl->add_option("--template", cl_args.tmpl, "prompt template JSON")->required();
    cl->add_option("--strategy", cl_args.strategy, "prompt-only|gate|gate+rag|dialog")
        ->required();
    cl->add_option("--refdb", cl_args.refdb, "reference database (gate strategies)");
    cl->add_option("--threshold", cl_args.threshold,
                   "gate similarity threshold tau (default 0.9; scores above it code directly)");
    cl->add_option("--direct-code", cl_args.direct_code, "code assigned by the gate");
    cl->add_option("--k", cl_args.k, "reference sentences to retrieve (gate+rag)");
    cl->add_flag("--no-two-step", cl_args.no_two_step, "skip the two-step instruction");
    cl->add_flag("--no-fewshot", cl_args.no_fewshot, "omit few-shot examples");
    cl->add_option("--mock", cl_args.mock, "mock script (hermetic run, no network)");
    cl->add_option("--cache-dir", cl_args.cache_dir,
                   "response cache directory (or DEDUKT_CACHE_DIR)");
    cl->add_option("--model", cl_args.model, "model name");
    cl->add_option("--base-url", cl_args.base_url, "provider base URL");
    cl->add_option("--temperature", cl_args.temperature, "sampling temperature");
    cl->add_option("--max-tokens", cl_args.max_tokens, "completion token cap");
    cl->add_option("--frequency-penalty", cl_args.frequency_penalty, "frequency penalty");
    cl->add_option("--presence-penalty", cl_args.presence_penalty, "presence penalty");
    cl->add_option("--max-retries", cl_args.max_retries, "transient-failure retries");
    cl->add_option("--concurrency", cl_args.concurrency, "max in-flight provider calls");
    cl->add_option("--retry-base-ms", cl_args.retry_base_ms, "backoff base in ms");
    cl->add_option("--out", cl_args.out, "predictions output JSONL")->required();

    ImportArgs im_args;
    auto* im = app.add_subcommand("import-preds", "import external predictions (CSV)");
    im->add_option("--preds", im_args.preds, "CSV with header item_id,label")->required();
    im->add_option("--dataset", im_args.dataset, "dataset JSONL")->required();
    im->add_option("--kind", im_args.kind, "annotation|dialog");
    im->add_option("--codebook", im_args.codebook, "codebook JSON")->required();
    im->add_option("--engine-name", im_args.engine_name, "name recorded in predictions");
    im->add_option("--out", im_args.out, "predictions output JSONL")->required();

    EvalArgs ev_args;
    auto* ev = app.add_subcommand("eval", "evaluate predictions against gold labels");
    ev->add_option("--preds", ev_args.preds, "predictions JSONL")->required();
    ev->add_option("--dataset", ev_args.dataset, "gold dataset JSONL")->required();
    ev->add_option("--kind", ev_args.kind, "annotation|dialog");
    ev->add_option("--codebook", ev_args.codebook, "codebook JSON")->required();
    ev->add_option("--failed-policy", ev_args.failed_policy, "exclude|count-as-wrong");
    ev->add_option("--zero-division", ev_args.zero_division, "zero|one");
    ev->add_option("--format", ev_args.format, "plain|markdown|record");
    ev->add_option("--out", ev_args.out, "machine-record report output")->required();

    ReportArgs rp_args;
    auto* rp = app.add_subcommand("report", "re-render a machine-record report");
    rp->add_option("--report", rp_args.report, "machine-record report file")->required();
    rp->add_option("--format", rp_args.format, "plain|markdown|record");

    FinetuneArgs ft_args;
    auto* ft = app.add_subcommand("export-finetune", "export a fine-tuning dataset");
    ft->add_option("--dataset", ft_args.dataset, "training dataset JSONL")->required();
    ft->add_option("--kind", ft_args.kind, "annotation|dialog");
    ft->add_option("--codebook", ft_args.codebook, "codebook JSON")->required();
    ft->add_option("--template", ft_args.tmpl, "prompt template JSON")->required();
    ft->add_option("--count", ft_args.count, "records to export")->required();
    ft->add_option("--seed", ft_args.seed, "sampling seed");
    ft->add_option("--epochs", ft_args.epochs, "epochs recorded in the manifest");
    ft->add_option("--base-model", ft_args.base_model, "base model recorded in the manifest");
    ft->add_flag("--no-fewshot", ft_args.no_fewshot, "omit few-shot examples from the system text");
    ft->add_option("--out", ft_args.out, "chat records output JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*split) return run_split(split_args);
        if (*refdb) return run_build_refdb(refdb_args);
        if (*tf) return run_train_forest(tf_args);
        if (*cf) return run_code_forest(cf_args);
        if (*cl) return run_code_llm(cl_args);
        if (*im) return run_import(im_args);
        if (*ev) return run_eval(ev_args);
        if (*rp) return run_report(rp_args);
        if (*ft) return run_export_finetune(ft_args);
    } catch (const dedukt::Error& e) {
        std::cerr << "error [" << dedukt::errc_name(e.code()) << "] " << e.what() << "\n";
        return dedukt::errc_is_runtime(e.code()) ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
