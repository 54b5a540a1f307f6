// Acceptance suite: one check per release criterion, one PASS/FAIL line
// each. Exit status is the number of failed criteria, so the suite can run
// under ctest. Every expected value is pinned here, not computed on the fly
// by the code under test (the metric oracle is an independent pairwise
// counter; printed table rows come from the published result tables).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dedukt/coder.hpp"
#include "dedukt/corpus.hpp"
#include "dedukt/detail/prng.hpp"
#include "dedukt/forest.hpp"
#include "dedukt/llm_gateway.hpp"
#include "dedukt/metrics.hpp"
#include "dedukt/refdb.hpp"
#include "dedukt/textproc.hpp"
#include "testutil.hpp"

using namespace dedukt;

namespace {

struct CriterionResult {
    bool pass = true;
    std::vector<std::string> notes;

    void fail(const std::string& note) {
        pass = false;
        notes.push_back(note);
    }
    void require(bool ok, const std::string& note) {
        if (!ok) fail(note);
    }
    void info(const std::string& note) { notes.push_back(note); }
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ------------------------------------------------------------------ 1

// Independent oracle: direct pairwise counting over label lists.
struct Brute {
    double accuracy = 0, macro_p = 0, macro_r = 0, macro_f = 0;
    double weighted_p = 0, weighted_r = 0, weighted_f = 0;
    double kappa = 0, p_e = 0;
    std::vector<double> p, r, f;
    std::vector<long> support;
};

Brute brute_force(const std::vector<int>& gold, const std::vector<int>& pred, int k) {
    Brute b;
    long n = static_cast<long>(gold.size());
    long correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] == pred[i]) ++correct;
    }
    b.accuracy = static_cast<double>(correct) / n;
    for (int c = 0; c < k; ++c) {
        long tp = 0, actual = 0, predicted = 0;
        for (std::size_t i = 0; i < gold.size(); ++i) {
            if (gold[i] == c) ++actual;
            if (pred[i] == c) ++predicted;
            if (gold[i] == c && pred[i] == c) ++tp;
        }
        double pp = predicted == 0 ? 0.0 : static_cast<double>(tp) / predicted;
        double rr = actual == 0 ? 0.0 : static_cast<double>(tp) / actual;
        double ff = pp + rr == 0.0 ? 0.0 : 2 * pp * rr / (pp + rr);
        b.p.push_back(pp);
        b.r.push_back(rr);
        b.f.push_back(ff);
        b.support.push_back(actual);
        b.macro_p += pp / k;
        b.macro_r += rr / k;
        b.macro_f += ff / k;
        double w = static_cast<double>(actual) / n;
        b.weighted_p += w * pp;
        b.weighted_r += w * rr;
        b.weighted_f += w * ff;
        b.p_e += (static_cast<double>(actual) / n) * (static_cast<double>(predicted) / n);
    }
    b.kappa = (b.accuracy - b.p_e) / (1.0 - b.p_e);
    return b;
}

ConfusionMatrix evaluate_lists(const std::vector<int>& gold, const std::vector<int>& pred, int k) {
    std::vector<DiscourseItem> items;
    PredictionSet preds;
    std::vector<CodeDef> defs;
    std::vector<std::string> codes;
    for (int c = 0; c < k; ++c) {
        codes.push_back("K" + std::to_string(c));
        defs.push_back({codes.back(), {"behavior"}, {}});
    }
    for (std::size_t i = 0; i < gold.size(); ++i) {
        std::string id = "i" + std::to_string(i);
        items.push_back(testutil::make_annotation(id, "c" + std::to_string(i), codes[gold[i]]));
        preds.entries.emplace(id, PredictionEntry{codes[pred[i]], PredStatus::Ok,
                                                  PredRoute::External, {}});
    }
    Codebook cb("oracle", defs);
    LabeledDataset ds(ItemKind::Annotation, std::move(items));
    return confusion_matrix(ds, preds, cb, FailedPolicy::Exclude);
}

CriterionResult criterion1_oracle_equivalence() {
    CriterionResult res;
    auto t0 = std::chrono::steady_clock::now();
    detail::SplitMix64 rng(20240501);
    const double tol = 1e-12;
    for (int trial = 0; trial < 1000 && res.pass; ++trial) {
        int k = 2 + static_cast<int>(rng.bounded(5));   // [2,6]
        int n = 1 + static_cast<int>(rng.bounded(500)); // [1,500]
        std::vector<int> gold(n), pred(n);
        for (int i = 0; i < n; ++i) {
            gold[i] = static_cast<int>(rng.bounded(k));
            pred[i] = static_cast<int>(rng.bounded(k));
        }
        auto cm = evaluate_lists(gold, pred, k);
        auto rows = per_class_metrics(cm);
        auto agg = aggregate_metrics(rows);
        auto oracle = brute_force(gold, pred, k);
        res.require(std::fabs(accuracy(cm) - oracle.accuracy) < tol, "accuracy mismatch");
        for (int c = 0; c < k; ++c) {
            res.require(std::fabs(rows[c].precision - oracle.p[c]) < tol, "precision mismatch");
            res.require(std::fabs(rows[c].recall - oracle.r[c]) < tol, "recall mismatch");
            res.require(std::fabs(rows[c].f1 - oracle.f[c]) < tol, "f1 mismatch");
            res.require(rows[c].support == oracle.support[c], "support mismatch");
        }
        res.require(std::fabs(agg.macro.precision - oracle.macro_p) < tol, "macro p mismatch");
        res.require(std::fabs(agg.macro.recall - oracle.macro_r) < tol, "macro r mismatch");
        res.require(std::fabs(agg.macro.f1 - oracle.macro_f) < tol, "macro f1 mismatch");
        res.require(std::fabs(agg.weighted.precision - oracle.weighted_p) < tol,
                    "weighted p mismatch");
        res.require(std::fabs(agg.weighted.recall - oracle.weighted_r) < tol,
                    "weighted r mismatch");
        res.require(std::fabs(agg.weighted.f1 - oracle.weighted_f) < tol,
                    "weighted f1 mismatch");
        if (oracle.p_e < 1.0) { // kappa undefined at p_e = 1 (single-cell marginals)
            auto kr = cohen_kappa(cm);
            res.require(std::fabs(kr.kappa - oracle.kappa) < tol, "kappa mismatch");
            res.require(std::fabs(kr.p_e - oracle.p_e) < tol, "p_e mismatch");
        }
    }
    double dt = elapsed_s(t0);
    res.require(dt < 5.0, "runtime " + fmt(dt) + "s exceeds 5s");
    res.info("1000 random pairs, runtime " + fmt(dt) + "s");
    return res;
}

// ------------------------------------------------------------------ 2

struct PrintedTable {
    std::string name;
    std::vector<ClassMetrics> rows; // printed per-class values + supports
    double macro_p, macro_r, macro_f;
    double weighted_p, weighted_r, weighted_f;
    double accuracy; // companion accuracy from the running text
};

std::vector<PrintedTable> printed_tables() {
    return {
        {"Table 3",
         {{"A", 0.56, 0.33, 0.42, 30}, {"C1", 0.55, 0.89, 0.68, 53}, {"C2", 0.63, 0.30, 0.41, 40}},
         0.58, 0.51, 0.50, 0.58, 0.56, 0.53, 0.56},
        {"Table 4",
         {{"M", 1.00, 0.62, 0.76, 13},
          {"P", 1.00, 0.25, 0.40, 20},
          {"A", 0.32, 1.00, 0.49, 12},
          {"C", 0.45, 0.54, 0.49, 28},
          {"I", 0.00, 0.00, 0.00, 11}},
         0.56, 0.48, 0.43, 0.59, 0.48, 0.45, 0.48},
        {"Table 5",
         {{"A", 0.64, 0.47, 0.54, 30}, {"C1", 0.66, 0.75, 0.70, 53}, {"C2", 0.47, 0.47, 0.48, 40}},
         0.59, 0.57, 0.57, 0.59, 0.59, 0.59, 0.59},
        {"Table 6",
         {{"M", 0.00, 0.00, 0.00, 13},
          {"P", 0.90, 0.95, 0.93, 20},
          {"A", 0.92, 0.92, 0.92, 12},
          {"C", 0.51, 0.93, 0.66, 28},
          {"I", 0.00, 0.00, 0.00, 11}},
         0.47, 0.56, 0.50, 0.52, 0.67, 0.57, 0.67},
        {"Table 10",
         {{"A", 0.85, 0.73, 0.79, 30}, {"C1", 0.68, 0.83, 0.75, 53}, {"C2", 0.66, 0.53, 0.58, 40}},
         0.73, 0.70, 0.70, 0.71, 0.71, 0.70, 0.71},
        {"Table 11",
         {{"M", 0.67, 0.92, 0.77, 13},
          {"P", 0.90, 0.90, 0.90, 20},
          {"A", 0.77, 0.83, 0.80, 12},
          {"C", 0.64, 0.75, 0.69, 28},
          {"I", 1.00, 0.00, 0.00, 11}},
         0.79, 0.68, 0.63, 0.77, 0.73, 0.68, 0.73},
        {"Table 12",
         {{"M", 1.00, 0.62, 0.76, 13},
          {"P", 0.83, 0.95, 0.88, 20},
          {"A", 0.80, 1.00, 0.89, 12},
          {"C", 0.67, 0.86, 0.75, 28},
          {"I", 1.00, 0.18, 0.31, 11}},
         0.86, 0.72, 0.72, 0.82, 0.77, 0.75, 0.77},
    };
}

CriterionResult criterion2_paper_aggregates() {
    CriterionResult res;
    auto t0 = std::chrono::steady_clock::now();
    const double tol = 0.005;
    int comparisons = 0, misses = 0;
    for (const auto& table : printed_tables()) {
        auto agg = aggregate_metrics(table.rows);
        struct Cell {
            const char* name;
            double recomputed, printed;
        } cells[] = {
            {"macro precision", agg.macro.precision, table.macro_p},
            {"macro recall", agg.macro.recall, table.macro_r},
            {"macro f1", agg.macro.f1, table.macro_f},
            {"weighted precision", agg.weighted.precision, table.weighted_p},
            {"weighted recall", agg.weighted.recall, table.weighted_r},
            {"weighted f1", agg.weighted.f1, table.weighted_f},
            {"companion accuracy (= weighted recall)", agg.weighted.recall, table.accuracy},
        };
        for (const auto& cell : cells) {
            ++comparisons;
            double d = std::fabs(cell.recomputed - cell.printed);
            if (d > tol) {
                ++misses;
                res.fail(table.name + " " + cell.name + ": recomputed " + fmt(cell.recomputed) +
                         " vs printed " + fmt(cell.printed) + " (|d| " + fmt(d) + " > 0.005)");
            }
        }
    }
    double dt = elapsed_s(t0);
    res.require(dt < 1.0, "runtime " + fmt(dt) + "s exceeds 1s");
    res.info(std::to_string(comparisons - misses) + "/" + std::to_string(comparisons) +
             " aggregate cells within ±0.005 when recomputed from the printed 2-decimal "
             "per-class values");
    if (misses > 0) {
        res.info("the failing cells are arithmetic consequences of feeding 2-decimal inputs: "
                 "aggregating the tables' underlying exact ratios reproduces every printed "
                 "value, but the printed per-class values carry up to ±0.005 quantization "
                 "each, which can push an aggregate past the same ±0.005 window");
    }
    return res;
}

// ------------------------------------------------------------------ 3

CriterionResult criterion3_f1_spot_checks() {
    CriterionResult res;
    // direct harmonic mean of the printed pair
    double f_a = 2 * 0.85 * 0.73 / (0.85 + 0.73);
    res.require(format_rate_2dp(f_a) == "0.79",
                "f1(0.85, 0.73) renders " + format_rate_2dp(f_a) + ", expected 0.79");

    // published discussion row M: support 13, every prediction of M correct
    // (p = 1.00), 8 of 13 found (r -> 0.62): cells TP=8, FN=5, FP=0
    auto cm_m = confusion_from_counts({"M", "rest"}, {{8, 5}, {0, 71}});
    auto rows_m = per_class_metrics(cm_m);
    res.require(format_rate_2dp(rows_m[0].precision) == "1.00", "row M precision != 1.00");
    res.require(format_rate_2dp(rows_m[0].recall) == "0.62", "row M recall != 0.62");
    res.require(format_rate_2dp(rows_m[0].f1) == "0.76",
                "row M f1 renders " + format_rate_2dp(rows_m[0].f1) + ", expected 0.76");

    // published annotation row A: TP=22 of support 30, 26 predicted
    auto cm_a = confusion_from_counts({"A", "rest"}, {{22, 8}, {4, 89}});
    auto rows_a = per_class_metrics(cm_a);
    res.require(format_rate_2dp(rows_a[0].precision) == "0.85", "row A precision != 0.85");
    res.require(format_rate_2dp(rows_a[0].recall) == "0.73", "row A recall != 0.73");
    res.require(format_rate_2dp(rows_a[0].f1) == "0.79", "row A f1 != 0.79");
    return res;
}

// ------------------------------------------------------------------ 4

CriterionResult criterion4_kappa_properties() {
    CriterionResult res;
    auto perfect = confusion_from_counts({"A", "B", "C"}, {{5, 0, 0}, {0, 7, 0}, {0, 0, 3}});
    res.require(std::fabs(cohen_kappa(perfect).kappa - 1.0) < 1e-12, "perfect kappa != 1");

    auto uniform = confusion_from_counts({"A", "B"}, {{1, 1}, {1, 1}});
    res.require(std::fabs(cohen_kappa(uniform).kappa) < 1e-12, "uniform 2x2 kappa != 0");

    auto hand = confusion_from_counts({"A", "B"}, {{40, 10}, {20, 30}});
    res.require(std::fabs(cohen_kappa(hand).kappa - 0.40) < 1e-12,
                "[[40,10],[20,30]] kappa != 0.40");

    auto constant = confusion_from_counts({"A", "B", "C"}, {{9, 0, 0}, {6, 0, 0}, {5, 0, 0}});
    res.require(cohen_kappa(constant).kappa == 0.0, "constant predictor kappa != 0 exactly");

    detail::SplitMix64 rng(4242);
    for (int trial = 0; trial < 100; ++trial) {
        int k = 2 + static_cast<int>(rng.bounded(5));
        std::vector<std::vector<long>> counts(k, std::vector<long>(k));
        for (auto& row : counts) {
            for (auto& c : row) c = static_cast<long>(rng.bounded(25));
        }
        counts[0][0] += 1; // nonempty
        counts[1][1] += 1; // avoid degenerate single-cell marginals
        std::vector<int> perm(k);
        for (int i = 0; i < k; ++i) perm[i] = i;
        detail::shuffle(perm, rng);
        std::vector<std::vector<long>> permuted(k, std::vector<long>(k));
        for (int i = 0; i < k; ++i) {
            for (int j = 0; j < k; ++j) permuted[perm[i]][perm[j]] = counts[i][j];
        }
        std::vector<std::string> labels, plabels(k);
        for (int i = 0; i < k; ++i) labels.push_back("K" + std::to_string(i));
        for (int i = 0; i < k; ++i) plabels[perm[i]] = labels[i];
        auto ka = cohen_kappa(confusion_from_counts(labels, counts)).kappa;
        auto kb = cohen_kappa(confusion_from_counts(plabels, permuted)).kappa;
        res.require(std::fabs(ka - kb) < 1e-12, "kappa changed under label permutation");
    }
    return res;
}

// ------------------------------------------------------------------ 5

CriterionResult criterion5_forest() {
    CriterionResult res;
    auto t0 = std::chrono::steady_clock::now();
    std::vector<CodeDef> defs = {{"W", {"w"}, {}}, {"X", {"x"}, {}}, {"Y", {"y"}, {}},
                                 {"Z", {"z"}, {}}};
    Codebook cb("four-class", defs);
    auto corpus = testutil::separable_corpus(200, 4, {"W", "X", "Y", "Z"}, 31337);
    auto vocab = build_vocabulary(corpus.docs, 1);
    std::vector<TermVector> vectors;
    for (const auto& d : corpus.docs) vectors.push_back(vectorize(d, vocab));

    // deterministic 80/20 split of the 200 documents
    std::vector<int> order(vectors.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    detail::SplitMix64 rng(7);
    detail::shuffle(order, rng);
    std::vector<TermVector> train_x, test_x;
    std::vector<std::string> train_y, test_y;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i < 160) {
            train_x.push_back(vectors[order[i]]);
            train_y.push_back(corpus.labels[order[i]]);
        } else {
            test_x.push_back(vectors[order[i]]);
            test_y.push_back(corpus.labels[order[i]]);
        }
    }

    ForestParams params; // 100 trees, seed 42
    auto model_serial = train_forest(train_x, train_y, params, cb, vocab.fingerprint());
    TrainOptions parallel;
    parallel.n_threads = 4;
    auto model_parallel =
        train_forest(train_x, train_y, params, cb, vocab.fingerprint(), parallel);
    auto model_again = train_forest(train_x, train_y, params, cb, vocab.fingerprint());

    res.require(model_digest(model_serial) == model_digest(model_parallel),
                "parallel build digest differs from serial");
    res.require(model_digest(model_serial) == model_digest(model_again),
                "repeated build digest differs");

    int correct = 0;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
        auto a = predict_label(model_serial, test_x[i]);
        auto b = predict_label(model_parallel, test_x[i]);
        res.require(a.label == b.label && a.votes == b.votes,
                    "serial/parallel predictions differ");
        if (a.label == test_y[i]) ++correct;
    }
    double held_out = static_cast<double>(correct) / static_cast<double>(test_x.size());
    res.require(held_out >= 0.95, "held-out accuracy " + fmt(held_out) + " < 0.95");
    double dt = elapsed_s(t0);
    res.require(dt < 10.0, "runtime " + fmt(dt) + "s exceeds 10s");
    res.info("held-out accuracy " + fmt(held_out) + ", runtime " + fmt(dt) + "s");
    return res;
}

// ------------------------------------------------------------------ 6

CriterionResult criterion6_cosine() {
    CriterionResult res;
    TermVector a, b;
    a.dimension = b.dimension = 3;
    a.counts = {{0, 1}, {1, 1}};
    b.counts = {{0, 1}, {2, 1}};
    res.require(std::fabs(cosine_similarity(a, b) - 0.5) < 1e-12, "hand case != 0.5");

    detail::SplitMix64 rng(606);
    const int dim = 32;
    auto random_vec = [&]() {
        TermVector v;
        v.dimension = dim;
        for (int id = 0; id < dim; ++id) {
            if (rng.bounded(3) == 0) v.counts.emplace_back(id, 1 + static_cast<int>(rng.bounded(12)));
        }
        if (v.counts.empty()) v.counts.emplace_back(static_cast<int>(rng.bounded(dim)), 1);
        return v;
    };
    for (int trial = 0; trial < 10000; ++trial) {
        auto x = random_vec();
        auto y = random_vec();
        double xy = cosine_similarity(x, y);
        res.require(xy == cosine_similarity(y, x), "symmetry not exact");
        res.require(xy >= 0.0 && xy <= 1.0, "similarity out of [0,1]");
        res.require(cosine_similarity(x, x) >= 1.0 - 1e-12, "self-similarity < 1 - 1e-12");
        TermVector scaled = x;
        int k = 2 + static_cast<int>(rng.bounded(9));
        for (auto& [id, c] : scaled.counts) c *= k;
        res.require(std::fabs(cosine_similarity(scaled, y) - xy) < 1e-9,
                    "scale invariance beyond 1e-9");
        if (!res.pass) break;
    }
    return res;
}

// ------------------------------------------------------------------ 7

CriterionResult criterion7_gate() {
    CriterionResult res;
    TokenizerConfig ws;
    ws.mode = TokenizerMode::Whitespace;
    std::vector<std::string> refs = {"the plum endures the frost unbent",
                                     "chrysanthemums follow in the autumn wind"};
    auto db = build_refdb(refs, ws, 1);

    // strict-threshold semantics: a score exactly equal to tau defers
    auto partial = testutil::make_annotation("p", "the plum endures");
    GateConfig probe;
    probe.threshold = 0.0;
    auto score = gate_route(partial, db, probe).best_score;
    GateConfig exact;
    exact.threshold = score;
    res.require(!gate_route(partial, db, exact).direct, "score == tau did not defer");

    // exact copy routes Direct("A") for every tau < 1
    auto copy = testutil::make_annotation("c", refs[0]);
    for (double tau : {0.5, 0.7, 0.9, 0.99, 0.999}) {
        GateConfig g;
        g.threshold = tau;
        auto r = gate_route(copy, db, g);
        res.require(r.direct && r.code == "A",
                    "exact copy not Direct(A) at tau " + fmt(tau));
    }

    // monotone shrinkage of the Direct set over the tau grid
    auto ds = testutil::synthetic_annotations(30);
    std::vector<std::string> mixed_refs;
    for (int i = 0; i < 10; ++i) mixed_refs.push_back(ds.items()[i].comment);
    auto db2 = build_refdb(mixed_refs, ws, 1);
    std::vector<std::set<std::string>> direct_sets;
    for (double tau : {0.5, 0.7, 0.9, 0.99}) {
        GateConfig g;
        g.threshold = tau;
        std::set<std::string> direct;
        for (const auto& item : ds.items()) {
            if (gate_route(item, db2, g).direct) direct.insert(item.id);
        }
        direct_sets.push_back(std::move(direct));
    }
    res.require(!direct_sets[0].empty(), "tau 0.5 routed nothing (fixture broken)");
    for (std::size_t i = 1; i < direct_sets.size(); ++i) {
        for (const auto& id : direct_sets[i]) {
            res.require(direct_sets[i - 1].count(id) == 1,
                        "Direct set grew when tau increased");
        }
    }

    // gated items generate zero gateway calls
    testutil::TempDir tmp("acc_gate");
    auto cb = testutil::annotation_codebook();
    auto tmpl = testutil::annotation_template();
    std::string mock;
    for (const auto& item : ds.items()) {
        nlohmann::json rule = {{"substring", item.comment}, {"reply", item.gold_label}};
        mock += rule.dump() + "\n";
    }
    testutil::write_text(tmp.file("mock.jsonl"), mock);
    LlmConfig cfg;
    cfg.mock_script = tmp.file("mock.jsonl");
    LlmGateway gw(cfg);
    StrategyConfig strategy;
    strategy.strategy = Strategy::GateThenPrompt;
    strategy.gate = GateConfig{0.9, "A"};
    auto preds = code_dataset(ds, cb, tmpl, strategy, &db2, gw);
    long direct_count = 0;
    for (const auto& [id, e] : preds.entries) {
        if (e.route == PredRoute::DirectGate) ++direct_count;
    }
    res.require(direct_count >= 10, "expected the 10 copied items to gate directly");
    res.require(gw.stats().provider_calls ==
                    static_cast<long>(ds.size()) - direct_count,
                "gateway call count does not exclude gated items");
    return res;
}

// ------------------------------------------------------------------ 8

std::string render_request(const ChatRequest& req) {
    std::string out;
    for (const auto& m : req.messages) {
        out += "=== " + m.role + " ===\n" + m.content + "\n";
    }
    return out;
}

std::string read_golden(const std::string& name) {
    std::ifstream in(std::string(DEDUKT_TESTS_DIR) + "/golden/" + name, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CriterionResult criterion8_golden_prompts() {
    CriterionResult res;
    auto cb = testutil::annotation_codebook();
    auto tmpl = testutil::annotation_template();
    auto item = testutil::make_annotation(
        "a7", "The plum endures the coldest months and blooms before every other flower.", "C1",
        "Plum blossoms bloom in the harsh winter.");

    auto full = render_request(build_annotation_prompt(cb, tmpl, item, PromptVariant::full()));
    res.require(full == read_golden("prompt_full.txt"), "full prompt drifted from golden");

    auto gate = render_request(
        build_annotation_prompt(cb, tmpl, item, PromptVariant::without_direct_code("A")));
    res.require(gate == read_golden("prompt_without_direct.txt"),
                "gate prompt drifted from golden");
    res.require(gate.find("Code A:") == std::string::npos, "direct code rules still present");
    res.require(gate.find(cb.codes()[0].behaviors[0]) == std::string::npos,
                "direct code's behavior text still present");

    std::vector<std::string> refs = {
        "Plum blossoms bloom ahead of every flower in the cold season.",
        "Poets saw their own perseverance in the winter plum."};
    auto rag = render_request(
        build_annotation_prompt(cb, tmpl, item, PromptVariant::with_references(refs, 2, true)));
    res.require(rag == read_golden("prompt_with_refs.txt"), "rag prompt drifted from golden");
    res.require(rag.find("Reference1: ") != std::string::npos, "missing Reference1 block");
    res.require(rag.find("Reference2: ") != std::string::npos, "missing Reference2 block");

    auto dcb = testutil::discussion_codebook();
    PromptTemplate dtmpl;
    dtmpl.background = "Groups of students analyze chrysanthemum poems through text chat.";
    dtmpl.instructions = "Assign exactly one code from the encoding rules to the marked turn.";
    dtmpl.output_format = "Reply with the code identifier only, for example: M";
    dtmpl.fewshot_examples = {{"Let us split up the stanzas.", "M"}, {"Yeah, you're right.", "A"}};
    std::vector<DiscourseItem> turns = {
        testutil::make_turn("t0", "g1", 0, "s1", "Let us start with the translation.", "M"),
        testutil::make_turn("t1", "g1", 1, "s2", "The first line mourns the fading light.", "C"),
        testutil::make_turn("t2", "g1", 2, "s3", "Yeah, you're right.", "A")};
    std::vector<const DiscourseItem*> ptrs;
    for (const auto& t : turns) ptrs.push_back(&t);
    auto dialog = render_request(build_dialog_prompt(dcb, dtmpl, ptrs, 1));
    res.require(dialog == read_golden("prompt_dialog.txt"), "dialog prompt drifted from golden");
    return res;
}

// ------------------------------------------------------------------ 9

CriterionResult criterion9_hermetic_end_to_end() {
    CriterionResult res;
    auto t0 = std::chrono::steady_clock::now();
    auto ds = testutil::synthetic_annotations(30);
    auto cb = testutil::annotation_codebook();
    auto tmpl = testutil::annotation_template();
    StrategyConfig strategy;
    strategy.strategy = Strategy::PromptOnly;

    { // gold-echo mock: perfect agreement
        testutil::TempDir tmp("acc_e2e1");
        std::string mock;
        for (const auto& item : ds.items()) {
            nlohmann::json rule = {{"substring", item.comment}, {"reply", item.gold_label}};
            mock += rule.dump() + "\n";
        }
        testutil::write_text(tmp.file("mock.jsonl"), mock);
        LlmConfig cfg;
        cfg.mock_script = tmp.file("mock.jsonl");
        LlmGateway gw(cfg);
        auto preds = code_dataset(ds, cb, tmpl, strategy, nullptr, gw);
        auto rep = build_report(confusion_matrix(ds, preds, cb, FailedPolicy::Exclude));
        res.require(rep.accuracy == 1.0, "gold-echo accuracy != 1.00");
        res.require(std::fabs(rep.kappa - 1.0) < 1e-12, "gold-echo kappa != 1.00");
    }

    { // constant-label mock: kappa exactly zero
        testutil::TempDir tmp("acc_e2e2");
        testutil::write_text(tmp.file("mock.jsonl"), R"({"substring":"Comment: ","reply":"A"})"
                                                     "\n");
        LlmConfig cfg;
        cfg.mock_script = tmp.file("mock.jsonl");
        LlmGateway gw(cfg);
        auto preds = code_dataset(ds, cb, tmpl, strategy, nullptr, gw);
        auto rep = build_report(confusion_matrix(ds, preds, cb, FailedPolicy::Exclude));
        res.require(std::fabs(rep.kappa) < 1e-12, "constant-label kappa != 0");
    }

    { // one double-garbage item: exactly one Failed, reported as excluded
        testutil::TempDir tmp("acc_e2e3");
        std::string mock;
        for (const auto& item : ds.items()) {
            nlohmann::json rule = {{"substring", item.comment},
                                   {"reply", item.id == "a5" ? "garbage" : item.gold_label}};
            mock += rule.dump() + "\n";
        }
        nlohmann::json retry_rule = {{"substring", std::string(prompts::kFormatReminder)},
                                     {"reply", "garbage"}};
        mock += retry_rule.dump() + "\n";
        testutil::write_text(tmp.file("mock.jsonl"), mock);
        LlmConfig cfg;
        cfg.mock_script = tmp.file("mock.jsonl");
        LlmGateway gw(cfg);
        auto preds = code_dataset(ds, cb, tmpl, strategy, nullptr, gw); // must not throw
        long failed = 0;
        for (const auto& [id, e] : preds.entries) {
            if (e.status == PredStatus::Failed) ++failed;
        }
        res.require(failed == 1, "expected exactly one Failed item, got " + std::to_string(failed));
        auto rep = build_report(confusion_matrix(ds, preds, cb, FailedPolicy::Exclude));
        res.require(rep.excluded_failed == 1, "report does not show excluded_failed = 1");
        auto rendered = render_report(rep, ReportFormat::PlainTable);
        res.require(rendered.find("excluded_failed: 1") != std::string::npos,
                    "rendered report missing excluded_failed line");
    }

    double dt = elapsed_s(t0);
    res.require(dt < 5.0, "runtime " + fmt(dt) + "s exceeds 5s");
    res.info("3 mock pipelines, runtime " + fmt(dt) + "s, no network");
    return res;
}

// ------------------------------------------------------------------ 10

CriterionResult criterion10_finetune_export() {
    CriterionResult res;
    testutil::TempDir tmp("acc_ft");
    auto ds = testutil::synthetic_annotations(120);
    auto cb = testutil::annotation_codebook();
    auto tmpl = testutil::annotation_template();
    FinetuneExportConfig cfg;
    cfg.sample_count = 90;
    auto m1 = export_finetune_dataset(ds, cb, tmpl, cfg, tmp.file("ft.jsonl"));
    auto m2 = export_finetune_dataset(ds, cb, tmpl, cfg, tmp.file("ft_again.jsonl"));
    res.require(m1.content_digest == m2.content_digest, "export not deterministic");

    std::string content = dedukt::detail::read_file(tmp.file("ft.jsonl"), "acc");
    int records = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) break;
        auto j = nlohmann::json::parse(content.substr(pos, eol - pos));
        pos = eol + 1;
        ++records;
        if (j["messages"].size() != 3 || j["messages"][0]["role"] != "system" ||
            j["messages"][1]["role"] != "user" || j["messages"][2]["role"] != "assistant") {
            res.fail("record " + std::to_string(records) + " is not system/user/assistant");
            break;
        }
        std::string id = m1.sample_ids[records - 1];
        const DiscourseItem* item = ds.find(id);
        if (item == nullptr ||
            j["messages"][2]["content"].get<std::string>() != item->gold_label) {
            res.fail("assistant content is not the sampled item's gold code");
            break;
        }
    }
    res.require(records == 90, "expected 90 records, found " + std::to_string(records));

    auto manifest = nlohmann::json::parse(
        dedukt::detail::read_file(tmp.file("ft.jsonl") + ".manifest.json", "acc"));
    res.require(manifest["epochs"] == 3, "manifest epochs != 3");
    res.require(manifest["base_model"] == "gpt-3.5-turbo", "manifest base model missing");
    res.require(manifest["content_digest"] == m1.content_digest, "manifest digest mismatch");
    return res;
}

// ------------------------------------------------------------------ 11

CriterionResult criterion11_split_bookkeeping() {
    CriterionResult res;
    {
        auto ds = testutil::synthetic_annotations(607);
        SplitSpec spec;
        spec.seed = 42;
        spec.explicit_counts = {{484, 123}};
        auto [tr, te] = split_dataset(ds, spec);
        res.require(tr.size() == 484 && te.size() == 123, "607 != 484 + 123 partition");
        std::set<std::string> ids;
        for (const auto& it : tr.items()) ids.insert(it.id);
        for (const auto& it : te.items()) ids.insert(it.id);
        res.require(ids.size() == 607, "explicit split is not a partition");
    }
    {
        auto ds = testutil::synthetic_annotations(404);
        SplitSpec spec;
        spec.seed = 42;
        spec.explicit_counts = {{320, 84}};
        auto [tr, te] = split_dataset(ds, spec);
        res.require(tr.size() == 320 && te.size() == 84, "404 != 320 + 84 partition");
    }
    detail::SplitMix64 rng(1101);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 2 + static_cast<int>(rng.bounded(600));
        auto ds = testutil::synthetic_annotations(n);
        SplitSpec spec;
        spec.train_ratio = 0.8;
        spec.seed = rng.next();
        auto [tr, te] = split_dataset(ds, spec);
        res.require(tr.size() == static_cast<std::size_t>(std::floor(0.8 * n)),
                    "train size != floor(0.8 N)");
        res.require(tr.size() + te.size() == ds.size(), "split sizes do not sum");
        std::set<std::string> ids;
        for (const auto& it : tr.items()) ids.insert(it.id);
        for (const auto& it : te.items()) ids.insert(it.id);
        res.require(ids.size() == ds.size(), "split is not a disjoint partition");
        if (!res.pass) break;
    }
    return res;
}

} // namespace

int main() {
    struct Criterion {
        int number;
        const char* name;
        std::function<CriterionResult()> run;
    };
    std::vector<Criterion> criteria = {
        {1, "metric oracle equivalence (1e-12, < 5 s)", criterion1_oracle_equivalence},
        {2, "published aggregate recomputation (±0.005, < 1 s)", criterion2_paper_aggregates},
        {3, "f1 spot checks under 2-decimal rendering", criterion3_f1_spot_checks},
        {4, "kappa properties and permutation invariance", criterion4_kappa_properties},
        {5, "forest determinism and held-out power (< 10 s)", criterion5_forest},
        {6, "cosine similarity suite (10,000 pairs)", criterion6_cosine},
        {7, "gate semantics, monotonicity, zero gated calls", criterion7_gate},
        {8, "golden prompts byte-match", criterion8_golden_prompts},
        {9, "hermetic end-to-end mock pipelines (< 5 s)", criterion9_hermetic_end_to_end},
        {10, "fine-tune export shape and determinism", criterion10_finetune_export},
        {11, "split bookkeeping (explicit counts + ratio property)", criterion11_split_bookkeeping},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        CriterionResult result;
        try {
            result = c.run();
        } catch (const std::exception& e) {
            result.fail(std::string("exception: ") + e.what());
        }
        std::printf("[%s] criterion %2d: %s\n", result.pass ? "PASS" : "FAIL", c.number, c.name);
        for (const auto& note : result.notes) {
            std::printf("         - %s\n", note.c_str());
        }
        if (!result.pass) ++failures;
    }
    if (failures > 0) {
        std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    } else {
        std::printf("all %zu criteria passed\n", criteria.size());
    }
    return failures;
}
