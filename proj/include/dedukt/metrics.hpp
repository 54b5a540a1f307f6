#pragma once
// Evaluation harness: confusion matrix, accuracy, per-class
// precision/recall/F1 with macro and weighted aggregates, Cohen's kappa,
// and report rendering. All computation happens at full double precision;
// two-decimal half-up rounding is applied only when rendering tables.

#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"

#include "dedukt/corpus.hpp"
#include "dedukt/error.hpp"

namespace dedukt {

enum class FailedPolicy { Exclude, CountAsWrong };
enum class ZeroDivision { Zero, One };

struct ConfusionMatrix {
    std::vector<std::string> labels;              // canonical codebook order
    std::vector<std::vector<long>> counts;        // counts[true][pred]
    std::vector<long> failed_by_class;            // CountAsWrong: failed items per true class
    long excluded_failed = 0;                     // Exclude: failed items left out of N

    int k() const { return static_cast<int>(labels.size()); }

    long trace() const {
        long t = 0;
        for (int i = 0; i < k(); ++i) t += counts[i][i];
        return t;
    }

    long row_total(int i) const {
        long t = failed_by_class.empty() ? 0 : failed_by_class[i];
        for (int j = 0; j < k(); ++j) t += counts[i][j];
        return t;
    }

    long col_total(int j) const {
        long t = 0;
        for (int i = 0; i < k(); ++i) t += counts[i][j];
        return t;
    }

    long total() const {
        long t = 0;
        for (int i = 0; i < k(); ++i) t += row_total(i);
        return t;
    }
};

inline ConfusionMatrix confusion_from_counts(std::vector<std::string> labels,
                                             std::vector<std::vector<long>> counts) {
    ConfusionMatrix cm;
    cm.labels = std::move(labels);
    cm.counts = std::move(counts);
    cm.failed_by_class.assign(cm.labels.size(), 0);
    if (cm.counts.size() != cm.labels.size()) {
        throw Error(Errc::DimensionMismatch, "metrics", "counts matrix is not square over labels");
    }
    for (const auto& row : cm.counts) {
        if (row.size() != cm.labels.size()) {
            throw Error(Errc::DimensionMismatch, "metrics", "counts matrix is not square");
        }
    }
    return cm;
}

// Builds the K x K matrix from gold labels and a prediction set. Failed
// predictions either shrink N (Exclude, reported via excluded_failed) or
// count as off-diagonal mass against their true class (CountAsWrong).
inline ConfusionMatrix confusion_matrix(const LabeledDataset& gold, const PredictionSet& preds,
                                        const Codebook& codebook, FailedPolicy policy) {
    ConfusionMatrix cm;
    cm.labels = codebook.labels();
    cm.counts.assign(codebook.size(), std::vector<long>(codebook.size(), 0));
    cm.failed_by_class.assign(codebook.size(), 0);
    long included = 0;
    for (const auto& [id, entry] : preds.entries) {
        const DiscourseItem* item = gold.find(id);
        if (item == nullptr) {
            throw Error(Errc::UnknownId, "metrics", "prediction for unknown item '" + id + "'");
        }
        if (!item->has_gold()) {
            throw Error(Errc::MissingGold, "metrics", "item '" + id + "' has no gold label");
        }
        auto ti = codebook.find(item->gold_label);
        if (!ti) {
            throw Error(Errc::UnknownLabel, "metrics",
                        "gold label '" + item->gold_label + "' is not in the codebook");
        }
        if (entry.status == PredStatus::Failed) {
            if (policy == FailedPolicy::Exclude) {
                ++cm.excluded_failed;
            } else {
                ++cm.failed_by_class[*ti];
                ++included;
            }
            continue;
        }
        auto pi = codebook.find(entry.label);
        if (!pi) {
            throw Error(Errc::UnknownLabel, "metrics",
                        "predicted label '" + entry.label + "' is not in the codebook");
        }
        ++cm.counts[*ti][*pi];
        ++included;
    }
    if (included == 0) {
        throw Error(Errc::EmptyEvaluation, "metrics", "no evaluable predictions");
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    long n = cm.total();
    if (n < 1) throw Error(Errc::EmptyEvaluation, "metrics", "empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(n);
}

struct ClassMetrics {
    std::string code;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
};

inline std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& cm,
                                                   ZeroDivision zero_division = ZeroDivision::Zero) {
    if (cm.total() < 1) throw Error(Errc::EmptyEvaluation, "metrics", "empty confusion matrix");
    double on_zero = zero_division == ZeroDivision::Zero ? 0.0 : 1.0;
    std::vector<ClassMetrics> out;
    out.reserve(cm.labels.size());
    for (int c = 0; c < cm.k(); ++c) {
        ClassMetrics m;
        m.code = cm.labels[c];
        long tp = cm.counts[c][c];
        long predicted = cm.col_total(c);
        long actual = cm.row_total(c);
        m.support = actual;
        m.precision = predicted == 0 ? on_zero : static_cast<double>(tp) / predicted;
        m.recall = actual == 0 ? on_zero : static_cast<double>(tp) / actual;
        double pr = m.precision + m.recall;
        m.f1 = pr == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / pr;
        out.push_back(std::move(m));
    }
    return out;
}

struct Aggregate {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct Aggregates {
    Aggregate macro;
    Aggregate weighted;
};

// Macro: unweighted mean over all classes. Weighted: support-weighted mean.
inline Aggregates aggregate_metrics(const std::vector<ClassMetrics>& rows) {
    if (rows.empty()) {
        throw Error(Errc::EmptyEvaluation, "metrics", "no per-class rows to aggregate");
    }
    long n = 0;
    for (const auto& r : rows) n += r.support;
    if (n == 0) {
        throw Error(Errc::EmptyEvaluation, "metrics", "all classes have zero support");
    }
    Aggregates agg;
    for (const auto& r : rows) {
        agg.macro.precision += r.precision;
        agg.macro.recall += r.recall;
        agg.macro.f1 += r.f1;
        double w = static_cast<double>(r.support) / static_cast<double>(n);
        agg.weighted.precision += w * r.precision;
        agg.weighted.recall += w * r.recall;
        agg.weighted.f1 += w * r.f1;
    }
    auto k = static_cast<double>(rows.size());
    agg.macro.precision /= k;
    agg.macro.recall /= k;
    agg.macro.f1 /= k;
    return agg;
}

struct KappaResult {
    double kappa = 0.0;
    double p_o = 0.0;
    double p_e = 0.0;
};

// Cohen's kappa: (p_o - p_e) / (1 - p_e) with p_e from row/column marginals.
// A failed column (CountAsWrong) contributes no chance agreement because no
// item is ever gold-labeled "failed".
inline KappaResult cohen_kappa(const ConfusionMatrix& cm) {
    long n = cm.total();
    if (n < 1) throw Error(Errc::EmptyEvaluation, "metrics", "empty confusion matrix");
    KappaResult r;
    r.p_o = static_cast<double>(cm.trace()) / static_cast<double>(n);
    double nn = static_cast<double>(n) * static_cast<double>(n);
    for (int c = 0; c < cm.k(); ++c) {
        r.p_e += static_cast<double>(cm.row_total(c)) * static_cast<double>(cm.col_total(c)) / nn;
    }
    if (r.p_e >= 1.0) {
        throw Error(Errc::DegenerateMarginals, "metrics",
                    "expected agreement is 1; kappa is undefined");
    }
    r.kappa = (r.p_o - r.p_e) / (1.0 - r.p_e);
    return r;
}

struct MetricsReport {
    std::string engine_name;
    std::vector<ClassMetrics> per_class;
    Aggregate macro_avg;
    Aggregate weighted_avg;
    double accuracy = 0.0;
    double kappa = 0.0;
    double p_o = 0.0;
    double p_e = 0.0;
    long excluded_failed = 0;
};

inline MetricsReport build_report(const ConfusionMatrix& cm,
                                  ZeroDivision zero_division = ZeroDivision::Zero,
                                  std::string engine_name = {}) {
    MetricsReport rep;
    rep.engine_name = std::move(engine_name);
    rep.per_class = per_class_metrics(cm, zero_division);
    auto agg = aggregate_metrics(rep.per_class);
    rep.macro_avg = agg.macro;
    rep.weighted_avg = agg.weighted;
    rep.accuracy = accuracy(cm);
    auto kr = cohen_kappa(cm);
    rep.kappa = kr.kappa;
    rep.p_o = kr.p_o;
    rep.p_e = kr.p_e;
    rep.excluded_failed = cm.excluded_failed;
    return rep;
}

// Two-decimal half-up rendering. The value is first printed at 10 decimals
// and then rounded in decimal space, so 0.785 renders as "0.79" even though
// its nearest double sits fractionally below 0.785.
inline std::string format_rate_2dp(double v) {
    bool neg = v < 0;
    double a = neg ? -v : v;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10f", a);
    std::string s(buf);
    std::size_t dot = s.find('.');
    // digits: integer part, then decimals; round half-up at the 2nd decimal
    std::string digits = s.substr(0, dot) + s.substr(dot + 1, 2);
    bool round_up = s[dot + 3] >= '5';
    if (round_up) {
        for (int i = static_cast<int>(digits.size()) - 1; i >= 0; --i) {
            if (digits[i] == '9') {
                digits[i] = '0';
            } else {
                ++digits[i];
                round_up = false;
                break;
            }
        }
        if (round_up) digits.insert(digits.begin(), '1');
    }
    std::string frac = digits.substr(digits.size() - 2);
    std::string intpart = digits.substr(0, digits.size() - 2);
    // strip leading zeros, keep one
    std::size_t nz = intpart.find_first_not_of('0');
    intpart = nz == std::string::npos ? "0" : intpart.substr(nz);
    return (neg ? "-" : "") + intpart + "." + frac;
}

enum class ReportFormat { PlainTable, Markdown, MachineRecord };

namespace detail {

inline std::string pad_left(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

inline std::string pad_right(const std::string& s, std::size_t w) {
    return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

} // namespace detail

inline std::string render_report(const MetricsReport& rep, ReportFormat format) {
    if (format == ReportFormat::MachineRecord) {
        nlohmann::json j;
        j["engine_name"] = rep.engine_name;
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : rep.per_class) {
            rows.push_back({{"code", r.code},
                            {"precision", r.precision},
                            {"recall", r.recall},
                            {"f1", r.f1},
                            {"support", r.support}});
        }
        j["per_class"] = rows;
        j["macro_avg"] = {{"precision", rep.macro_avg.precision},
                          {"recall", rep.macro_avg.recall},
                          {"f1", rep.macro_avg.f1}};
        j["weighted_avg"] = {{"precision", rep.weighted_avg.precision},
                             {"recall", rep.weighted_avg.recall},
                             {"f1", rep.weighted_avg.f1}};
        j["accuracy"] = rep.accuracy;
        j["kappa"] = rep.kappa;
        j["p_o"] = rep.p_o;
        j["p_e"] = rep.p_e;
        j["excluded_failed"] = rep.excluded_failed;
        return j.dump() + "\n";
    }

    std::size_t name_w = 12;
    for (const auto& r : rep.per_class) name_w = std::max(name_w, r.code.size());
    long n = 0;
    for (const auto& r : rep.per_class) n += r.support;

    std::string out;
    if (format == ReportFormat::Markdown) {
        out += "| " + detail::pad_right("", name_w) + " | precision | recall | f1-score | support |\n";
        out += "|" + std::string(name_w + 2, '-') + "|-----------|--------|----------|---------|\n";
        auto row = [&](const std::string& name, double p, double r, double f, long sup) {
            out += "| " + detail::pad_right(name, name_w) + " | " +
                   detail::pad_left(format_rate_2dp(p), 9) + " | " +
                   detail::pad_left(format_rate_2dp(r), 6) + " | " +
                   detail::pad_left(format_rate_2dp(f), 8) + " | " +
                   detail::pad_left(std::to_string(sup), 7) + " |\n";
        };
        for (const auto& r : rep.per_class) row(r.code, r.precision, r.recall, r.f1, r.support);
        row("Macro avg", rep.macro_avg.precision, rep.macro_avg.recall, rep.macro_avg.f1, n);
        row("Weighted avg", rep.weighted_avg.precision, rep.weighted_avg.recall,
            rep.weighted_avg.f1, n);
        out += "\n";
    } else {
        out += detail::pad_right("", name_w) + "  precision  recall  f1-score  support\n";
        auto row = [&](const std::string& name, double p, double r, double f, long sup) {
            out += detail::pad_right(name, name_w) + "  " +
                   detail::pad_left(format_rate_2dp(p), 9) + "  " +
                   detail::pad_left(format_rate_2dp(r), 6) + "  " +
                   detail::pad_left(format_rate_2dp(f), 8) + "  " +
                   detail::pad_left(std::to_string(sup), 7) + "\n";
        };
        for (const auto& r : rep.per_class) row(r.code, r.precision, r.recall, r.f1, r.support);
        row("Macro avg", rep.macro_avg.precision, rep.macro_avg.recall, rep.macro_avg.f1, n);
        row("Weighted avg", rep.weighted_avg.precision, rep.weighted_avg.recall,
            rep.weighted_avg.f1, n);
    }
    out += "accuracy: " + format_rate_2dp(rep.accuracy) + "\n";
    out += "kappa: " + format_rate_2dp(rep.kappa) + " (p_o " + format_rate_2dp(rep.p_o) +
           ", p_e " + format_rate_2dp(rep.p_e) + ")\n";
    out += "excluded_failed: " + std::to_string(rep.excluded_failed) + "\n";
    return out;
}

// Inverse of the MachineRecord rendering; values round-trip bit-exactly.
inline MetricsReport parse_machine_record(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(Errc::SchemaViolation, "metrics", "invalid machine record");
    }
    MetricsReport rep;
    rep.engine_name = j.value("engine_name", std::string());
    for (const auto& r : j.at("per_class")) {
        ClassMetrics m;
        m.code = r.at("code").get<std::string>();
        m.precision = r.at("precision").get<double>();
        m.recall = r.at("recall").get<double>();
        m.f1 = r.at("f1").get<double>();
        m.support = r.at("support").get<long>();
        rep.per_class.push_back(std::move(m));
    }
    rep.macro_avg = {j["macro_avg"]["precision"].get<double>(),
                     j["macro_avg"]["recall"].get<double>(),
                     j["macro_avg"]["f1"].get<double>()};
    rep.weighted_avg = {j["weighted_avg"]["precision"].get<double>(),
                        j["weighted_avg"]["recall"].get<double>(),
                        j["weighted_avg"]["f1"].get<double>()};
    rep.accuracy = j.at("accuracy").get<double>();
    rep.kappa = j.at("kappa").get<double>();
    rep.p_o = j.at("p_o").get<double>();
    rep.p_e = j.at("p_e").get<double>();
    rep.excluded_failed = j.value("excluded_failed", 0L);
    return rep;
}

} // namespace dedukt
