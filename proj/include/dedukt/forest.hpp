#pragma once
// From-scratch random-forest classifier over term-count vectors.
//
// Each tree is grown greedily on a bootstrap resample, choosing the split
// with the largest Gini impurity decrease over a per-node random feature
// subset. Candidate thresholds are midpoints between consecutive distinct
// observed counts; a sample goes right when its count exceeds the
// threshold. Every tie (impurity, leaf vote, ensemble vote) resolves to the
// lowest index, and every random draw comes from a per-tree SplitMix64
// stream derived from the master seed, so a model is a pure function of
// (training data, params) regardless of thread count.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dedukt/corpus.hpp"
#include "dedukt/detail/digest.hpp"
#include "dedukt/detail/io.hpp"
#include "dedukt/detail/prng.hpp"
#include "dedukt/error.hpp"
#include "dedukt/textproc.hpp"

namespace dedukt {

struct MaxFeatures {
    enum class Rule { SqrtV, All, Fixed };
    Rule rule = Rule::SqrtV;
    int k = 0;

    static MaxFeatures sqrt_v() { return {Rule::SqrtV, 0}; }
    static MaxFeatures all() { return {Rule::All, 0}; }
    static MaxFeatures fixed(int k) { return {Rule::Fixed, k}; }

    int resolve(int n_features) const {
        switch (rule) {
            case Rule::SqrtV:
                return std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n_features))));
            case Rule::All:
                return n_features;
            case Rule::Fixed:
                return std::clamp(k, 1, n_features);
        }
        return n_features;
    }

    std::string to_string() const {
        switch (rule) {
            case Rule::SqrtV: return "sqrt";
            case Rule::All: return "all";
            case Rule::Fixed: return "fixed:" + std::to_string(k);
        }
        return "?";
    }

    static MaxFeatures parse(const std::string& s) {
        if (s == "sqrt") return sqrt_v();
        if (s == "all") return all();
        if (s.rfind("fixed:", 0) == 0) {
            int k = std::stoi(s.substr(6));
            if (k >= 1) return fixed(k);
        }
        throw Error(Errc::InvalidParams, "forest", "bad max_features '" + s + "'");
    }
};

struct ForestParams {
    int n_estimators = 100;
    std::uint64_t seed = 42;
    MaxFeatures max_features{};
    int min_samples_leaf = 1;
    std::optional<int> max_depth;
    bool bootstrap = true;
};

struct TreeNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0; // count > threshold goes right
    int left = -1;
    int right = -1;
    std::vector<long> class_counts; // leaf only, indexed by canonical code order
    bool is_leaf() const { return feature < 0; }
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    const TreeNode& descend(const TermVector& v) const {
        int at = 0;
        while (!nodes[at].is_leaf()) {
            double x = static_cast<double>(v.count_for(nodes[at].feature));
            at = x > nodes[at].threshold ? nodes[at].right : nodes[at].left;
        }
        return nodes[at];
    }
};

struct ForestModel {
    ForestParams params;
    std::vector<DecisionTree> trees;
    std::vector<std::string> labels; // canonical codebook order
    std::string vocab_fingerprint;
    int dimension = 0;
};

struct TrainOptions {
    int n_threads = 1;
    // Below this vocabulary size the training matrix is materialized densely;
    // purely a speed knob, results are identical either way.
    int dense_threshold = 50000;
};

namespace detail {

// Uniform access to sample counts during training, dense or sparse.
class FeatureAccess {
public:
    FeatureAccess(const std::vector<TermVector>& vectors, int dimension, bool dense)
        : vectors_(vectors), dim_(dimension), dense_(dense) {
        if (dense_) {
            dense_data_.assign(static_cast<std::size_t>(vectors.size()) * dim_, 0);
            for (std::size_t s = 0; s < vectors.size(); ++s) {
                for (const auto& [id, c] : vectors[s].counts) {
                    dense_data_[s * dim_ + id] = c;
                }
            }
        }
    }

    int value(int sample, int feature) const {
        if (dense_) return dense_data_[static_cast<std::size_t>(sample) * dim_ + feature];
        return vectors_[sample].count_for(feature);
    }

private:
    const std::vector<TermVector>& vectors_;
    int dim_;
    bool dense_;
    std::vector<int> dense_data_;
};

inline double gini(const std::vector<long>& counts, long n) {
    double g = 1.0;
    for (long c : counts) {
        double p = static_cast<double>(c) / static_cast<double>(n);
        g -= p * p;
    }
    return g;
}

struct TreeBuilder {
    const FeatureAccess& x;
    const std::vector<int>& y; // class index per training sample
    int n_classes;
    int n_features;
    const ForestParams& params;
    SplitMix64& rng;
    DecisionTree& tree;
    std::vector<int> feature_scratch;

    TreeBuilder(const FeatureAccess& x_, const std::vector<int>& y_, int n_classes_,
                int n_features_, const ForestParams& p_, SplitMix64& rng_, DecisionTree& t_)
        : x(x_), y(y_), n_classes(n_classes_), n_features(n_features_), params(p_), rng(rng_),
          tree(t_) {
        feature_scratch.resize(n_features);
        for (int f = 0; f < n_features; ++f) feature_scratch[f] = f;
    }

    int build(std::vector<int>& samples, int depth) {
        const long n = static_cast<long>(samples.size());
        std::vector<long> counts(n_classes, 0);
        for (int s : samples) ++counts[y[s]];
        bool pure = std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; }) <= 1;
        bool depth_stop = params.max_depth && depth >= *params.max_depth;

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_decrease = 0.0;
        if (!pure && !depth_stop && n >= 2 * params.min_samples_leaf) {
            double parent_gini = gini(counts, n);
            int m = params.max_features.resolve(n_features);
            // candidate features, ascending id; subsets drawn without replacement
            std::vector<int> feats;
            if (m >= n_features) {
                feats = feature_scratch;
            } else {
                std::vector<int> pool = feature_scratch;
                feats.reserve(m);
                for (int i = 0; i < m; ++i) {
                    std::size_t j = i + rng.bounded(static_cast<std::uint64_t>(n_features - i));
                    std::swap(pool[i], pool[j]);
                    feats.push_back(pool[i]);
                }
                std::sort(feats.begin(), feats.end());
            }
            std::vector<std::pair<int, int>> vals; // (count value, class)
            std::vector<long> left_counts(n_classes);
            for (int f : feats) {
                vals.clear();
                vals.reserve(samples.size());
                for (int s : samples) vals.emplace_back(x.value(s, f), y[s]);
                std::sort(vals.begin(), vals.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
                if (vals.front().first == vals.back().first) continue; // constant feature
                std::fill(left_counts.begin(), left_counts.end(), 0);
                long nl = 0;
                for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
                    ++left_counts[vals[i].second];
                    ++nl;
                    if (vals[i].first == vals[i + 1].first) continue;
                    long nr = n - nl;
                    if (nl < params.min_samples_leaf || nr < params.min_samples_leaf) continue;
                    double gl = gini(left_counts, nl);
                    double gr;
                    {
                        double g = 1.0;
                        for (int c = 0; c < n_classes; ++c) {
                            double p = static_cast<double>(counts[c] - left_counts[c]) /
                                       static_cast<double>(nr);
                            g -= p * p;
                        }
                        gr = g;
                    }
                    double child = (static_cast<double>(nl) * gl + static_cast<double>(nr) * gr) /
                                   static_cast<double>(n);
                    double decrease = parent_gini - child;
                    if (decrease > best_decrease + 1e-12) {
                        best_decrease = decrease;
                        best_feature = f;
                        best_threshold =
                            (static_cast<double>(vals[i].first) + vals[i + 1].first) / 2.0;
                    }
                }
            }
        }

        int slot = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        if (best_feature < 0) {
            tree.nodes[slot].class_counts = std::move(counts);
            return slot;
        }
        std::vector<int> left, right;
        for (int s : samples) {
            (static_cast<double>(x.value(s, best_feature)) > best_threshold ? right : left)
                .push_back(s);
        }
        samples.clear();
        samples.shrink_to_fit();
        tree.nodes[slot].feature = best_feature;
        tree.nodes[slot].threshold = best_threshold;
        int li = build(left, depth + 1);
        int ri = build(right, depth + 1);
        tree.nodes[slot].left = li;
        tree.nodes[slot].right = ri;
        return slot;
    }
};

} // namespace detail

inline ForestModel train_forest(const std::vector<TermVector>& vectors,
                                const std::vector<std::string>& labels,
                                const ForestParams& params, const Codebook& codebook,
                                const std::string& vocab_fingerprint = {},
                                const TrainOptions& options = {}) {
    if (params.n_estimators < 1) {
        throw Error(Errc::InvalidParams, "forest", "n_estimators must be >= 1");
    }
    if (params.min_samples_leaf < 1) {
        throw Error(Errc::InvalidParams, "forest", "min_samples_leaf must be >= 1");
    }
    if (vectors.size() != labels.size()) {
        throw Error(Errc::InvalidParams, "forest", "vectors and labels differ in length");
    }
    if (vectors.size() < 2) {
        throw Error(Errc::EmptyTrainingSet, "forest",
                    "need at least 2 training samples, have " + std::to_string(vectors.size()));
    }
    const int dim = vectors.front().dimension;
    for (const auto& v : vectors) {
        if (v.dimension != dim) {
            throw Error(Errc::DimensionMismatch, "forest", "training vectors differ in dimension");
        }
    }
    std::vector<int> y(vectors.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto idx = codebook.find(labels[i]);
        if (!idx) {
            throw Error(Errc::UnknownLabel, "forest",
                        "label '" + labels[i] + "' is not in the codebook");
        }
        y[i] = *idx;
    }
    {
        std::vector<char> seen(codebook.size(), 0);
        int distinct = 0;
        for (int c : y) {
            if (!seen[c]) {
                seen[c] = 1;
                ++distinct;
            }
        }
        if (distinct < 2) {
            throw Error(Errc::SingleClass, "forest", "training set has a single class");
        }
    }

    const int n = static_cast<int>(vectors.size());
    detail::FeatureAccess access(vectors, dim, dim <= options.dense_threshold);

    ForestModel model;
    model.params = params;
    model.labels = codebook.labels();
    model.vocab_fingerprint = vocab_fingerprint;
    model.dimension = dim;
    model.trees.resize(params.n_estimators);

    auto build_tree = [&](int t) {
        detail::SplitMix64 rng(detail::derive_seed(params.seed, static_cast<std::uint64_t>(t)));
        std::vector<int> samples(n);
        if (params.bootstrap) {
            for (int i = 0; i < n; ++i) {
                samples[i] = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(n)));
            }
        } else {
            for (int i = 0; i < n; ++i) samples[i] = i;
        }
        detail::TreeBuilder builder(access, y, codebook.size(), dim, params, rng, model.trees[t]);
        builder.build(samples, 0);
    };

    int threads = std::max(1, options.n_threads);
    if (threads == 1 || params.n_estimators == 1) {
        for (int t = 0; t < params.n_estimators; ++t) build_tree(t);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        int workers = std::min(threads, params.n_estimators);
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (int t = next.fetch_add(1); t < params.n_estimators; t = next.fetch_add(1)) {
                    build_tree(t);
                }
            });
        }
        for (auto& th : pool) th.join();
    }
    return model;
}

struct ForestPrediction {
    std::string label;
    std::vector<long> votes; // per code, canonical order; sums to n_estimators
};

inline ForestPrediction predict_label(const ForestModel& model, const TermVector& vector) {
    if (vector.dimension != model.dimension) {
        throw Error(Errc::DimensionMismatch, "forest",
                    "probe vector dimension " + std::to_string(vector.dimension) +
                        " does not match model dimension " + std::to_string(model.dimension));
    }
    ForestPrediction pred;
    pred.votes.assign(model.labels.size(), 0);
    for (const auto& tree : model.trees) {
        const TreeNode& leaf = tree.descend(vector);
        int best = 0;
        for (std::size_t c = 1; c < leaf.class_counts.size(); ++c) {
            if (leaf.class_counts[c] > leaf.class_counts[best]) best = static_cast<int>(c);
        }
        ++pred.votes[best];
    }
    int best = 0;
    for (std::size_t c = 1; c < pred.votes.size(); ++c) {
        if (pred.votes[c] > pred.votes[best]) best = static_cast<int>(c);
    }
    pred.label = model.labels[best];
    return pred;
}

inline constexpr int kForestFormatVersion = 1;

namespace detail {

inline std::string serialize_forest(const ForestModel& model, const Vocabulary* vocab) {
    std::string out;
    nlohmann::json header;
    header["format"] = "dedukt-forest";
    header["format_version"] = kForestFormatVersion;
    header["n_estimators"] = model.params.n_estimators;
    header["seed"] = model.params.seed;
    header["max_features"] = model.params.max_features.to_string();
    header["min_samples_leaf"] = model.params.min_samples_leaf;
    if (model.params.max_depth) {
        header["max_depth"] = *model.params.max_depth;
    } else {
        header["max_depth"] = nullptr;
    }
    header["bootstrap"] = model.params.bootstrap;
    header["labels"] = model.labels;
    header["vocab_fingerprint"] = model.vocab_fingerprint;
    header["dimension"] = model.dimension;
    out += header.dump();
    out += '\n';
    if (vocab != nullptr) {
        nlohmann::json v;
        v["vocab"] = vocab->tokens();
        out += v.dump();
        out += '\n';
    }
    for (std::size_t t = 0; t < model.trees.size(); ++t) {
        nlohmann::json tj;
        tj["tree"] = t;
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& node : model.trees[t].nodes) {
            if (node.is_leaf()) {
                nodes.push_back({{"c", node.class_counts}});
            } else {
                nodes.push_back(
                    {{"f", node.feature}, {"t", node.threshold}, {"l", node.left}, {"r", node.right}});
            }
        }
        tj["nodes"] = std::move(nodes);
        out += tj.dump();
        out += '\n';
    }
    return out;
}

} // namespace detail

// Stable content digest of the model (header + trees), used by the
// determinism checks and recorded in run manifests.
inline std::string model_digest(const ForestModel& model) {
    return detail::sha256_hex(detail::serialize_forest(model, nullptr));
}

// Model file: header line, optional vocabulary line, one line per tree, and
// a trailing digest line covering everything above it.
inline void save_model(const ForestModel& model, const Vocabulary& vocab,
                       const std::string& path) {
    std::string body = detail::serialize_forest(model, &vocab);
    nlohmann::json tail;
    tail["digest"] = detail::sha256_hex(body);
    body += tail.dump();
    body += '\n';
    detail::write_file_atomic(path, body, "forest");
}

struct SavedForest {
    ForestModel model;
    Vocabulary vocab;
};

inline SavedForest load_model(const std::string& path) {
    std::string content = detail::read_file(path, "forest");
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string::npos) eol = content.size();
        lines.push_back(content.substr(pos, eol - pos));
        pos = eol + 1;
    }
    while (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw Error(Errc::CorruptModel, "forest", "empty model file");

    nlohmann::json header = nlohmann::json::parse(lines.front(), nullptr, false);
    if (header.is_discarded() || header.value("format", "") != "dedukt-forest") {
        throw Error(Errc::CorruptModel, "forest", "not a forest model file");
    }
    if (header.value("format_version", -1) != kForestFormatVersion) {
        throw Error(Errc::VersionMismatch, "forest",
                    "model format_version " + header["format_version"].dump() +
                        ", this build reads " + std::to_string(kForestFormatVersion));
    }
    nlohmann::json tail = nlohmann::json::parse(lines.back(), nullptr, false);
    if (tail.is_discarded() || !tail.is_object() || !tail.contains("digest")) {
        throw Error(Errc::CorruptModel, "forest", "model file is truncated (no digest line)");
    }
    std::string body;
    for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
        body += lines[i];
        body += '\n';
    }
    if (detail::sha256_hex(body) != tail["digest"].get<std::string>()) {
        throw Error(Errc::CorruptModel, "forest", "model digest check failed");
    }

    SavedForest out;
    ForestModel& model = out.model;
    model.params.n_estimators = header.at("n_estimators").get<int>();
    model.params.seed = header.at("seed").get<std::uint64_t>();
    model.params.max_features = MaxFeatures::parse(header.at("max_features").get<std::string>());
    model.params.min_samples_leaf = header.at("min_samples_leaf").get<int>();
    if (!header.at("max_depth").is_null()) model.params.max_depth = header["max_depth"].get<int>();
    model.params.bootstrap = header.at("bootstrap").get<bool>();
    model.labels = header.at("labels").get<std::vector<std::string>>();
    model.vocab_fingerprint = header.at("vocab_fingerprint").get<std::string>();
    model.dimension = header.at("dimension").get<int>();

    for (std::size_t i = 1; i + 1 < lines.size(); ++i) {
        nlohmann::json j = nlohmann::json::parse(lines[i], nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(Errc::CorruptModel, "forest", "bad record at line " + std::to_string(i + 1));
        }
        if (j.contains("vocab")) {
            std::vector<std::vector<std::string>> docs;
            docs.emplace_back(j["vocab"].get<std::vector<std::string>>());
            // rebuild with min_count 1 over the stored token list preserves ids
            out.vocab = Vocabulary::build(docs, 1);
            continue;
        }
        if (!j.contains("tree") || !j.contains("nodes")) {
            throw Error(Errc::CorruptModel, "forest", "bad record at line " + std::to_string(i + 1));
        }
        DecisionTree tree;
        for (const auto& nj : j["nodes"]) {
            TreeNode node;
            if (nj.contains("c")) {
                node.class_counts = nj["c"].get<std::vector<long>>();
                if (node.class_counts.size() != model.labels.size()) {
                    throw Error(Errc::CorruptModel, "forest", "leaf counts do not match labels");
                }
            } else {
                node.feature = nj.at("f").get<int>();
                node.threshold = nj.at("t").get<double>();
                node.left = nj.at("l").get<int>();
                node.right = nj.at("r").get<int>();
                if (node.feature < 0 || node.feature >= model.dimension) {
                    throw Error(Errc::CorruptModel, "forest", "split feature out of range");
                }
            }
            tree.nodes.push_back(std::move(node));
        }
        model.trees.push_back(std::move(tree));
    }
    if (static_cast<int>(model.trees.size()) != model.params.n_estimators) {
        throw Error(Errc::CorruptModel, "forest",
                    "expected " + std::to_string(model.params.n_estimators) + " trees, found " +
                        std::to_string(model.trees.size()));
    }
    if (out.vocab.size() > 0 && out.vocab.fingerprint() != model.vocab_fingerprint) {
        throw Error(Errc::CorruptModel, "forest", "stored vocabulary does not match fingerprint");
    }
    return out;
}

} // namespace dedukt
