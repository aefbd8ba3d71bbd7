#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "finsent/csv.hpp"
#include "finsent/errors.hpp"
#include "finsent/log.hpp"
#include "finsent/sentiment_features.hpp"

namespace finsent {

// ---------------------------------------------------------------------------
// Unicode helpers and preprocessing
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint32_t> utf8_codepoints(const std::string& s) {
    std::vector<std::uint32_t> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len;
        std::uint32_t cp;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1Fu;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0Fu;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07u;
        } else {
            throw DataError("invalid UTF-8 byte in token '" + s + "'");
        }
        if (i + len > s.size()) {
            throw DataError("truncated UTF-8 sequence in token '" + s + "'");
        }
        for (std::size_t j = 1; j < len; ++j) {
            const auto b = static_cast<unsigned char>(s[i + j]);
            if ((b & 0xC0) != 0x80) {
                throw DataError("invalid UTF-8 continuation in token '" + s + "'");
            }
            cp = (cp << 6) | (b & 0x3Fu);
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

inline bool is_punct_codepoint(std::uint32_t cp) {
    if (cp < 0x80) {
        return std::ispunct(static_cast<int>(cp)) != 0;
    }
    return cp >= 0x2000 && cp <= 0x206F; // general punctuation block
}

inline bool is_latin_codepoint(std::uint32_t cp) {
    return (cp >= 'A' && cp <= 'Z') || (cp >= 'a' && cp <= 'z');
}

inline bool is_digit_codepoint(std::uint32_t cp) {
    return (cp >= '0' && cp <= '9') || (cp >= 0x0E50 && cp <= 0x0E59); // ASCII and Thai digits
}

} // namespace detail

/// Token filter: drops tokens that are punctuation-only, contain Latin
/// letters, contain digits (ASCII or Thai), or are shorter than three
/// codepoints. An empty result is allowed.
inline std::vector<std::string> preprocess(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    for (const auto& token : tokens) {
        const auto cps = detail::utf8_codepoints(token);
        if (cps.size() < 3) continue;
        bool all_punct = true;
        bool has_latin = false;
        bool has_digit = false;
        for (std::uint32_t cp : cps) {
            if (!detail::is_punct_codepoint(cp)) all_punct = false;
            if (detail::is_latin_codepoint(cp)) has_latin = true;
            if (detail::is_digit_codepoint(cp)) has_digit = true;
        }
        if (all_punct || has_latin || has_digit) continue;
        out.push_back(token);
    }
    return out;
}

/// Whitespace fallback tokenizer for tests and ad-hoc input; real corpora
/// arrive pre-tokenized.
inline std::vector<std::string> whitespace_tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!current.empty()) out.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary and vectorization
// ---------------------------------------------------------------------------

inline constexpr int kMinDocumentFrequency = 2;

/// Token-to-column map built from the training split only. Tokens are
/// admitted when they appear in at least `min_document_frequency` distinct
/// documents and indexed in lexicographic order for determinism.
struct Vocabulary {
    std::unordered_map<std::string, int> index;
    std::vector<std::string> tokens; // index order

    int size() const { return static_cast<int>(tokens.size()); }

    int lookup(const std::string& token) const {
        auto it = index.find(token);
        return it == index.end() ? -1 : it->second;
    }
};

inline Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& documents,
                                   int min_document_frequency = kMinDocumentFrequency) {
    std::map<std::string, int> doc_freq;
    std::set<std::string> seen;
    for (const auto& doc : documents) {
        seen.clear();
        for (const auto& token : doc) seen.insert(token);
        for (const auto& token : seen) doc_freq[token] += 1;
    }
    Vocabulary vocab;
    for (const auto& [token, freq] : doc_freq) { // std::map iterates in sorted order
        if (freq < min_document_frequency) continue;
        vocab.index.emplace(token, vocab.size());
        vocab.tokens.push_back(token);
    }
    return vocab;
}

/// Sparse bag-of-words counts; out-of-vocabulary tokens are dropped and
/// counted.
struct SparseVector {
    std::vector<std::pair<int, double>> entries; // (column, count), column-sorted
    int oov_count = 0;
};

inline SparseVector vectorize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
    std::map<int, double> counts;
    SparseVector out;
    for (const auto& token : tokens) {
        const int col = vocab.lookup(token);
        if (col < 0) {
            out.oov_count += 1;
        } else {
            counts[col] += 1.0;
        }
    }
    out.entries.assign(counts.begin(), counts.end());
    return out;
}

// ---------------------------------------------------------------------------
// MaxEnt model
// ---------------------------------------------------------------------------

struct MaxEntHyperparameters {
    double learning_rate = 0.1;
    double l2_strength = 1e-4;
    int max_epochs = 100;
};

/// Multinomial logistic regression. Weights are classes x (vocabulary + 1);
/// the final column is the unpenalized bias.
struct MaxEntModel {
    Eigen::MatrixXd weights;
    std::vector<std::string> class_names;
    Vocabulary vocabulary;
    MaxEntHyperparameters hyperparameters;
    std::vector<double> epoch_losses; // accepted losses, non-increasing
};

namespace detail {

inline Eigen::VectorXd maxent_scores(const Eigen::MatrixXd& weights, const SparseVector& x) {
    const Eigen::Index bias_col = weights.cols() - 1;
    Eigen::VectorXd scores = weights.col(bias_col);
    for (const auto& [col, value] : x.entries) {
        scores += value * weights.col(col);
    }
    return scores;
}

inline Eigen::VectorXd softmax(Eigen::VectorXd scores) {
    const double max_score = scores.maxCoeff();
    scores = (scores.array() - max_score).exp();
    return scores / scores.sum();
}

} // namespace detail

/// Mean cross-entropy over the documents plus (l2/2)||W||² with the bias
/// column excluded from the penalty.
inline double maxent_loss(const Eigen::MatrixXd& weights, const std::vector<SparseVector>& docs,
                          const std::vector<int>& labels, double l2_strength) {
    double total = 0.0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const Eigen::VectorXd scores = detail::maxent_scores(weights, docs[i]);
        const double max_score = scores.maxCoeff();
        const double log_z = max_score + std::log((scores.array() - max_score).exp().sum());
        total += log_z - scores(labels[i]);
    }
    total /= static_cast<double>(docs.size());
    const Eigen::Index bias_col = weights.cols() - 1;
    total += 0.5 * l2_strength * weights.leftCols(bias_col).squaredNorm();
    return total;
}

inline Eigen::MatrixXd maxent_gradient(const Eigen::MatrixXd& weights,
                                       const std::vector<SparseVector>& docs,
                                       const std::vector<int>& labels, double l2_strength) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
    const Eigen::Index bias_col = weights.cols() - 1;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        Eigen::VectorXd delta = detail::softmax(detail::maxent_scores(weights, docs[i]));
        delta(labels[i]) -= 1.0;
        for (const auto& [col, value] : docs[i].entries) {
            grad.col(col) += value * delta;
        }
        grad.col(bias_col) += delta;
    }
    grad /= static_cast<double>(docs.size());
    grad.leftCols(bias_col) += l2_strength * weights.leftCols(bias_col);
    return grad;
}

/// Full-batch gradient descent from zero weights. A step that raises the
/// loss is retried at half the learning rate, so accepted losses are
/// non-increasing.
inline MaxEntModel train_maxent(const std::vector<SparseVector>& docs,
                                const std::vector<int>& labels,
                                const std::vector<std::string>& class_names,
                                const Vocabulary& vocabulary,
                                const MaxEntHyperparameters& hyper = {}) {
    if (docs.empty()) {
        throw InsufficientDataError("train_maxent: no training documents");
    }
    if (docs.size() != labels.size()) {
        throw std::invalid_argument("train_maxent: document and label counts differ");
    }
    const int num_classes = static_cast<int>(class_names.size());
    std::set<int> present;
    for (int label : labels) {
        if (label < 0 || label >= num_classes) {
            throw std::invalid_argument("train_maxent: label " + std::to_string(label) +
                                        " outside 0.." + std::to_string(num_classes - 1));
        }
        present.insert(label);
    }
    if (present.size() < 2) {
        throw InsufficientDataError("train_maxent: need at least 2 classes present, got " +
                                    std::to_string(present.size()));
    }

    MaxEntModel model;
    model.class_names = class_names;
    model.vocabulary = vocabulary;
    model.hyperparameters = hyper;
    model.weights = Eigen::MatrixXd::Zero(num_classes, vocabulary.size() + 1);

    double loss = maxent_loss(model.weights, docs, labels, hyper.l2_strength);
    if (!std::isfinite(loss)) {
        throw DataError("train_maxent: non-finite initial loss");
    }
    model.epoch_losses.push_back(loss);
    double lr = hyper.learning_rate;
    constexpr double kMinLearningRate = 1e-12;
    for (int epoch = 0; epoch < hyper.max_epochs && lr >= kMinLearningRate; ++epoch) {
        const Eigen::MatrixXd grad = maxent_gradient(model.weights, docs, labels,
                                                     hyper.l2_strength);
        double new_loss = std::numeric_limits<double>::quiet_NaN();
        Eigen::MatrixXd candidate;
        while (lr >= kMinLearningRate) {
            candidate = model.weights - lr * grad;
            new_loss = maxent_loss(candidate, docs, labels, hyper.l2_strength);
            if (std::isfinite(new_loss) && new_loss <= loss) break;
            lr *= 0.5;
        }
        if (lr < kMinLearningRate) break;
        model.weights = std::move(candidate);
        loss = new_loss;
        model.epoch_losses.push_back(loss);
    }
    if (!model.weights.allFinite()) {
        throw DataError("train_maxent: training diverged to non-finite weights");
    }
    return model;
}

struct Prediction {
    int label = 0;
    Eigen::VectorXd probabilities;
};

/// Softmax argmax; ties go to the lowest class index.
inline Prediction predict(const MaxEntModel& model, const SparseVector& doc) {
    Prediction out;
    out.probabilities = detail::softmax(detail::maxent_scores(model.weights, doc));
    out.label = 0;
    for (Eigen::Index k = 1; k < out.probabilities.size(); ++k) {
        if (out.probabilities(k) > out.probabilities(out.label)) {
            out.label = static_cast<int>(k);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long support = 0;
    bool degenerate = false; // class absent from both gold and predictions
};

struct EvalReport {
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;
    double micro_f1 = 0.0;    // equals accuracy for single-label multiclass
    double macro_f1 = 0.0;    // unweighted mean over all classes
    double weighted_f1 = 0.0; // weighted by gold support
    std::vector<std::vector<long>> confusion; // [gold][predicted]
};

inline EvalReport evaluate(const std::vector<int>& predictions, const std::vector<int>& gold,
                           int num_classes) {
    if (predictions.size() != gold.size()) {
        throw std::invalid_argument("evaluate: prediction and gold lengths differ");
    }
    if (predictions.empty()) {
        throw std::invalid_argument("evaluate: empty label sequences");
    }
    EvalReport report;
    report.confusion.assign(static_cast<std::size_t>(num_classes),
                            std::vector<long>(static_cast<std::size_t>(num_classes), 0));
    long correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0 || gold[i] >= num_classes || predictions[i] < 0 ||
            predictions[i] >= num_classes) {
            throw std::invalid_argument("evaluate: label outside enumeration at row " +
                                        std::to_string(i));
        }
        report.confusion[static_cast<std::size_t>(gold[i])]
                        [static_cast<std::size_t>(predictions[i])] += 1;
        if (gold[i] == predictions[i]) ++correct;
    }
    const auto n = static_cast<double>(gold.size());
    report.accuracy = static_cast<double>(correct) / n;
    report.micro_f1 = report.accuracy;

    double macro_sum = 0.0;
    double weighted_sum = 0.0;
    for (int k = 0; k < num_classes; ++k) {
        const auto row = static_cast<std::size_t>(k);
        long tp = report.confusion[row][row];
        long gold_count = 0, pred_count = 0;
        for (int j = 0; j < num_classes; ++j) {
            gold_count += report.confusion[row][static_cast<std::size_t>(j)];
            pred_count += report.confusion[static_cast<std::size_t>(j)][row];
        }
        ClassMetrics m;
        m.support = gold_count;
        m.degenerate = gold_count == 0 && pred_count == 0;
        m.precision = pred_count > 0 ? static_cast<double>(tp) / static_cast<double>(pred_count) : 0.0;
        m.recall = gold_count > 0 ? static_cast<double>(tp) / static_cast<double>(gold_count) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        macro_sum += m.f1;
        weighted_sum += m.f1 * static_cast<double>(gold_count);
        report.per_class.push_back(m);
    }
    report.macro_f1 = macro_sum / static_cast<double>(num_classes);
    report.weighted_f1 = weighted_sum / n;
    return report;
}

// ---------------------------------------------------------------------------
// Cohen's kappa
// ---------------------------------------------------------------------------

struct KappaResult {
    double kappa = 0.0;
    double observed_agreement = 0.0;
    double expected_agreement = 0.0;
    bool degenerate = false; // expected agreement = 1, kappa undefined
};

inline KappaResult cohens_kappa(const std::vector<std::string>& labels_a,
                                const std::vector<std::string>& labels_b) {
    if (labels_a.size() != labels_b.size()) {
        throw std::invalid_argument("cohens_kappa: label sequences differ in length");
    }
    if (labels_a.empty()) {
        throw std::invalid_argument("cohens_kappa: empty label sequences");
    }
    const auto n = static_cast<double>(labels_a.size());
    std::map<std::string, long> marg_a, marg_b;
    long agree = 0;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        marg_a[labels_a[i]] += 1;
        marg_b[labels_b[i]] += 1;
        if (labels_a[i] == labels_b[i]) ++agree;
    }
    KappaResult out;
    out.observed_agreement = static_cast<double>(agree) / n;
    double pe = 0.0;
    for (const auto& [label, count_a] : marg_a) {
        auto it = marg_b.find(label);
        if (it == marg_b.end()) continue;
        pe += (static_cast<double>(count_a) / n) * (static_cast<double>(it->second) / n);
    }
    out.expected_agreement = pe;
    if (pe >= 1.0) {
        out.degenerate = true;
        out.kappa = std::numeric_limits<double>::quiet_NaN();
    } else {
        out.kappa = (out.observed_agreement - pe) / (1.0 - pe);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Corpus files and splits
// ---------------------------------------------------------------------------

struct CorpusDocument {
    std::string id;
    std::vector<std::string> tokens;
    std::optional<AspectLabel> aspect;
    std::optional<SentimentLabel> sentiment;
};

/// Corpus JSONL: `{"id": str, "tokens": [str], "aspect": str?, "sentiment": str?}`.
inline std::vector<CorpusDocument> load_corpus_jsonl(const std::string& path) {
    auto in = open_input_file(path);
    std::vector<CorpusDocument> out;
    std::set<std::string> ids;
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_number);
        try {
            const nlohmann::json obj = nlohmann::json::parse(line);
            CorpusDocument doc;
            doc.id = obj.at("id").get<std::string>();
            for (const auto& token : obj.at("tokens")) {
                doc.tokens.push_back(token.get<std::string>());
            }
            if (obj.contains("aspect") && !obj["aspect"].is_null()) {
                doc.aspect = parse_aspect(obj["aspect"].get<std::string>());
            }
            if (obj.contains("sentiment") && !obj["sentiment"].is_null()) {
                doc.sentiment = parse_sentiment(obj["sentiment"].get<std::string>());
            }
            if (!ids.insert(doc.id).second) {
                throw DataError("duplicate document id '" + doc.id + "'");
            }
            out.push_back(std::move(doc));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

/// Split manifest: one document id per line.
inline std::vector<std::string> load_split_manifest(const std::string& path) {
    auto in = open_input_file(path);
    std::vector<std::string> ids;
    std::set<std::string> seen;
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!seen.insert(line).second) {
            throw DataError(path + ":" + std::to_string(line_number) + ": duplicate id '" +
                            line + "'");
        }
        ids.push_back(line);
    }
    return ids;
}

/// Documents for one split, in manifest order. Unknown ids are errors, and
/// `taken` accumulates across splits to reject train/dev/test leakage.
inline std::vector<CorpusDocument> select_split(const std::vector<CorpusDocument>& corpus,
                                                const std::vector<std::string>& ids,
                                                std::set<std::string>* taken = nullptr) {
    std::unordered_map<std::string, const CorpusDocument*> by_id;
    for (const auto& doc : corpus) by_id.emplace(doc.id, &doc);
    std::vector<CorpusDocument> out;
    for (const auto& id : ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) {
            throw DataError("split manifest references unknown document id '" + id + "'");
        }
        if (taken != nullptr && !taken->insert(id).second) {
            throw DataError("document id '" + id + "' appears in more than one split");
        }
        out.push_back(*it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const MaxEntModel& model) {
    nlohmann::json obj;
    obj["format_version"] = kModelFormatVersion;
    obj["classes"] = model.class_names;
    obj["vocabulary"] = model.vocabulary.tokens;
    obj["hyperparameters"] = {{"learning_rate", model.hyperparameters.learning_rate},
                              {"l2_strength", model.hyperparameters.l2_strength},
                              {"max_epochs", model.hyperparameters.max_epochs}};
    nlohmann::json weights = nlohmann::json::array();
    for (Eigen::Index r = 0; r < model.weights.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < model.weights.cols(); ++c) {
            row.push_back(model.weights(r, c));
        }
        weights.push_back(std::move(row));
    }
    obj["weights"] = std::move(weights);
    obj["epoch_losses"] = model.epoch_losses;
    return obj;
}

inline MaxEntModel model_from_json(const nlohmann::json& obj) {
    try {
        if (obj.at("format_version").get<int>() != kModelFormatVersion) {
            throw DataError("unsupported model format version");
        }
        MaxEntModel model;
        model.class_names = obj.at("classes").get<std::vector<std::string>>();
        model.vocabulary.tokens = obj.at("vocabulary").get<std::vector<std::string>>();
        for (int i = 0; i < model.vocabulary.size(); ++i) {
            model.vocabulary.index.emplace(model.vocabulary.tokens[static_cast<std::size_t>(i)], i);
        }
        const auto& hyper = obj.at("hyperparameters");
        model.hyperparameters.learning_rate = hyper.at("learning_rate").get<double>();
        model.hyperparameters.l2_strength = hyper.at("l2_strength").get<double>();
        model.hyperparameters.max_epochs = hyper.at("max_epochs").get<int>();
        const auto& weights = obj.at("weights");
        const auto rows = static_cast<Eigen::Index>(weights.size());
        if (rows != static_cast<Eigen::Index>(model.class_names.size())) {
            throw DataError("weight rows do not match class list");
        }
        model.weights.resize(rows, model.vocabulary.size() + 1);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const auto& row = weights[static_cast<std::size_t>(r)];
            if (static_cast<Eigen::Index>(row.size()) != model.weights.cols()) {
                throw DataError("weight row length does not match vocabulary");
            }
            for (Eigen::Index c = 0; c < model.weights.cols(); ++c) {
                model.weights(r, c) = row[static_cast<std::size_t>(c)].get<double>();
            }
        }
        if (obj.contains("epoch_losses")) {
            model.epoch_losses = obj["epoch_losses"].get<std::vector<double>>();
        }
        if (!model.weights.allFinite()) {
            throw DataError("model weights are not finite");
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(const MaxEntModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open " + path + " for writing");
    out << model_to_json(model).dump(2) << '\n';
    if (!out) throw DataError("failed writing model to " + path);
}

inline MaxEntModel load_model(const std::string& path) {
    auto in = open_input_file(path);
    nlohmann::json obj;
    try {
        in >> obj;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": invalid JSON: " + e.what());
    }
    return model_from_json(obj);
}

// ---------------------------------------------------------------------------
// Task plumbing
// ---------------------------------------------------------------------------

enum class ClassificationTask { aspect, sentiment };

inline ClassificationTask parse_task(const std::string& s) {
    if (s == "aspect") return ClassificationTask::aspect;
    if (s == "sentiment") return ClassificationTask::sentiment;
    throw ConfigError("unknown classification task '" + s + "' (expected aspect or sentiment)");
}

inline std::vector<std::string> task_class_names(ClassificationTask task) {
    std::vector<std::string> names;
    if (task == ClassificationTask::aspect) {
        names.assign(kAspectNames.begin(), kAspectNames.end());
    } else {
        names.assign(kSentimentNames.begin(), kSentimentNames.end());
    }
    return names;
}

/// Gold label index for the task, if the document carries one.
inline std::optional<int> task_label(const CorpusDocument& doc, ClassificationTask task) {
    if (task == ClassificationTask::aspect) {
        if (!doc.aspect) return std::nullopt;
        return static_cast<int>(*doc.aspect);
    }
    if (!doc.sentiment) return std::nullopt;
    return static_cast<int>(*doc.sentiment);
}

} // namespace finsent
