#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "finsent/csv.hpp"
#include "finsent/date.hpp"
#include "finsent/errors.hpp"
#include "finsent/event_study.hpp"
#include "finsent/market_data.hpp"

namespace finsent {

// ---------------------------------------------------------------------------
// Label enumerations
// ---------------------------------------------------------------------------

enum class AspectLabel {
    brand, product_service, environment, social_people, governance, economics,
    political, legal, dividend, investment, mna, profit_loss, rating, financing,
    technology, others,
};

inline constexpr int kAspectCount = 16;

inline constexpr std::array<const char*, kAspectCount> kAspectNames = {
    "Brand", "Product/Service", "Environment", "Social&People", "Governance",
    "Economics", "Political", "Legal", "Dividend", "Investment", "M&A",
    "Profit/Loss", "Rating", "Financing", "Technology", "Others",
};

enum class SentimentLabel { negative, neutral, positive };

inline constexpr int kSentimentCount = 3;

inline constexpr std::array<const char*, kSentimentCount> kSentimentNames = {
    "negative", "neutral", "positive",
};

enum class SourceSection { mda, risk, sustainability };

inline constexpr int kSourceCount = 3;

inline constexpr std::array<const char*, kSourceCount> kSourceNames = {
    "MDA", "Risk", "Sustainability",
};

/// The eight SET industry groups.
enum class IndustryCode {
    agro, consumer, financials, industrials, property, resources, services, technology,
};

inline constexpr int kIndustryCount = 8;

inline constexpr std::array<const char*, kIndustryCount> kIndustryNames = {
    "Agro", "Consumer", "Financials", "Industrials", "Property", "Resources",
    "Services", "Technology",
};

namespace detail {

template <typename Enum, std::size_t N>
Enum parse_label(const std::string& s, const std::array<const char*, N>& names,
                 const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (s == names[i]) return static_cast<Enum>(i);
    }
    throw DataError(std::string("unknown ") + what + " label '" + s + "'");
}

} // namespace detail

inline AspectLabel parse_aspect(const std::string& s) {
    return detail::parse_label<AspectLabel>(s, kAspectNames, "aspect");
}
inline SentimentLabel parse_sentiment(const std::string& s) {
    return detail::parse_label<SentimentLabel>(s, kSentimentNames, "sentiment");
}
inline SourceSection parse_source(const std::string& s) {
    return detail::parse_label<SourceSection>(s, kSourceNames, "source");
}
inline IndustryCode parse_industry(const std::string& s) {
    return detail::parse_label<IndustryCode>(s, kIndustryNames, "industry");
}

inline const char* to_string(AspectLabel a) { return kAspectNames[static_cast<std::size_t>(a)]; }
inline const char* to_string(SentimentLabel s) { return kSentimentNames[static_cast<std::size_t>(s)]; }
inline const char* to_string(SourceSection s) { return kSourceNames[static_cast<std::size_t>(s)]; }
inline const char* to_string(IndustryCode i) { return kIndustryNames[static_cast<std::size_t>(i)]; }

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

/// One annotated paragraph. A paragraph may carry multiple aspect-sentiment
/// pairs, duplicates included.
struct ParagraphAnnotation {
    std::string firm_id;
    int report_year = 0;
    SourceSection source = SourceSection::mda;
    std::vector<std::pair<AspectLabel, SentimentLabel>> pairs;
};

enum class CountGrouping { sentiment, source_sentiment, aspect_sentiment };

inline int count_key_size(CountGrouping g) {
    switch (g) {
        case CountGrouping::sentiment: return kSentimentCount;
        case CountGrouping::source_sentiment: return kSourceCount * kSentimentCount;
        case CountGrouping::aspect_sentiment: return kAspectCount * kSentimentCount;
    }
    return 0;
}

/// Canonical key names for a grouping, in enumeration order. Column names
/// and count vectors share this ordering everywhere.
inline std::vector<std::string> count_key_names(CountGrouping g) {
    std::vector<std::string> names;
    switch (g) {
        case CountGrouping::sentiment:
            for (const char* s : kSentimentNames) names.emplace_back(s);
            break;
        case CountGrouping::source_sentiment:
            for (const char* src : kSourceNames) {
                for (const char* s : kSentimentNames) {
                    names.push_back(std::string(src) + ":" + s);
                }
            }
            break;
        case CountGrouping::aspect_sentiment:
            for (const char* a : kAspectNames) {
                for (const char* s : kSentimentNames) {
                    names.push_back(std::string(a) + ":" + s);
                }
            }
            break;
    }
    return names;
}

/// Aspect-sentiment pair counts for one document under the chosen grouping.
/// The full closed key set is returned in canonical order, zeros included.
inline std::vector<std::pair<std::string, int>> aggregate_counts(
    const std::vector<ParagraphAnnotation>& annotations, CountGrouping grouping) {
    for (std::size_t i = 1; i < annotations.size(); ++i) {
        if (annotations[i].firm_id != annotations[0].firm_id ||
            annotations[i].report_year != annotations[0].report_year) {
            throw std::invalid_argument(
                "aggregate_counts: annotations span more than one (firm, report) document");
        }
    }
    std::vector<int> counts(static_cast<std::size_t>(count_key_size(grouping)), 0);
    for (const auto& ann : annotations) {
        for (const auto& [aspect, sentiment] : ann.pairs) {
            std::size_t key = 0;
            switch (grouping) {
                case CountGrouping::sentiment:
                    key = static_cast<std::size_t>(sentiment);
                    break;
                case CountGrouping::source_sentiment:
                    key = static_cast<std::size_t>(ann.source) * kSentimentCount +
                          static_cast<std::size_t>(sentiment);
                    break;
                case CountGrouping::aspect_sentiment:
                    key = static_cast<std::size_t>(aspect) * kSentimentCount +
                          static_cast<std::size_t>(sentiment);
                    break;
            }
            counts[key] += 1;
        }
    }
    std::vector<std::string> names = count_key_names(grouping);
    std::vector<std::pair<std::string, int>> out;
    out.reserve(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) {
        out.emplace_back(names[i], counts[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Scores and controls
// ---------------------------------------------------------------------------

struct SentimentScores {
    double score1 = 0.0;
    double score2 = 0.0;
};

/// Normalized polarity scores: score1 = (p-n+1)/(p+n), score2 = (p-n+2)/(p+n).
/// Undefined when the document has no polar pairs (p+n = 0); such documents
/// carry a missing-score marker instead of an imputed value.
inline std::optional<SentimentScores> sentiment_scores(int positive, int negative) {
    if (positive < 0 || negative < 0) {
        throw std::invalid_argument("sentiment_scores: negative count");
    }
    const int denom = positive + negative;
    if (denom == 0) return std::nullopt;
    const double p = positive, n = negative;
    return SentimentScores{(p - n + 1.0) / denom, (p - n + 2.0) / denom};
}

/// Firm-level controls at the event date.
struct Controls {
    double firm_size = 0.0;  // ln(market cap)
    double tobins_q = 0.0;   // ln(market cap / total assets)
    double roa = 0.0;        // net income / total assets
    double leverage = 0.0;   // total liabilities / total assets
    double volatility = 0.0; // std of daily returns, trailing 12 months
};

struct FirmFundamentals {
    std::string firm_id;
    Date date;
    double market_cap = 0.0;
    double total_assets = 0.0;
    double net_income = 0.0;
    double total_liabilities = 0.0;
    IndustryCode industry = IndustryCode::agro;
};

inline constexpr int kVolatilityLookbackDays = 252;
inline constexpr int kVolatilityMinObservations = 20;

/// Controls from fundamentals plus trailing-return volatility. Volatility
/// uses the sample standard deviation of the returns in the 12 months
/// strictly before the event date, capped at the most recent 252.
inline Controls compute_controls(const FirmFundamentals& fundamentals,
                                 const ReturnSeries& returns, const Date& event_date) {
    if (fundamentals.market_cap <= 0.0) {
        throw DataError("compute_controls: non-positive market cap for " +
                        fundamentals.firm_id);
    }
    if (fundamentals.total_assets <= 0.0) {
        throw DataError("compute_controls: non-positive total assets for " +
                        fundamentals.firm_id);
    }
    if (fundamentals.total_liabilities < 0.0) {
        throw DataError("compute_controls: negative total liabilities for " +
                        fundamentals.firm_id);
    }

    const Date lookback_start = add_years(event_date, -1);
    std::vector<double> window;
    for (const auto& [d, r] : returns.observations) {
        if (d < lookback_start || !(d < event_date)) continue;
        window.push_back(r);
    }
    if (window.size() > static_cast<std::size_t>(kVolatilityLookbackDays)) {
        window.erase(window.begin(),
                     window.end() - static_cast<std::ptrdiff_t>(kVolatilityLookbackDays));
    }
    if (window.size() < static_cast<std::size_t>(kVolatilityMinObservations)) {
        throw InsufficientDataError("compute_controls: " + std::to_string(window.size()) +
                                    " trailing returns for " + fundamentals.firm_id +
                                    ", need " + std::to_string(kVolatilityMinObservations));
    }
    double mean = 0.0;
    for (double r : window) mean += r;
    mean /= static_cast<double>(window.size());
    double ss = 0.0;
    for (double r : window) ss += (r - mean) * (r - mean);
    const double volatility = std::sqrt(ss / static_cast<double>(window.size() - 1));

    Controls c;
    c.firm_size = std::log(fundamentals.market_cap);
    c.tobins_q = std::log(fundamentals.market_cap / fundamentals.total_assets);
    c.roa = fundamentals.net_income / fundamentals.total_assets;
    c.leverage = fundamentals.total_liabilities / fundamentals.total_assets;
    c.volatility = volatility;
    return c;
}

inline constexpr std::array<const char*, 5> kControlNames = {
    "firm_size", "tobins_q", "roa", "leverage", "volatility",
};

// ---------------------------------------------------------------------------
// Feature vectors and design matrices
// ---------------------------------------------------------------------------

using EventKey = std::pair<std::string, Date>; // (firm, event date)

/// Per-event regression features: all three count groupings over the same
/// annotation multiset, polarity scores (when defined), controls, industry.
struct DocumentFeatureVector {
    std::string firm_id;
    Date event_date;
    std::array<int, 3> sentiment_counts{};
    std::array<int, 9> source_sentiment_counts{};
    std::array<int, 48> aspect_sentiment_counts{};
    std::optional<SentimentScores> scores;
    Controls controls;
    IndustryCode industry = IndustryCode::agro;

    EventKey key() const { return {firm_id, event_date}; }
};

/// Fill the count arrays of a feature vector from one document's annotations.
inline void fill_counts(DocumentFeatureVector& fv,
                        const std::vector<ParagraphAnnotation>& annotations) {
    fv.sentiment_counts.fill(0);
    fv.source_sentiment_counts.fill(0);
    fv.aspect_sentiment_counts.fill(0);
    for (const auto& ann : annotations) {
        for (const auto& [aspect, sentiment] : ann.pairs) {
            const auto s = static_cast<std::size_t>(sentiment);
            fv.sentiment_counts[s] += 1;
            fv.source_sentiment_counts[static_cast<std::size_t>(ann.source) * kSentimentCount + s] += 1;
            fv.aspect_sentiment_counts[static_cast<std::size_t>(aspect) * kSentimentCount + s] += 1;
        }
    }
    fv.scores = sentiment_scores(fv.sentiment_counts[static_cast<std::size_t>(SentimentLabel::positive)],
                                 fv.sentiment_counts[static_cast<std::size_t>(SentimentLabel::negative)]);
}

inline CountGrouping grouping_for_model(int model_id) {
    switch (model_id) {
        case 1:
        case 2: return CountGrouping::sentiment;
        case 3:
        case 4: return CountGrouping::source_sentiment;
        case 5: return CountGrouping::aspect_sentiment;
        default:
            throw std::invalid_argument("model id must be 1..5, got " + std::to_string(model_id));
    }
}

inline bool model_uses_scores(int model_id) { return model_id == 2 || model_id == 4; }

struct DesignMatrix {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> column_names;
    std::vector<EventKey> rows;
    std::vector<EventKey> dropped_rows; // missing-score rows (Models 2 and 4)
    IndustryCode baseline_industry = IndustryCode::agro;
};

/// Assemble the regression design for one model: intercept, count columns
/// for the model's grouping, five controls, seven industry dummies with the
/// largest industry as baseline, plus both scores for Models 2 and 4.
/// y holds the per-event CAR for the requested window.
inline DesignMatrix build_design_matrix(int model_id,
                                        const std::vector<DocumentFeatureVector>& features,
                                        const std::map<EventKey, double>& cars) {
    const CountGrouping grouping = grouping_for_model(model_id);
    const bool with_scores = model_uses_scores(model_id);

    for (const auto& fv : features) {
        if (cars.find(fv.key()) == cars.end()) {
            throw std::invalid_argument("build_design_matrix: no CAR for event " + fv.firm_id +
                                        "/" + to_string(fv.event_date));
        }
    }

    // baseline = most frequent industry across all candidate rows, ties to
    // the lowest enumeration index
    std::array<int, kIndustryCount> industry_freq{};
    for (const auto& fv : features) {
        industry_freq[static_cast<std::size_t>(fv.industry)] += 1;
    }
    std::size_t baseline = 0;
    for (std::size_t i = 1; i < industry_freq.size(); ++i) {
        if (industry_freq[i] > industry_freq[baseline]) baseline = i;
    }

    DesignMatrix out;
    out.baseline_industry = static_cast<IndustryCode>(baseline);
    out.column_names.emplace_back("intercept");
    for (auto& name : count_key_names(grouping)) out.column_names.push_back(std::move(name));
    for (const char* c : kControlNames) out.column_names.emplace_back(c);
    for (std::size_t i = 0; i < kIndustryCount; ++i) {
        if (i == baseline) continue;
        out.column_names.push_back(std::string("industry:") + kIndustryNames[i]);
    }
    if (with_scores) {
        out.column_names.emplace_back("score1");
        out.column_names.emplace_back("score2");
    }

    std::vector<const DocumentFeatureVector*> kept;
    for (const auto& fv : features) {
        if (with_scores && !fv.scores) {
            out.dropped_rows.push_back(fv.key());
            continue;
        }
        kept.push_back(&fv);
    }
    if (kept.empty()) {
        throw InsufficientDataError("build_design_matrix: all rows dropped for model " +
                                    std::to_string(model_id));
    }

    const auto n = static_cast<Eigen::Index>(kept.size());
    const auto k = static_cast<Eigen::Index>(out.column_names.size());
    out.X.resize(n, k);
    out.y.resize(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        const DocumentFeatureVector& fv = *kept[static_cast<std::size_t>(r)];
        Eigen::Index c = 0;
        out.X(r, c++) = 1.0;
        switch (grouping) {
            case CountGrouping::sentiment:
                for (int v : fv.sentiment_counts) out.X(r, c++) = v;
                break;
            case CountGrouping::source_sentiment:
                for (int v : fv.source_sentiment_counts) out.X(r, c++) = v;
                break;
            case CountGrouping::aspect_sentiment:
                for (int v : fv.aspect_sentiment_counts) out.X(r, c++) = v;
                break;
        }
        out.X(r, c++) = fv.controls.firm_size;
        out.X(r, c++) = fv.controls.tobins_q;
        out.X(r, c++) = fv.controls.roa;
        out.X(r, c++) = fv.controls.leverage;
        out.X(r, c++) = fv.controls.volatility;
        for (std::size_t i = 0; i < kIndustryCount; ++i) {
            if (i == baseline) continue;
            out.X(r, c++) = fv.industry == static_cast<IndustryCode>(i) ? 1.0 : 0.0;
        }
        if (with_scores) {
            out.X(r, c++) = fv.scores->score1;
            out.X(r, c++) = fv.scores->score2;
        }
        out.y(r) = cars.at(fv.key());
        out.rows.push_back(fv.key());
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Annotations JSONL: one object per paragraph,
/// {"firm": str, "year": int, "source": "MDA"|"Risk"|"Sustainability",
///  "pairs": [{"aspect": str, "sentiment": str}, ...]}.
inline std::vector<ParagraphAnnotation> load_annotations_jsonl(const std::string& path) {
    auto in = open_input_file(path);
    std::vector<ParagraphAnnotation> out;
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = path + ":" + std::to_string(line_number);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": invalid JSON: " + e.what());
        }
        try {
            ParagraphAnnotation ann;
            ann.firm_id = obj.at("firm").get<std::string>();
            ann.report_year = obj.at("year").get<int>();
            ann.source = parse_source(obj.at("source").get<std::string>());
            for (const auto& pair : obj.at("pairs")) {
                ann.pairs.emplace_back(parse_aspect(pair.at("aspect").get<std::string>()),
                                       parse_sentiment(pair.at("sentiment").get<std::string>()));
            }
            if (ann.pairs.empty()) {
                throw DataError("paragraph has no aspect-sentiment pairs");
            }
            out.push_back(std::move(ann));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

/// Fundamentals CSV, header
/// `firm,date,market_cap,total_assets,net_income,total_liabilities,industry`.
inline std::vector<FirmFundamentals> load_fundamentals_csv(const std::string& path) {
    auto in = open_input_file(path);
    CsvReader reader(in, path);
    reader.expect_header({"firm", "date", "market_cap", "total_assets", "net_income",
                          "total_liabilities", "industry"});
    std::vector<FirmFundamentals> out;
    std::vector<std::string> fields;
    while (reader.next_row(fields)) {
        reader.require_fields(fields, 7);
        FirmFundamentals f;
        f.firm_id = fields[0];
        try {
            f.date = parse_date(fields[1]);
            f.industry = parse_industry(fields[6]);
        } catch (const DataError& e) {
            throw DataError(reader.where() + ": " + e.what());
        }
        f.market_cap = reader.parse_double(fields[2], "market_cap");
        f.total_assets = reader.parse_double(fields[3], "total_assets");
        f.net_income = reader.parse_double(fields[4], "net_income");
        f.total_liabilities = reader.parse_double(fields[5], "total_liabilities");
        out.push_back(std::move(f));
    }
    return out;
}

/// Most recent fundamentals row for the firm dated at or before `asof`.
inline const FirmFundamentals* fundamentals_asof(const std::vector<FirmFundamentals>& rows,
                                                 const std::string& firm_id, const Date& asof) {
    const FirmFundamentals* best = nullptr;
    for (const auto& row : rows) {
        if (row.firm_id != firm_id || asof < row.date) continue;
        if (best == nullptr || best->date < row.date) best = &row;
    }
    return best;
}

// ---------------------------------------------------------------------------
// Pipeline assembly
// ---------------------------------------------------------------------------

struct FeatureBuildResult {
    std::vector<DocumentFeatureVector> features;
    std::vector<std::pair<EventKey, std::string>> dropped;
};

/// Join retained events with their annotations (matched on firm and the
/// submission year), fundamentals as of the event date, and trailing-return
/// volatility. Events missing any ingredient are dropped with a reason.
inline FeatureBuildResult build_feature_vectors(
    const std::vector<EventSpec>& events, const std::vector<ParagraphAnnotation>& annotations,
    const std::vector<FirmFundamentals>& fundamentals,
    const std::map<std::string, ReturnSeries>& firm_returns) {
    FeatureBuildResult result;
    for (const EventSpec& event : events) {
        const EventKey key{event.firm_id, event.event_date};
        std::vector<ParagraphAnnotation> doc;
        for (const auto& ann : annotations) {
            if (ann.firm_id == event.firm_id && ann.report_year == event.submission_date.year) {
                doc.push_back(ann);
            }
        }
        if (doc.empty()) {
            result.dropped.emplace_back(key, "no annotations for report year " +
                                                 std::to_string(event.submission_date.year));
            continue;
        }
        const FirmFundamentals* fund = fundamentals_asof(fundamentals, event.firm_id,
                                                         event.event_date);
        if (fund == nullptr) {
            result.dropped.emplace_back(key, "no fundamentals at or before event date");
            continue;
        }
        auto rit = firm_returns.find(event.firm_id);
        if (rit == firm_returns.end()) {
            result.dropped.emplace_back(key, "no return series");
            continue;
        }
        DocumentFeatureVector fv;
        fv.firm_id = event.firm_id;
        fv.event_date = event.event_date;
        fill_counts(fv, doc);
        fv.industry = fund->industry;
        try {
            fv.controls = compute_controls(*fund, rit->second, event.event_date);
        } catch (const std::exception& e) {
            result.dropped.emplace_back(key, e.what());
            continue;
        }
        result.features.push_back(std::move(fv));
    }
    return result;
}

} // namespace finsent
