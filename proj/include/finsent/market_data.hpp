#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "finsent/csv.hpp"
#include "finsent/date.hpp"
#include "finsent/errors.hpp"

namespace finsent {

/// Ordered set of trading dates. All relative-day arithmetic in the event
/// study counts positions in this calendar.
class TradingCalendar {
public:
    TradingCalendar() = default;

    explicit TradingCalendar(std::vector<Date> dates) : dates_(std::move(dates)) {
        std::sort(dates_.begin(), dates_.end());
        for (std::size_t i = 1; i < dates_.size(); ++i) {
            if (dates_[i] == dates_[i - 1]) {
                throw DataError("trading calendar contains duplicate date " +
                                to_string(dates_[i]));
            }
        }
    }

    const std::vector<Date>& dates() const { return dates_; }
    std::size_t size() const { return dates_.size(); }
    bool empty() const { return dates_.empty(); }

    bool contains(const Date& d) const {
        return std::binary_search(dates_.begin(), dates_.end(), d);
    }

    std::optional<std::size_t> index_of(const Date& d) const {
        auto it = std::lower_bound(dates_.begin(), dates_.end(), d);
        if (it == dates_.end() || *it != d) return std::nullopt;
        return static_cast<std::size_t>(it - dates_.begin());
    }

    /// First trading date strictly after `d`, if any.
    std::optional<Date> next_after(const Date& d) const {
        auto it = std::upper_bound(dates_.begin(), dates_.end(), d);
        if (it == dates_.end()) return std::nullopt;
        return *it;
    }

private:
    std::vector<Date> dates_;
};

/// Daily close prices for one instrument. Dates strictly increasing,
/// prices strictly positive; both enforced at construction.
struct PriceSeries {
    std::string instrument_id;
    std::vector<std::pair<Date, double>> observations;

    PriceSeries() = default;
    PriceSeries(std::string id, std::vector<std::pair<Date, double>> obs)
        : instrument_id(std::move(id)), observations(std::move(obs)) {
        validate();
    }

    void validate() const {
        for (std::size_t i = 0; i < observations.size(); ++i) {
            if (observations[i].second <= 0.0) {
                throw DataError("non-positive price " + std::to_string(observations[i].second) +
                                " for " + instrument_id + " on " +
                                to_string(observations[i].first));
            }
            if (i > 0 && !(observations[i - 1].first < observations[i].first)) {
                throw DataError("price dates not strictly increasing for " + instrument_id +
                                " at " + to_string(observations[i].first));
            }
        }
    }

    std::size_t size() const { return observations.size(); }
};

/// Daily returns (dimensionless fractions) for one instrument.
struct ReturnSeries {
    std::string instrument_id;
    std::vector<std::pair<Date, double>> observations;

    std::size_t size() const { return observations.size(); }

    std::optional<double> at(const Date& d) const {
        auto it = std::lower_bound(
            observations.begin(), observations.end(), d,
            [](const std::pair<Date, double>& o, const Date& key) { return o.first < key; });
        if (it == observations.end() || it->first != d) return std::nullopt;
        return it->second;
    }

    /// Observations with date in [first, last], inclusive.
    ReturnSeries slice(const Date& first, const Date& last) const {
        ReturnSeries out;
        out.instrument_id = instrument_id;
        for (const auto& [d, r] : observations) {
            if (d < first) continue;
            if (last < d) break;
            out.observations.emplace_back(d, r);
        }
        return out;
    }

    /// Keep only observations whose date is a member of the calendar.
    ReturnSeries restrict_to(const TradingCalendar& cal) const {
        ReturnSeries out;
        out.instrument_id = instrument_id;
        for (const auto& obs : observations) {
            if (cal.contains(obs.first)) out.observations.push_back(obs);
        }
        return out;
    }
};

/// One daily row of factor data: five factors plus the risk-free rate,
/// all daily fractions.
struct FactorRow {
    Date date;
    double mkt_rf = 0.0;
    double smb = 0.0;
    double hml = 0.0;
    double rmw = 0.0;
    double cma = 0.0;
    double rf = 0.0;
};

struct FactorSeries {
    std::vector<FactorRow> observations;

    std::size_t size() const { return observations.size(); }

    std::optional<FactorRow> at(const Date& d) const {
        auto it = std::lower_bound(
            observations.begin(), observations.end(), d,
            [](const FactorRow& r, const Date& key) { return r.date < key; });
        if (it == observations.end() || it->date != d) return std::nullopt;
        return *it;
    }

    void validate() const {
        for (std::size_t i = 1; i < observations.size(); ++i) {
            if (!(observations[i - 1].date < observations[i].date)) {
                throw DataError("factor dates not strictly increasing at " +
                                to_string(observations[i].date));
            }
        }
    }
};

enum class ReturnMethod { simple, log };

inline ReturnMethod parse_return_method(const std::string& s) {
    if (s == "simple") return ReturnMethod::simple;
    if (s == "log") return ReturnMethod::log;
    throw ConfigError("unknown return method '" + s + "', expected simple|log");
}

/// Daily returns from a price series. Each return is dated at the later
/// of the two prices it spans; output length is input length minus one.
inline ReturnSeries compute_returns(const PriceSeries& prices, ReturnMethod method) {
    if (prices.size() < 2) {
        throw InsufficientDataError("compute_returns: need at least 2 observations for " +
                                    prices.instrument_id + ", got " +
                                    std::to_string(prices.size()));
    }
    ReturnSeries out;
    out.instrument_id = prices.instrument_id;
    out.observations.reserve(prices.size() - 1);
    for (std::size_t i = 1; i < prices.size(); ++i) {
        const double prev = prices.observations[i - 1].second;
        const double cur = prices.observations[i].second;
        const double r = method == ReturnMethod::simple ? cur / prev - 1.0
                                                        : std::log(cur / prev);
        out.observations.emplace_back(prices.observations[i].first, r);
    }
    return out;
}

/// Calendar trading days inside (first obs, last obs] with no observation.
/// Nonzero counts indicate returns that span a thin-trading gap.
inline long count_gap_days(const ReturnSeries& series, const TradingCalendar& cal) {
    if (series.observations.size() < 2) return 0;
    const Date first = series.observations.front().first;
    const Date last = series.observations.back().first;
    long observed = 0;
    long in_range = 0;
    for (const auto& d : cal.dates()) {
        if (d <= first || last < d) continue;
        ++in_range;
        if (series.at(d).has_value()) ++observed;
    }
    return in_range - observed;
}

struct AlignedReturns {
    std::vector<Date> dates;
    std::vector<double> a;
    std::vector<double> b;

    std::size_t size() const { return dates.size(); }
};

struct AlignedFactorReturns {
    std::vector<Date> dates;
    std::vector<double> returns;
    std::vector<FactorRow> factors;

    std::size_t size() const { return dates.size(); }
};

/// Pair two return series on their common dates, order-preserving.
inline AlignedReturns align(const ReturnSeries& a, const ReturnSeries& b) {
    if (a.observations.empty() || b.observations.empty()) {
        throw InsufficientDataError("align: empty input series");
    }
    AlignedReturns out;
    std::size_t i = 0, j = 0;
    while (i < a.observations.size() && j < b.observations.size()) {
        const Date& da = a.observations[i].first;
        const Date& db = b.observations[j].first;
        if (da < db) {
            ++i;
        } else if (db < da) {
            ++j;
        } else {
            out.dates.push_back(da);
            out.a.push_back(a.observations[i].second);
            out.b.push_back(b.observations[j].second);
            ++i;
            ++j;
        }
    }
    if (out.dates.empty()) throw InsufficientDataError("align: no common dates");
    return out;
}

inline AlignedFactorReturns align(const ReturnSeries& a, const FactorSeries& b) {
    if (a.observations.empty() || b.observations.empty()) {
        throw InsufficientDataError("align: empty input series");
    }
    AlignedFactorReturns out;
    std::size_t i = 0, j = 0;
    while (i < a.observations.size() && j < b.observations.size()) {
        const Date& da = a.observations[i].first;
        const Date& db = b.observations[j].date;
        if (da < db) {
            ++i;
        } else if (db < da) {
            ++j;
        } else {
            out.dates.push_back(da);
            out.returns.push_back(a.observations[i].second);
            out.factors.push_back(b.observations[j]);
            ++i;
            ++j;
        }
    }
    if (out.dates.empty()) throw InsufficientDataError("align: no common dates");
    return out;
}

/// r_t - rf_t on each date common to the return and factor series.
inline ReturnSeries excess_returns(const ReturnSeries& returns, const FactorSeries& factors) {
    AlignedFactorReturns aligned = align(returns, factors);
    ReturnSeries out;
    out.instrument_id = returns.instrument_id;
    out.observations.reserve(aligned.size());
    for (std::size_t i = 0; i < aligned.size(); ++i) {
        out.observations.emplace_back(aligned.dates[i],
                                      aligned.returns[i] - aligned.factors[i].rf);
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Prices CSV, header `instrument,date,close`. Rows for any number of
/// instruments may be interleaved; each instrument's dates must be
/// strictly increasing.
inline std::map<std::string, PriceSeries> load_prices_csv(const std::string& path) {
    auto in = open_input_file(path);
    CsvReader reader(in, path);
    reader.expect_header({"instrument", "date", "close"});
    std::map<std::string, PriceSeries> out;
    std::vector<std::string> fields;
    while (reader.next_row(fields)) {
        reader.require_fields(fields, 3);
        Date d;
        try {
            d = parse_date(fields[1]);
        } catch (const DataError& e) {
            throw DataError(reader.where() + ": " + e.what());
        }
        const double close = reader.parse_double(fields[2], "close");
        if (close <= 0.0) {
            throw DataError(reader.where() + ": non-positive close " + fields[2]);
        }
        PriceSeries& series = out[fields[0]];
        series.instrument_id = fields[0];
        if (!series.observations.empty() && !(series.observations.back().first < d)) {
            throw DataError(reader.where() + ": dates for " + fields[0] +
                            " not strictly increasing");
        }
        series.observations.emplace_back(d, close);
    }
    return out;
}

/// Factors CSV, header `date,mkt_rf,smb,hml,rmw,cma,rf`, daily fractions.
inline FactorSeries load_factors_csv(const std::string& path) {
    auto in = open_input_file(path);
    CsvReader reader(in, path);
    reader.expect_header({"date", "mkt_rf", "smb", "hml", "rmw", "cma", "rf"});
    FactorSeries out;
    std::vector<std::string> fields;
    while (reader.next_row(fields)) {
        reader.require_fields(fields, 7);
        FactorRow row;
        try {
            row.date = parse_date(fields[0]);
        } catch (const DataError& e) {
            throw DataError(reader.where() + ": " + e.what());
        }
        row.mkt_rf = reader.parse_double(fields[1], "mkt_rf");
        row.smb = reader.parse_double(fields[2], "smb");
        row.hml = reader.parse_double(fields[3], "hml");
        row.rmw = reader.parse_double(fields[4], "rmw");
        row.cma = reader.parse_double(fields[5], "cma");
        row.rf = reader.parse_double(fields[6], "rf");
        if (!out.observations.empty() && !(out.observations.back().date < row.date)) {
            throw DataError(reader.where() + ": factor dates not strictly increasing");
        }
        out.observations.push_back(row);
    }
    return out;
}

/// Calendar file: one ISO date per line.
inline TradingCalendar load_calendar_file(const std::string& path) {
    auto in = open_input_file(path);
    std::vector<Date> dates;
    std::string line;
    long line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            dates.push_back(parse_date(line));
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line_number) + ": " + e.what());
        }
    }
    return TradingCalendar(std::move(dates));
}

/// Calendar derived from the dates of a return or factor series.
inline TradingCalendar calendar_from_returns(const ReturnSeries& series) {
    std::vector<Date> dates;
    dates.reserve(series.size());
    for (const auto& [d, r] : series.observations) dates.push_back(d);
    return TradingCalendar(std::move(dates));
}

inline TradingCalendar calendar_from_prices(const PriceSeries& prices) {
    std::vector<Date> dates;
    dates.reserve(prices.size());
    for (const auto& [d, p] : prices.observations) dates.push_back(d);
    return TradingCalendar(std::move(dates));
}

} // namespace finsent
