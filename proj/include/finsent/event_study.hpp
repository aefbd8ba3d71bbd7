#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "finsent/expected_return.hpp"
#include "finsent/market_data.hpp"

namespace finsent {

/// A firm's report submission resolved to a trading-day event date.
struct EventSpec {
    std::string firm_id;
    Date submission_date;
    Date event_date;
    std::vector<int> windows;
};

/// Abnormal returns at trading-day offsets -w..+w around the event date.
/// values[k] holds the AR at offset k - w.
struct AbnormalReturnSeries {
    std::string firm_id;
    Date event_date;
    int window = 0;
    std::vector<double> values;

    double at_offset(int offset) const {
        return values[static_cast<std::size_t>(offset + window)];
    }
};

struct CARValue {
    std::string firm_id;
    Date event_date;
    int window = 0;
    double car = 0.0;
};

struct CAARValue {
    int window = 0;
    double caar = 0.0;
    int n_events = 0;
};

/// First trading date strictly after the submission date. Reports become
/// public the day after submission, so this is the event date.
inline Date resolve_event_date(const Date& submission, const TradingCalendar& calendar) {
    auto next = calendar.next_after(submission);
    if (!next) {
        throw InsufficientDataError("resolve_event_date: no trading date after " +
                                    to_string(submission));
    }
    return *next;
}

/// Everything needed to evaluate predict_normal across a window of dates.
struct NormalModelInputs {
    const ReturnSeries* market = nullptr;
    const FactorSeries* factors = nullptr;

    NormalInput at(const Date& d) const {
        NormalInput input;
        if (market != nullptr) input.market_return = market->at(d);
        if (factors != nullptr) input.factors = factors->at(d);
        return input;
    }
};

/// AR_t = actual_t - predicted_t for every trading-day offset in [-w, +w].
/// Missing actual returns or model inputs inside the window raise
/// InsufficientDataError; callers drop the event and report the reason.
inline AbnormalReturnSeries compute_ar(const EventSpec& event, int window,
                                       const ReturnSeries& actual,
                                       const ExpectedReturnModel& model,
                                       const NormalModelInputs& inputs,
                                       const TradingCalendar& calendar) {
    auto idx = calendar.index_of(event.event_date);
    if (!idx) {
        throw InsufficientDataError("compute_ar: event date " + to_string(event.event_date) +
                                    " not in calendar");
    }
    const auto center = static_cast<long>(*idx);
    if (center - window < 0 ||
        center + window >= static_cast<long>(calendar.size())) {
        throw InsufficientDataError("compute_ar: window " + std::to_string(window) +
                                    " around " + to_string(event.event_date) +
                                    " extends outside the calendar");
    }
    AbnormalReturnSeries out;
    out.firm_id = event.firm_id;
    out.event_date = event.event_date;
    out.window = window;
    out.values.reserve(static_cast<std::size_t>(2 * window + 1));
    for (int offset = -window; offset <= window; ++offset) {
        const Date d = calendar.dates()[static_cast<std::size_t>(center + offset)];
        auto r = actual.at(d);
        if (!r) {
            throw InsufficientDataError("compute_ar: missing return for " + event.firm_id +
                                        " at offset " + std::to_string(offset) + " (" +
                                        to_string(d) + ")");
        }
        double predicted;
        try {
            predicted = predict_normal(model, inputs.at(d));
        } catch (const InsufficientDataError&) {
            throw InsufficientDataError("compute_ar: missing model inputs at offset " +
                                        std::to_string(offset) + " (" + to_string(d) + ")");
        }
        out.values.push_back(*r - predicted);
    }
    return out;
}

inline CARValue compute_car(const AbnormalReturnSeries& ar) {
    double sum = 0.0;
    for (double v : ar.values) sum += v;
    return CARValue{ar.firm_id, ar.event_date, ar.window, sum};
}

inline CAARValue compute_caar(const std::vector<CARValue>& cars, int window) {
    if (cars.empty()) {
        throw InsufficientDataError("compute_caar: empty CAR list");
    }
    double sum = 0.0;
    for (const CARValue& c : cars) {
        if (c.window != window) {
            throw std::invalid_argument("compute_caar: CAR for window " +
                                        std::to_string(c.window) + " mixed into window " +
                                        std::to_string(window));
        }
        sum += c.car;
    }
    return CAARValue{window, sum / static_cast<double>(cars.size()),
                     static_cast<int>(cars.size())};
}

struct EventStudyConfig {
    ExpectedReturnKind model = ExpectedReturnKind::fama_french;
    std::vector<int> windows = {1, 3, 5};
    int estimation_length = kDefaultEstimationLength;
    int min_observations = kDefaultMinObservations;
};

struct DroppedEvent {
    std::string firm_id;
    Date submission_date;
    std::string reason;
};

struct MeanAbnormalReturn {
    int window = 0;
    int offset = 0;
    double mean_ar = 0.0;
    int n_events = 0;
};

struct EventStudyResult {
    std::vector<EventSpec> events;              // retained events, sorted (firm, event_date)
    std::vector<CARValue> cars;                 // ordered by (firm, event_date, window)
    std::vector<CAARValue> caars;               // one per window with >=1 CAR
    std::vector<MeanAbnormalReturn> mean_ar;    // plot data, per (window, offset)
    std::vector<DroppedEvent> dropped;
    std::vector<std::string> overlap_flags;     // same-firm events with overlapping windows
    std::map<std::string, long> gap_counts;     // thin-trading gaps per firm series
};

/// Full event-study pass: resolve dates, fit the configured normal-return
/// model per event, compute AR/CAR per window and CAAR across events.
/// Per-event failures are recorded in `dropped`, never fatal.
inline EventStudyResult run_event_study(
    const std::map<std::string, ReturnSeries>& firm_returns, const ReturnSeries* market,
    const FactorSeries* factors, const TradingCalendar& calendar,
    const std::vector<std::pair<std::string, Date>>& events, const EventStudyConfig& config) {
    if (config.windows.empty()) {
        throw std::invalid_argument("run_event_study: no event windows configured");
    }
    if (config.model == ExpectedReturnKind::market && market == nullptr) {
        throw std::invalid_argument("run_event_study: market model requires a market series");
    }
    if (config.model == ExpectedReturnKind::fama_french && factors == nullptr) {
        throw std::invalid_argument("run_event_study: fama_french model requires factors");
    }

    const int widest = *std::max_element(config.windows.begin(), config.windows.end());
    NormalModelInputs inputs;
    inputs.market = market;
    inputs.factors = factors;

    // deterministic order regardless of input order
    std::vector<std::pair<std::string, Date>> ordered = events;
    std::sort(ordered.begin(), ordered.end());

    EventStudyResult result;
    for (const auto& [firm, series] : firm_returns) {
        result.gap_counts[firm] = count_gap_days(series, calendar);
    }

    struct Resolved {
        EventSpec spec;
        std::size_t center = 0;
    };
    std::vector<Resolved> resolved;

    for (const auto& [firm_id, submission] : ordered) {
        auto drop = [&](const std::string& reason) {
            result.dropped.push_back({firm_id, submission, reason});
        };
        auto it = firm_returns.find(firm_id);
        if (it == firm_returns.end()) {
            drop("no return series for firm");
            continue;
        }
        Date event_date;
        try {
            event_date = resolve_event_date(submission, calendar);
        } catch (const InsufficientDataError& e) {
            drop(e.what());
            continue;
        }
        const std::size_t center = *calendar.index_of(event_date);
        if (static_cast<long>(center) - widest - 1 < 0 ||
            center + static_cast<std::size_t>(widest) >= calendar.size()) {
            drop("event window outside calendar bounds");
            continue;
        }

        EstimationWindow window;
        window.length = config.estimation_length;
        window.end = calendar.dates()[center - static_cast<std::size_t>(widest) - 1];
        window.min_observations = config.min_observations;

        ExpectedReturnModel model;
        try {
            switch (config.model) {
                case ExpectedReturnKind::constant_mean: {
                    auto [start, end] = detail::estimation_date_range(window, calendar);
                    model = fit_constant_mean(it->second.slice(start, end),
                                              config.min_observations);
                    break;
                }
                case ExpectedReturnKind::market:
                    model = fit_market_model(it->second, *market, window, calendar);
                    break;
                case ExpectedReturnKind::fama_french: {
                    ReturnSeries excess = excess_returns(it->second, *factors);
                    model = fit_fama_french(excess, *factors, window, calendar);
                    break;
                }
            }
        } catch (const std::exception& e) {
            drop(std::string("estimation failed: ") + e.what());
            continue;
        }

        EventSpec spec{firm_id, submission, event_date, config.windows};
        std::vector<CARValue> event_cars;
        std::string window_failures;
        for (int w : config.windows) {
            try {
                AbnormalReturnSeries ar = compute_ar(spec, w, it->second, model, inputs, calendar);
                event_cars.push_back(compute_car(ar));
                for (int offset = -w; offset <= w; ++offset) {
                    bool found = false;
                    for (auto& m : result.mean_ar) {
                        if (m.window == w && m.offset == offset) {
                            m.mean_ar += ar.at_offset(offset);
                            m.n_events += 1;
                            found = true;
                            break;
                        }
                    }
                    if (!found) {
                        result.mean_ar.push_back({w, offset, ar.at_offset(offset), 1});
                    }
                }
            } catch (const InsufficientDataError& e) {
                if (!window_failures.empty()) window_failures += "; ";
                window_failures += e.what();
            }
        }
        if (event_cars.empty()) {
            drop("no complete window: " + window_failures);
            continue;
        }
        if (!window_failures.empty()) {
            result.dropped.push_back({firm_id, submission,
                                      "partial windows dropped: " + window_failures});
        }
        for (auto& c : event_cars) result.cars.push_back(std::move(c));
        resolved.push_back({std::move(spec), center});
    }

    // flag same-firm events whose widest windows overlap
    for (std::size_t i = 0; i < resolved.size(); ++i) {
        for (std::size_t j = i + 1; j < resolved.size(); ++j) {
            if (resolved[i].spec.firm_id != resolved[j].spec.firm_id) continue;
            const long gap = std::labs(static_cast<long>(resolved[i].center) -
                                       static_cast<long>(resolved[j].center));
            if (gap <= 2L * widest) {
                result.overlap_flags.push_back(
                    resolved[i].spec.firm_id + ": events at " +
                    to_string(resolved[i].spec.event_date) + " and " +
                    to_string(resolved[j].spec.event_date) + " have overlapping windows");
            }
        }
    }

    std::sort(result.cars.begin(), result.cars.end(), [](const CARValue& a, const CARValue& b) {
        return std::tie(a.firm_id, a.event_date, a.window) <
               std::tie(b.firm_id, b.event_date, b.window);
    });
    for (const auto& r : resolved) result.events.push_back(r.spec);
    std::sort(result.events.begin(), result.events.end(),
              [](const EventSpec& a, const EventSpec& b) {
                  return std::tie(a.firm_id, a.event_date) < std::tie(b.firm_id, b.event_date);
              });

    for (int w : config.windows) {
        std::vector<CARValue> per_window;
        for (const auto& c : result.cars) {
            if (c.window == w) per_window.push_back(c);
        }
        if (!per_window.empty()) {
            result.caars.push_back(compute_caar(per_window, w));
        }
    }

    for (auto& m : result.mean_ar) {
        if (m.n_events > 0) m.mean_ar /= static_cast<double>(m.n_events);
    }
    std::sort(result.mean_ar.begin(), result.mean_ar.end(),
              [](const MeanAbnormalReturn& a, const MeanAbnormalReturn& b) {
                  return std::tie(a.window, a.offset) < std::tie(b.window, b.offset);
              });
    return result;
}

// ---------------------------------------------------------------------------
// Output formats
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

} // namespace detail

inline void write_car_csv(std::ostream& out, const std::vector<CARValue>& cars) {
    out << "firm,event_date,window,car\n";
    for (const auto& c : cars) {
        out << c.firm_id << "," << to_string(c.event_date) << "," << c.window << ","
            << detail::format_double(c.car) << "\n";
    }
}

inline void write_caar_csv(std::ostream& out, const std::vector<CAARValue>& caars) {
    out << "window,caar,n_events\n";
    for (const auto& c : caars) {
        out << c.window << "," << detail::format_double(c.caar) << "," << c.n_events << "\n";
    }
}

inline void write_mean_ar_csv(std::ostream& out, const std::vector<MeanAbnormalReturn>& rows) {
    out << "window,offset,mean_ar,n_events\n";
    for (const auto& m : rows) {
        out << m.window << "," << m.offset << "," << detail::format_double(m.mean_ar) << ","
            << m.n_events << "\n";
    }
}

/// Events CSV, header `firm,submission_date`.
inline std::vector<std::pair<std::string, Date>> load_events_csv(const std::string& path) {
    auto in = open_input_file(path);
    CsvReader reader(in, path);
    reader.expect_header({"firm", "submission_date"});
    std::vector<std::pair<std::string, Date>> out;
    std::vector<std::string> fields;
    while (reader.next_row(fields)) {
        reader.require_fields(fields, 2);
        try {
            out.emplace_back(fields[0], parse_date(fields[1]));
        } catch (const DataError& e) {
            throw DataError(reader.where() + ": " + e.what());
        }
    }
    return out;
}

} // namespace finsent
