#pragma once

#include <array>
#include <numeric>
#include <optional>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "finsent/linalg.hpp"
#include "finsent/market_data.hpp"

namespace finsent {

inline constexpr int kEstimationLengthFloor = 30;
inline constexpr int kDefaultEstimationLength = 250;
inline constexpr int kDefaultMinObservations = 60;

/// Estimation window: the `length` trading days ending at `end`, where
/// `end` is the last trading date strictly before the event window.
struct EstimationWindow {
    int length = kDefaultEstimationLength;
    Date end;
    int min_observations = kDefaultMinObservations;
};

struct ConstantMeanModel {
    double mu = 0.0;
};

struct MarketModel {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Loadings ordered (mkt_rf, smb, hml, rmw, cma). Fitted on excess
/// returns; predictions add back the risk-free rate.
struct FamaFrenchModel {
    double alpha = 0.0;
    std::array<double, 5> loadings{};
};

using ExpectedReturnModel = std::variant<ConstantMeanModel, MarketModel, FamaFrenchModel>;

enum class ExpectedReturnKind { constant_mean, market, fama_french };

inline ExpectedReturnKind parse_expected_return_kind(const std::string& s) {
    if (s == "constant_mean") return ExpectedReturnKind::constant_mean;
    if (s == "market") return ExpectedReturnKind::market;
    if (s == "fama_french") return ExpectedReturnKind::fama_french;
    throw ConfigError("unknown expected-return model '" + s +
                      "', expected constant_mean|market|fama_french");
}

inline std::string to_string(ExpectedReturnKind kind) {
    switch (kind) {
        case ExpectedReturnKind::constant_mean: return "constant_mean";
        case ExpectedReturnKind::market: return "market";
        case ExpectedReturnKind::fama_french: return "fama_french";
    }
    return "?";
}

namespace detail {

inline void validate_window(const EstimationWindow& w) {
    if (w.length < kEstimationLengthFloor) {
        throw std::invalid_argument("estimation window length " + std::to_string(w.length) +
                                    " below floor " + std::to_string(kEstimationLengthFloor));
    }
}

/// Date range [start, end] covering the last `length` trading days of the
/// calendar ending at `w.end`.
inline std::pair<Date, Date> estimation_date_range(const EstimationWindow& w,
                                                   const TradingCalendar& cal) {
    auto idx = cal.index_of(w.end);
    if (!idx) {
        throw std::invalid_argument("estimation window end " + to_string(w.end) +
                                    " is not a trading date");
    }
    const std::size_t end_i = *idx;
    const std::size_t span = static_cast<std::size_t>(w.length);
    const std::size_t start_i = end_i + 1 >= span ? end_i + 1 - span : 0;
    return {cal.dates()[start_i], w.end};
}

} // namespace detail

/// Mean daily return over the estimation sample.
inline ConstantMeanModel fit_constant_mean(const ReturnSeries& est,
                                           int min_observations = kDefaultMinObservations) {
    if (static_cast<int>(est.size()) < min_observations) {
        throw InsufficientDataError("fit_constant_mean: " + std::to_string(est.size()) +
                                    " observations, need " + std::to_string(min_observations));
    }
    double sum = 0.0;
    for (const auto& [d, r] : est.observations) sum += r;
    return ConstantMeanModel{sum / static_cast<double>(est.size())};
}

/// OLS of stock returns on market returns with intercept, over the
/// estimation window.
inline MarketModel fit_market_model(const ReturnSeries& stock, const ReturnSeries& market,
                                    const EstimationWindow& window, const TradingCalendar& cal) {
    detail::validate_window(window);
    auto [start, end] = detail::estimation_date_range(window, cal);
    AlignedReturns aligned = align(stock.slice(start, end), market.slice(start, end));
    const auto n = static_cast<Eigen::Index>(aligned.size());
    if (n < window.min_observations) {
        throw InsufficientDataError("fit_market_model: " + std::to_string(n) +
                                    " aligned observations, need " +
                                    std::to_string(window.min_observations));
    }
    double market_mean = std::accumulate(aligned.b.begin(), aligned.b.end(), 0.0) / n;
    double market_var = 0.0;
    for (double m : aligned.b) market_var += (m - market_mean) * (m - market_mean);
    if (market_var == 0.0) {
        throw RankDeficientError("fit_market_model: zero variance in market returns");
    }

    Eigen::MatrixXd X(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X(i, 1) = aligned.b[static_cast<std::size_t>(i)];
        y(i) = aligned.a[static_cast<std::size_t>(i)];
    }
    auto fit = linalg::solve_least_squares(X, y);
    return MarketModel{fit.coefficients(0), fit.coefficients(1)};
}

/// OLS of excess stock returns on the five factor columns with intercept.
inline FamaFrenchModel fit_fama_french(const ReturnSeries& stock_excess,
                                       const FactorSeries& factors,
                                       const EstimationWindow& window,
                                       const TradingCalendar& cal) {
    detail::validate_window(window);
    auto [start, end] = detail::estimation_date_range(window, cal);
    ReturnSeries stock_slice = stock_excess.slice(start, end);
    AlignedFactorReturns windowed = align(stock_slice, factors);
    const auto n = static_cast<Eigen::Index>(windowed.size());
    if (n < window.min_observations) {
        throw InsufficientDataError("fit_fama_french: " + std::to_string(n) +
                                    " aligned observations, need " +
                                    std::to_string(window.min_observations));
    }
    Eigen::MatrixXd X(n, 6);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const FactorRow& f = windowed.factors[static_cast<std::size_t>(i)];
        X(i, 0) = 1.0;
        X(i, 1) = f.mkt_rf;
        X(i, 2) = f.smb;
        X(i, 3) = f.hml;
        X(i, 4) = f.rmw;
        X(i, 5) = f.cma;
        y(i) = windowed.returns[static_cast<std::size_t>(i)];
    }
    auto fit = linalg::solve_least_squares(X, y);
    FamaFrenchModel model;
    model.alpha = fit.coefficients(0);
    for (int k = 0; k < 5; ++k) model.loadings[static_cast<std::size_t>(k)] = fit.coefficients(k + 1);
    return model;
}

/// Per-date inputs for predict_normal; which fields must be present
/// depends on the model kind.
struct NormalInput {
    std::optional<double> market_return;
    std::optional<FactorRow> factors;
};

/// Expected daily return under the fitted model. The Fama-French model
/// predicts an excess return, so the risk-free rate is added back.
inline double predict_normal(const ExpectedReturnModel& model, const NormalInput& input) {
    return std::visit(
        [&](const auto& m) -> double {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, ConstantMeanModel>) {
                return m.mu;
            } else if constexpr (std::is_same_v<T, MarketModel>) {
                if (!input.market_return) {
                    throw InsufficientDataError("predict_normal: missing market return");
                }
                return m.alpha + m.beta * *input.market_return;
            } else {
                if (!input.factors) {
                    throw InsufficientDataError("predict_normal: missing factor row");
                }
                const FactorRow& f = *input.factors;
                return f.rf + m.alpha + m.loadings[0] * f.mkt_rf + m.loadings[1] * f.smb +
                       m.loadings[2] * f.hml + m.loadings[3] * f.rmw + m.loadings[4] * f.cma;
            }
        },
        model);
}

} // namespace finsent
