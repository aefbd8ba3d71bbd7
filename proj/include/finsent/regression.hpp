#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "finsent/errors.hpp"
#include "finsent/event_study.hpp"
#include "finsent/linalg.hpp"
#include "finsent/log.hpp"
#include "finsent/rng.hpp"
#include "finsent/sentiment_features.hpp"

namespace finsent {

// ---------------------------------------------------------------------------
// OLS
// ---------------------------------------------------------------------------

struct OLSFit {
    Eigen::VectorXd coefficients;
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd t_stats;
    Eigen::VectorXd p_values;
    double r_squared = 0.0;
    Eigen::VectorXd residuals;
};

namespace detail {

inline double centered_sum_of_squares(const Eigen::VectorXd& y) {
    const double mean = y.mean();
    return (y.array() - mean).matrix().squaredNorm();
}

/// r² = 1 − SSR/SST, with the conventions SST = 0 → r² = 0 and tiny
/// negative values from roundoff clamped away.
inline double r_squared_from(const Eigen::VectorXd& y, const Eigen::VectorXd& residuals) {
    const double sst = centered_sum_of_squares(y);
    if (sst == 0.0) return 0.0;
    const double ssr = residuals.squaredNorm();
    return std::clamp(1.0 - ssr / sst, 0.0, 1.0);
}

} // namespace detail

/// Ordinary least squares with analytic inference. Standard errors come from
/// the σ̂²(XᵀX)⁻¹ diagonal, p-values from the t distribution with n−k
/// degrees of freedom.
inline OLSFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (y.size() != n) {
        throw std::invalid_argument("fit_ols: X has " + std::to_string(n) + " rows but y has " +
                                    std::to_string(y.size()));
    }
    if (n <= k) {
        throw InsufficientDataError("fit_ols: need more rows than columns, got " +
                                    std::to_string(n) + " rows for " + std::to_string(k) +
                                    " columns");
    }
    linalg::LeastSquares ls = linalg::solve_least_squares(X, y);

    OLSFit fit;
    fit.coefficients = std::move(ls.coefficients);
    fit.residuals = std::move(ls.residuals);
    fit.r_squared = detail::r_squared_from(y, fit.residuals);

    const double dof = static_cast<double>(n - k);
    const double sigma2 = fit.residuals.squaredNorm() / dof;
    fit.standard_errors.resize(k);
    fit.t_stats.resize(k);
    fit.p_values.resize(k);
    const boost::math::students_t_distribution<double> t_dist(dof);
    for (Eigen::Index j = 0; j < k; ++j) {
        const double variance = sigma2 * ls.xtx_inverse(j, j);
        const double se = variance > 0.0 ? std::sqrt(variance) : 0.0;
        fit.standard_errors(j) = se;
        if (se == 0.0) {
            const bool zero_coef = fit.coefficients(j) == 0.0;
            fit.t_stats(j) = zero_coef ? 0.0 : std::numeric_limits<double>::infinity();
            fit.p_values(j) = zero_coef ? 1.0 : 0.0;
        } else {
            const double t = fit.coefficients(j) / se;
            fit.t_stats(j) = t;
            fit.p_values(j) = 2.0 * boost::math::cdf(boost::math::complement(t_dist, std::abs(t)));
        }
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Ridge
// ---------------------------------------------------------------------------

struct RidgeFit {
    double lambda = 0.0;
    Eigen::VectorXd coefficients;              // original scale, [0] = intercept
    Eigen::VectorXd standardized_coefficients; // penalized scale, non-intercept only
    Eigen::VectorXd bootstrap_se;              // filled by bootstrap_se when run
    double r_squared = 0.0;
};

/// Ridge point estimates. The first column of X must be the all-ones
/// intercept; the remaining columns are standardized to zero mean and unit
/// sample variance before penalization, the intercept is left unpenalized,
/// and coefficients are mapped back to the original scale.
inline RidgeFit fit_ridge(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    if (lambda < 0.0) {
        throw std::invalid_argument("fit_ridge: negative lambda " + std::to_string(lambda));
    }
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (y.size() != n) {
        throw std::invalid_argument("fit_ridge: X has " + std::to_string(n) + " rows but y has " +
                                    std::to_string(y.size()));
    }
    if (k < 1 || !(X.col(0).array() == 1.0).all()) {
        throw std::invalid_argument("fit_ridge: first column of X must be the all-ones intercept");
    }
    if (n < 2) {
        throw InsufficientDataError("fit_ridge: need at least 2 rows, got " + std::to_string(n));
    }

    const Eigen::Index p = k - 1;
    RidgeFit fit;
    fit.lambda = lambda;
    fit.coefficients = Eigen::VectorXd::Zero(k);
    fit.standardized_coefficients = Eigen::VectorXd::Zero(p);

    const double y_mean = y.mean();
    if (p == 0) {
        fit.coefficients(0) = y_mean;
        fit.r_squared = 0.0;
        return fit;
    }

    Eigen::VectorXd means(p), stds(p);
    Eigen::MatrixXd Z(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto col = X.col(j + 1);
        const double mean = col.mean();
        const double ss = (col.array() - mean).matrix().squaredNorm();
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        if (sd == 0.0) {
            throw RankDeficientError("fit_ridge: column " + std::to_string(j + 1) +
                                     " is constant and cannot be standardized");
        }
        means(j) = mean;
        stds(j) = sd;
        Z.col(j) = (col.array() - mean) / sd;
    }
    const Eigen::VectorXd yc = y.array() - y_mean;

    Eigen::BDCSVD<Eigen::MatrixXd> svd(Z, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double sv_max = sv.size() > 0 ? sv(0) : 0.0;
    Eigen::VectorXd filter(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        const double s = sv(i);
        if (lambda == 0.0) {
            if (s <= sv_max * linalg::kRankTolerance) {
                throw RankDeficientError(
                    "fit_ridge: rank-deficient design with lambda = 0 (singular value " +
                    std::to_string(s) + ")");
            }
            filter(i) = 1.0 / s;
        } else {
            filter(i) = s / (s * s + lambda);
        }
    }
    const Eigen::VectorXd beta_std =
        svd.matrixV() * filter.asDiagonal() * (svd.matrixU().transpose() * yc);

    fit.standardized_coefficients = beta_std;
    for (Eigen::Index j = 0; j < p; ++j) {
        fit.coefficients(j + 1) = beta_std(j) / stds(j);
    }
    fit.coefficients(0) = y_mean - means.dot(fit.coefficients.tail(p));

    const Eigen::VectorXd residuals = y - X * fit.coefficients;
    fit.r_squared = detail::r_squared_from(y, residuals);
    return fit;
}

// ---------------------------------------------------------------------------
// Bootstrap
// ---------------------------------------------------------------------------

struct BootstrapConfig {
    long resamples = 10000;
    std::uint64_t seed = 0;
    int threads = 0; // 0 = hardware concurrency
};

struct BootstrapResult {
    Eigen::VectorXd se;
    Eigen::VectorXd ci_low;  // 2.5th percentile of resampled coefficients
    Eigen::VectorXd ci_high; // 97.5th percentile
    long redraws = 0;
};

namespace detail {

inline double percentile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t m = sorted.size();
    if (m == 1) return sorted[0];
    const double pos = q * static_cast<double>(m - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= m) return sorted[m - 1];
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

} // namespace detail

/// Row-resampling bootstrap. Resample i derives its generator stream from
/// (seed, i), so results are byte-identical regardless of thread count; a
/// rank-deficient resample is redrawn from (seed, i, attempt+1), with a
/// global redraw cap of 10x resamples.
inline BootstrapResult bootstrap_se(
    const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
    const std::function<Eigen::VectorXd(const Eigen::MatrixXd&, const Eigen::VectorXd&)>& fitter,
    const BootstrapConfig& config) {
    if (config.resamples < 1) {
        throw std::invalid_argument("bootstrap_se: resamples must be >= 1, got " +
                                    std::to_string(config.resamples));
    }
    if (config.resamples < 100) {
        log::warn("bootstrap_se: " + std::to_string(config.resamples) +
                  " resamples is too few for stable standard errors");
    }
    const Eigen::Index n = X.rows();
    const Eigen::Index k = X.cols();
    if (y.size() != n) {
        throw std::invalid_argument("bootstrap_se: X and y row counts differ");
    }
    if (n < 1) {
        throw InsufficientDataError("bootstrap_se: empty design");
    }

    const long B = config.resamples;
    const long redraw_cap = 10 * B;
    Eigen::MatrixXd draws(B, k);
    std::atomic<long> redraws{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto run_range = [&](long begin, long end) {
        Eigen::MatrixXd Xb(n, k);
        Eigen::VectorXd yb(n);
        std::vector<std::size_t> idx(static_cast<std::size_t>(n));
        try {
            for (long i = begin; i < end; ++i) {
                for (std::uint32_t attempt = 0;; ++attempt) {
                    auto gen = derive_stream(config.seed, static_cast<std::uint64_t>(i), attempt);
                    for (auto& v : idx) {
                        v = static_cast<std::size_t>(
                            bounded_draw(gen, static_cast<std::uint64_t>(n)));
                    }
                    for (Eigen::Index r = 0; r < n; ++r) {
                        Xb.row(r) = X.row(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]));
                        yb(r) = y(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(r)]));
                    }
                    try {
                        draws.row(i) = fitter(Xb, yb).transpose();
                        break;
                    } catch (const RankDeficientError&) {
                        if (redraws.fetch_add(1) + 1 > redraw_cap) {
                            throw RankDeficientError(
                                "bootstrap_se: redraw cap of " + std::to_string(redraw_cap) +
                                " exceeded; design too degenerate to resample");
                        }
                    }
                }
            }
        } catch (...) {
            std::lock_guard<std::mutex> lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
        }
    };

    int threads = config.threads;
    if (threads <= 0) {
        threads = static_cast<int>(std::thread::hardware_concurrency());
        if (threads <= 0) threads = 1;
    }
    threads = static_cast<int>(std::min<long>(threads, B));
    if (threads <= 1) {
        run_range(0, B);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) {
            const long begin = B * t / threads;
            const long end = B * (t + 1) / threads;
            pool.emplace_back(run_range, begin, end);
        }
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    BootstrapResult out;
    out.redraws = redraws.load();
    out.se.resize(k);
    out.ci_low.resize(k);
    out.ci_high.resize(k);
    std::vector<double> column(static_cast<std::size_t>(B));
    for (Eigen::Index j = 0; j < k; ++j) {
        for (long i = 0; i < B; ++i) column[static_cast<std::size_t>(i)] = draws(i, j);
        if (B == 1) {
            out.se(j) = 0.0;
        } else {
            const double mean = draws.col(j).mean();
            const double ss = (draws.col(j).array() - mean).matrix().squaredNorm();
            out.se(j) = std::sqrt(ss / static_cast<double>(B - 1));
        }
        std::sort(column.begin(), column.end());
        out.ci_low(j) = detail::percentile_sorted(column, 0.025);
        out.ci_high(j) = detail::percentile_sorted(column, 0.975);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Significance flags
// ---------------------------------------------------------------------------

enum class SignificanceFlag { none, star, double_star, degenerate };

/// Normal-approximation z-test: |coef/se| >= 1.96 earns *, >= 2.576 earns **.
/// A zero SE with a nonzero coefficient is degenerate rather than significant.
inline SignificanceFlag significance_flags(double coefficient, double se) {
    if (se == 0.0) {
        return coefficient == 0.0 ? SignificanceFlag::none : SignificanceFlag::degenerate;
    }
    const double z = std::abs(coefficient / se);
    if (z >= 2.576) return SignificanceFlag::double_star;
    if (z >= 1.96) return SignificanceFlag::star;
    return SignificanceFlag::none;
}

inline const char* to_string(SignificanceFlag flag) {
    switch (flag) {
        case SignificanceFlag::none: return "";
        case SignificanceFlag::star: return "*";
        case SignificanceFlag::double_star: return "**";
        case SignificanceFlag::degenerate: return "degenerate";
    }
    return "";
}

// ---------------------------------------------------------------------------
// Full model grid
// ---------------------------------------------------------------------------

struct RunModelsConfig {
    std::vector<int> model_ids = {1, 2, 3, 4, 5};
    std::vector<int> windows = {1, 3, 5};
    double ridge_lambda = 1.0;
    BootstrapConfig bootstrap;
    bool run_ols = true;
    bool run_ridge = true;
};

/// One model x window cell. `error` is nonempty when the cell failed; the
/// remaining cells of the grid still run.
struct ModelCell {
    int model_id = 0;
    int window = 0;
    std::vector<std::string> terms;
    long n_rows = 0;
    std::vector<EventKey> dropped_rows;     // missing-score rows (Models 2 and 4)
    std::vector<EventKey> missing_car_rows; // events with no CAR for this window
    bool has_ols = false;
    OLSFit ols;
    std::vector<SignificanceFlag> ols_flags;
    bool has_ridge = false;
    RidgeFit ridge;
    BootstrapResult ridge_bootstrap;
    std::vector<SignificanceFlag> ridge_flags;
    std::string error;
};

struct RunModelsResult {
    std::vector<ModelCell> cells; // model-major, then window order as configured
    long failed_cells = 0;
};

/// Fit the full Models 1-5 x windows grid with OLS and bootstrap-ridge
/// estimators. `cars` maps window width to per-event CAR.
inline RunModelsResult run_models(const std::vector<DocumentFeatureVector>& features,
                                  const std::map<int, std::map<EventKey, double>>& cars,
                                  const RunModelsConfig& config) {
    RunModelsResult result;
    for (int model_id : config.model_ids) {
        for (int window : config.windows) {
            ModelCell cell;
            cell.model_id = model_id;
            cell.window = window;
            try {
                auto cars_it = cars.find(window);
                if (cars_it == cars.end()) {
                    throw DataError("no CAR values for window " + std::to_string(window));
                }
                std::vector<DocumentFeatureVector> usable;
                for (const auto& fv : features) {
                    if (cars_it->second.find(fv.key()) != cars_it->second.end()) {
                        usable.push_back(fv);
                    } else {
                        cell.missing_car_rows.push_back(fv.key());
                    }
                }
                DesignMatrix dm = build_design_matrix(model_id, usable, cars_it->second);
                cell.terms = dm.column_names;
                cell.n_rows = static_cast<long>(dm.rows.size());
                cell.dropped_rows = dm.dropped_rows;
                if (config.run_ols) {
                    cell.ols = fit_ols(dm.X, dm.y);
                    cell.has_ols = true;
                    for (Eigen::Index j = 0; j < cell.ols.coefficients.size(); ++j) {
                        cell.ols_flags.push_back(significance_flags(cell.ols.coefficients(j),
                                                                    cell.ols.standard_errors(j)));
                    }
                }
                if (config.run_ridge) {
                    const double lambda = config.ridge_lambda;
                    cell.ridge = fit_ridge(dm.X, dm.y, lambda);
                    cell.ridge_bootstrap = bootstrap_se(
                        dm.X, dm.y,
                        [lambda](const Eigen::MatrixXd& Xb, const Eigen::VectorXd& yb) {
                            return fit_ridge(Xb, yb, lambda).coefficients;
                        },
                        config.bootstrap);
                    cell.ridge.bootstrap_se = cell.ridge_bootstrap.se;
                    cell.has_ridge = true;
                    for (Eigen::Index j = 0; j < cell.ridge.coefficients.size(); ++j) {
                        cell.ridge_flags.push_back(significance_flags(
                            cell.ridge.coefficients(j), cell.ridge.bootstrap_se(j)));
                    }
                }
            } catch (const std::exception& e) {
                cell.error = e.what();
                result.failed_cells += 1;
                log::warn("model " + std::to_string(model_id) + " window " +
                          std::to_string(window) + " failed: " + e.what());
            }
            result.cells.push_back(std::move(cell));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Output tables
// ---------------------------------------------------------------------------

/// Coefficient table for one model across windows and estimators. The ci
/// columns carry bootstrap percentile intervals and are empty for OLS rows.
inline void write_results_csv(std::ostream& out, const RunModelsResult& result, int model_id) {
    out << "term,window,estimator,coefficient,std_error,flag,ci_low,ci_high\n";
    for (const auto& cell : result.cells) {
        if (cell.model_id != model_id || !cell.error.empty()) continue;
        if (cell.has_ols) {
            for (std::size_t j = 0; j < cell.terms.size(); ++j) {
                const auto idx = static_cast<Eigen::Index>(j);
                out << cell.terms[j] << ',' << cell.window << ",ols,"
                    << detail::format_double(cell.ols.coefficients(idx)) << ','
                    << detail::format_double(cell.ols.standard_errors(idx)) << ','
                    << to_string(cell.ols_flags[j]) << ",,\n";
            }
        }
        if (cell.has_ridge) {
            for (std::size_t j = 0; j < cell.terms.size(); ++j) {
                const auto idx = static_cast<Eigen::Index>(j);
                out << cell.terms[j] << ',' << cell.window << ",ridge,"
                    << detail::format_double(cell.ridge.coefficients(idx)) << ','
                    << detail::format_double(cell.ridge.bootstrap_se(idx)) << ','
                    << to_string(cell.ridge_flags[j]) << ','
                    << detail::format_double(cell.ridge_bootstrap.ci_low(idx)) << ','
                    << detail::format_double(cell.ridge_bootstrap.ci_high(idx)) << '\n';
            }
        }
    }
}

/// r² comparison grid for one model: `window,ols_r2,ridge_r2`, one row per
/// window. Failed or skipped estimators leave their cell empty.
inline void write_r2_grid_csv(std::ostream& out, const RunModelsResult& result, int model_id) {
    out << "window,ols_r2,ridge_r2\n";
    for (const auto& cell : result.cells) {
        if (cell.model_id != model_id) continue;
        out << cell.window << ',';
        if (cell.error.empty() && cell.has_ols) out << detail::format_double(cell.ols.r_squared);
        out << ',';
        if (cell.error.empty() && cell.has_ridge) out << detail::format_double(cell.ridge.r_squared);
        out << '\n';
    }
}

/// Run metadata: seed, lambda, resamples, and per-cell dropped-row counts.
inline nlohmann::json run_metadata_json(const RunModelsConfig& config,
                                        const RunModelsResult& result) {
    nlohmann::json meta;
    meta["seed"] = config.bootstrap.seed;
    meta["lambda"] = config.ridge_lambda;
    meta["resamples"] = config.bootstrap.resamples;
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& cell : result.cells) {
        nlohmann::json entry;
        entry["model"] = cell.model_id;
        entry["window"] = cell.window;
        entry["rows"] = cell.n_rows;
        entry["dropped_rows"] = cell.dropped_rows.size();
        entry["missing_car_rows"] = cell.missing_car_rows.size();
        if (!cell.error.empty()) entry["error"] = cell.error;
        dropped.push_back(std::move(entry));
    }
    meta["cells"] = std::move(dropped);
    meta["failed_cells"] = result.failed_cells;
    return meta;
}

} // namespace finsent
