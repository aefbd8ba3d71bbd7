#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "finsent/classifier.hpp"
#include "finsent/config.hpp"
#include "finsent/errors.hpp"
#include "finsent/event_study.hpp"
#include "finsent/log.hpp"
#include "finsent/manifest.hpp"
#include "finsent/market_data.hpp"
#include "finsent/regression.hpp"
#include "finsent/sentiment_features.hpp"

namespace finsent {

inline constexpr int kExitSuccess = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitPartialFailure = 3;

namespace detail {

inline std::string output_path(const RunConfig& config, const std::string& name) {
    return (std::filesystem::path(config.output_dir) / name).string();
}

inline void ensure_output_dir(const RunConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec) {
        throw ConfigError("cannot create output directory " + config.output_dir + ": " +
                          ec.message());
    }
}

template <typename WriteFn>
void write_output_file(RunManifest& manifest, const std::string& path, WriteFn&& write) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path + " for writing");
    write(out);
    out.flush();
    if (!out) throw DataError("failed writing " + path);
    manifest.add_output(path);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Market-data assembly shared by event-study, regress, and returns
// ---------------------------------------------------------------------------

struct MarketDataBundle {
    std::map<std::string, ReturnSeries> firm_returns;
    ReturnSeries market;
    bool has_market = false;
    FactorSeries factors;
    bool has_factors = false;
    TradingCalendar calendar;
};

/// Load prices (and factors when configured), derive the trading calendar
/// from the calendar file or the market-index dates, and compute per-firm
/// return series restricted to that calendar. The market index itself is
/// separated out and not treated as a firm.
inline MarketDataBundle load_market_data(const RunConfig& config) {
    MarketDataBundle bundle;
    auto prices = load_prices_csv(config.prices);
    if (!config.market_index.empty() && prices.find(config.market_index) == prices.end()) {
        throw DataError("market_index '" + config.market_index + "' not present in " +
                        config.prices);
    }

    if (!config.calendar.empty()) {
        bundle.calendar = load_calendar_file(config.calendar);
    } else if (!config.market_index.empty()) {
        bundle.calendar = calendar_from_prices(prices.at(config.market_index));
    } else {
        throw ConfigError("no trading calendar available: provide 'calendar' or 'market_index'");
    }

    for (const auto& [instrument, series] : prices) {
        if (series.observations.size() < 2) {
            log::warn("skipping " + instrument + ": fewer than 2 price observations");
            continue;
        }
        ReturnSeries returns =
            compute_returns(series, config.return_method).restrict_to(bundle.calendar);
        if (returns.observations.empty()) {
            log::warn("skipping " + instrument + ": no return dates on the trading calendar");
            continue;
        }
        if (instrument == config.market_index) {
            bundle.market = std::move(returns);
            bundle.has_market = true;
        } else {
            bundle.firm_returns.emplace(instrument, std::move(returns));
        }
    }

    if (!config.factors.empty()) {
        bundle.factors = load_factors_csv(config.factors);
        bundle.has_factors = true;
    }
    return bundle;
}

namespace detail {

inline void add_market_inputs(RunManifest& manifest, const RunConfig& config) {
    manifest.add_input(config.prices);
    if (!config.factors.empty()) manifest.add_input(config.factors);
    if (!config.calendar.empty()) manifest.add_input(config.calendar);
}

inline nlohmann::json dropped_events_json(const std::vector<DroppedEvent>& dropped) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& d : dropped) {
        out.push_back({{"firm", d.firm_id},
                       {"submission_date", to_string(d.submission_date)},
                       {"reason", d.reason}});
    }
    return out;
}

inline EventStudyResult run_event_study_pipeline(const RunConfig& config,
                                                 const MarketDataBundle& bundle) {
    auto events = load_events_csv(config.events);
    EventStudyConfig es_config;
    es_config.model = config.model;
    es_config.windows = config.windows;
    es_config.estimation_length = static_cast<int>(config.estimation_length);
    es_config.min_observations = static_cast<int>(config.min_observations);
    return run_event_study(bundle.firm_returns, bundle.has_market ? &bundle.market : nullptr,
                           bundle.has_factors ? &bundle.factors : nullptr, bundle.calendar,
                           events, es_config);
}

inline void report_dropped_events(const EventStudyResult& result) {
    if (result.dropped.empty()) return;
    std::cerr << result.dropped.size() << " event(s) dropped:\n";
    for (const auto& d : result.dropped) {
        std::cerr << "  " << d.firm_id << " " << to_string(d.submission_date) << ": " << d.reason
                  << '\n';
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// event-study
// ---------------------------------------------------------------------------

inline int cmd_event_study(const RunConfig& config) {
    validate_run_config(config, Command::event_study);
    detail::ensure_output_dir(config);

    const MarketDataBundle bundle = load_market_data(config);
    const EventStudyResult result = detail::run_event_study_pipeline(config, bundle);

    RunManifest manifest;
    manifest.command = to_string(Command::event_study);
    manifest.config = config.snapshot;
    detail::add_market_inputs(manifest, config);
    manifest.add_input(config.events);

    detail::write_output_file(manifest, detail::output_path(config, "car.csv"),
                              [&](std::ostream& out) { write_car_csv(out, result.cars); });
    detail::write_output_file(manifest, detail::output_path(config, "caar.csv"),
                              [&](std::ostream& out) { write_caar_csv(out, result.caars); });
    detail::write_output_file(manifest, detail::output_path(config, "mean_ar.csv"),
                              [&](std::ostream& out) { write_mean_ar_csv(out, result.mean_ar); });

    manifest.dropped = detail::dropped_events_json(result.dropped);
    manifest.extra["n_events"] = result.events.size();
    manifest.extra["overlap_flags"] = result.overlap_flags;
    manifest.extra["gap_counts"] = result.gap_counts;
    write_manifest(manifest, detail::output_path(config, "manifest.json"));

    std::cout << "event-study: " << result.events.size() << " event(s) retained, "
              << result.dropped.size() << " dropped, windows:";
    for (const auto& caar : result.caars) {
        std::cout << " [-" << caar.window << ",+" << caar.window << "] caar="
                  << detail::format_double(caar.caar);
    }
    std::cout << '\n';
    detail::report_dropped_events(result);
    return result.dropped.empty() ? kExitSuccess : kExitPartialFailure;
}

// ---------------------------------------------------------------------------
// regress
// ---------------------------------------------------------------------------

inline int cmd_regress(const RunConfig& config) {
    validate_run_config(config, Command::regress);
    detail::ensure_output_dir(config);

    const MarketDataBundle bundle = load_market_data(config);
    const EventStudyResult study = detail::run_event_study_pipeline(config, bundle);
    const auto annotations = load_annotations_jsonl(config.annotations);
    const auto fundamentals = load_fundamentals_csv(config.fundamentals);

    const FeatureBuildResult features =
        build_feature_vectors(study.events, annotations, fundamentals, bundle.firm_returns);

    std::map<int, std::map<EventKey, double>> cars_by_window;
    for (const auto& car : study.cars) {
        cars_by_window[car.window][{car.firm_id, car.event_date}] = car.car;
    }

    RunModelsConfig models_config;
    models_config.windows = config.windows;
    models_config.ridge_lambda = config.ridge_lambda;
    models_config.bootstrap.resamples = config.resamples;
    models_config.bootstrap.seed = config.seed;
    models_config.bootstrap.threads = config.threads;
    const RunModelsResult models = run_models(features.features, cars_by_window, models_config);

    RunManifest manifest;
    manifest.command = to_string(Command::regress);
    manifest.config = config.snapshot;
    detail::add_market_inputs(manifest, config);
    manifest.add_input(config.events);
    manifest.add_input(config.annotations);
    manifest.add_input(config.fundamentals);

    for (int model_id : models_config.model_ids) {
        const std::string stem = "model" + std::to_string(model_id);
        detail::write_output_file(
            manifest, detail::output_path(config, stem + "_results.csv"),
            [&](std::ostream& out) { write_results_csv(out, models, model_id); });
        detail::write_output_file(
            manifest, detail::output_path(config, stem + "_r2.csv"),
            [&](std::ostream& out) { write_r2_grid_csv(out, models, model_id); });
    }
    detail::write_output_file(manifest, detail::output_path(config, "run_metadata.json"),
                              [&](std::ostream& out) {
                                  out << run_metadata_json(models_config, models).dump(2) << '\n';
                              });

    manifest.dropped = detail::dropped_events_json(study.dropped);
    for (const auto& [key, reason] : features.dropped) {
        manifest.dropped.push_back({{"firm", key.first},
                                    {"event_date", to_string(key.second)},
                                    {"reason", reason}});
    }
    manifest.extra["n_events"] = study.events.size();
    manifest.extra["n_feature_rows"] = features.features.size();
    manifest.extra["regression"] = run_metadata_json(models_config, models);
    write_manifest(manifest, detail::output_path(config, "manifest.json"));

    std::cout << "regress: " << features.features.size() << " feature row(s), "
              << models.cells.size() << " model cell(s), " << models.failed_cells
              << " failed\n";
    detail::report_dropped_events(study);
    if (!features.dropped.empty()) {
        std::cerr << features.dropped.size() << " event(s) lacked features:\n";
        for (const auto& [key, reason] : features.dropped) {
            std::cerr << "  " << key.first << " " << to_string(key.second) << ": " << reason
                      << '\n';
        }
    }
    const bool partial =
        !study.dropped.empty() || !features.dropped.empty() || models.failed_cells > 0;
    return partial ? kExitPartialFailure : kExitSuccess;
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

namespace detail {

struct PreparedSplit {
    std::vector<SparseVector> vectors;
    std::vector<int> labels;
    std::vector<std::string> ids;
    std::vector<std::pair<std::string, std::string>> dropped; // (id, reason)
};

/// Preprocess and vectorize one split. Training requires non-empty token
/// lists; evaluation keeps empty documents (the bias still predicts).
inline PreparedSplit prepare_split(const std::vector<CorpusDocument>& docs,
                                   const Vocabulary& vocab, ClassificationTask task,
                                   bool require_tokens) {
    PreparedSplit out;
    for (const auto& doc : docs) {
        const auto label = task_label(doc, task);
        if (!label) {
            out.dropped.emplace_back(doc.id, "no gold label for task");
            continue;
        }
        const auto tokens = preprocess(doc.tokens);
        if (require_tokens && tokens.empty()) {
            out.dropped.emplace_back(doc.id, "no tokens survive preprocessing");
            continue;
        }
        out.vectors.push_back(vectorize(tokens, vocab));
        out.labels.push_back(*label);
        out.ids.push_back(doc.id);
    }
    return out;
}

inline nlohmann::json dropped_docs_json(const std::vector<std::pair<std::string, std::string>>& dropped) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [id, reason] : dropped) {
        out.push_back({{"id", id}, {"reason", reason}});
    }
    return out;
}

inline const std::string& split_path(const RunConfig& config, const std::string& name) {
    if (name == "train") return config.split_train;
    if (name == "dev") return config.split_dev;
    return config.split_test;
}

inline void write_eval_csv(std::ostream& out, const EvalReport& report,
                           const std::vector<std::string>& class_names) {
    out << "class,precision,recall,f1,support,degenerate\n";
    for (std::size_t k = 0; k < class_names.size(); ++k) {
        const ClassMetrics& m = report.per_class[k];
        out << class_names[k] << ',' << format_double(m.precision) << ','
            << format_double(m.recall) << ',' << format_double(m.f1) << ',' << m.support << ','
            << (m.degenerate ? "yes" : "no") << '\n';
    }
    out << "accuracy,,," << format_double(report.accuracy) << ",,\n";
    out << "micro_avg,,," << format_double(report.micro_f1) << ",,\n";
    out << "macro_avg,,," << format_double(report.macro_f1) << ",,\n";
    out << "weighted_avg,,," << format_double(report.weighted_f1) << ",,\n";
}

inline void write_confusion_csv(std::ostream& out, const EvalReport& report,
                                const std::vector<std::string>& class_names) {
    out << "gold\\predicted";
    for (const auto& name : class_names) out << ',' << name;
    out << '\n';
    for (std::size_t g = 0; g < class_names.size(); ++g) {
        out << class_names[g];
        for (std::size_t p = 0; p < class_names.size(); ++p) {
            out << ',' << report.confusion[g][p];
        }
        out << '\n';
    }
}

} // namespace detail

inline int cmd_classify_train(const RunConfig& config) {
    validate_run_config(config, Command::classify_train);
    detail::ensure_output_dir(config);

    const auto corpus = load_corpus_jsonl(config.corpus);
    std::set<std::string> taken;
    const auto train_docs =
        select_split(corpus, load_split_manifest(config.split_train), &taken);
    // dev/test manifests, when configured, are loaded here purely to enforce
    // the no-leakage invariant before any training happens
    if (!config.split_dev.empty()) {
        select_split(corpus, load_split_manifest(config.split_dev), &taken);
    }
    if (!config.split_test.empty()) {
        select_split(corpus, load_split_manifest(config.split_test), &taken);
    }

    std::vector<std::vector<std::string>> token_lists;
    std::vector<int> labels;
    std::vector<std::pair<std::string, std::string>> dropped;
    for (const auto& doc : train_docs) {
        const auto label = task_label(doc, config.task);
        if (!label) {
            dropped.emplace_back(doc.id, "no gold label for task");
            continue;
        }
        auto tokens = preprocess(doc.tokens);
        if (tokens.empty()) {
            dropped.emplace_back(doc.id, "no tokens survive preprocessing");
            continue;
        }
        token_lists.push_back(std::move(tokens));
        labels.push_back(*label);
    }
    if (!dropped.empty()) {
        log::warn(std::to_string(dropped.size()) + " training document(s) dropped");
    }

    const Vocabulary vocab = build_vocabulary(token_lists);
    std::vector<SparseVector> vectors;
    vectors.reserve(token_lists.size());
    for (const auto& tokens : token_lists) vectors.push_back(vectorize(tokens, vocab));

    const auto class_names = task_class_names(config.task);
    const MaxEntModel model = train_maxent(vectors, labels, class_names, vocab);

    long correct = 0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (predict(model, vectors[i]).label == labels[i]) ++correct;
    }
    const double train_accuracy =
        vectors.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(vectors.size());

    const std::string task_name = config.task == ClassificationTask::aspect ? "aspect" : "sentiment";
    const std::string model_path = config.model_file.empty()
                                       ? detail::output_path(config, "maxent_" + task_name + ".json")
                                       : config.model_file;
    save_model(model, model_path);

    RunManifest manifest;
    manifest.command = to_string(Command::classify_train);
    manifest.config = config.snapshot;
    manifest.add_input(config.corpus);
    manifest.add_input(config.split_train);
    if (!config.split_dev.empty()) manifest.add_input(config.split_dev);
    if (!config.split_test.empty()) manifest.add_input(config.split_test);
    manifest.add_output(model_path);
    manifest.dropped = detail::dropped_docs_json(dropped);
    manifest.extra["task"] = task_name;
    manifest.extra["train_documents"] = vectors.size();
    manifest.extra["vocabulary_size"] = vocab.size();
    manifest.extra["train_accuracy"] = train_accuracy;
    manifest.extra["final_loss"] = model.epoch_losses.back();
    write_manifest(manifest, detail::output_path(config, "manifest.json"));

    std::cout << "classify train: task=" << task_name << " documents=" << vectors.size()
              << " vocabulary=" << vocab.size() << " epochs=" << model.epoch_losses.size() - 1
              << " train_accuracy=" << detail::format_double(train_accuracy) << '\n';
    return kExitSuccess;
}

inline int cmd_classify_eval(const RunConfig& config) {
    validate_run_config(config, Command::classify_eval);
    detail::ensure_output_dir(config);

    const auto corpus = load_corpus_jsonl(config.corpus);
    const MaxEntModel model = load_model(config.model_file);
    const auto class_names = task_class_names(config.task);
    if (model.class_names != class_names) {
        throw ConfigError("model file " + config.model_file +
                          " was trained for a different task than '" +
                          (config.task == ClassificationTask::aspect ? "aspect" : "sentiment") +
                          "'");
    }

    const std::string& split = detail::split_path(config, config.eval_split);
    const auto docs = select_split(corpus, load_split_manifest(split));
    detail::PreparedSplit prepared =
        detail::prepare_split(docs, model.vocabulary, config.task, /*require_tokens=*/false);
    if (prepared.vectors.empty()) {
        throw DataError("no evaluable documents in split '" + config.eval_split + "'");
    }

    std::vector<int> predictions;
    predictions.reserve(prepared.vectors.size());
    long oov_total = 0;
    for (const auto& vec : prepared.vectors) {
        predictions.push_back(predict(model, vec).label);
        oov_total += vec.oov_count;
    }
    const EvalReport report =
        evaluate(predictions, prepared.labels, static_cast<int>(class_names.size()));

    const std::string task_name = config.task == ClassificationTask::aspect ? "aspect" : "sentiment";
    RunManifest manifest;
    manifest.command = to_string(Command::classify_eval);
    manifest.config = config.snapshot;
    manifest.add_input(config.corpus);
    manifest.add_input(config.model_file);
    manifest.add_input(split);

    detail::write_output_file(
        manifest, detail::output_path(config, "eval_" + task_name + ".csv"),
        [&](std::ostream& out) { detail::write_eval_csv(out, report, class_names); });
    detail::write_output_file(
        manifest, detail::output_path(config, "confusion_" + task_name + ".csv"),
        [&](std::ostream& out) { detail::write_confusion_csv(out, report, class_names); });

    manifest.dropped = detail::dropped_docs_json(prepared.dropped);
    manifest.extra["task"] = task_name;
    manifest.extra["split"] = config.eval_split;
    manifest.extra["documents"] = prepared.vectors.size();
    manifest.extra["oov_tokens"] = oov_total;
    manifest.extra["accuracy"] = report.accuracy;
    manifest.extra["macro_f1"] = report.macro_f1;
    write_manifest(manifest, detail::output_path(config, "manifest.json"));

    std::cout << "classify eval: task=" << task_name << " split=" << config.eval_split
              << " documents=" << prepared.vectors.size()
              << " accuracy=" << detail::format_double(report.accuracy)
              << " macro_f1=" << detail::format_double(report.macro_f1) << '\n';
    return prepared.dropped.empty() ? kExitSuccess : kExitPartialFailure;
}

namespace detail {

/// Annotator file: CSV with header `id,label`, one row per item.
inline std::map<std::string, std::string> load_annotator_csv(const std::string& path) {
    auto in = open_input_file(path);
    CsvReader reader(in, path);
    reader.expect_header({"id", "label"});
    std::map<std::string, std::string> out;
    std::vector<std::string> fields;
    while (reader.next_row(fields)) {
        reader.require_fields(fields, 2);
        if (!out.emplace(fields[0], fields[1]).second) {
            throw DataError(reader.where() + ": duplicate id '" + fields[0] + "'");
        }
    }
    if (out.empty()) throw DataError(path + ": no labeled items");
    return out;
}

} // namespace detail

inline int cmd_classify_kappa(const RunConfig& config) {
    validate_run_config(config, Command::classify_kappa);
    detail::ensure_output_dir(config);

    const auto a = detail::load_annotator_csv(config.annotator_a);
    const auto b = detail::load_annotator_csv(config.annotator_b);
    std::vector<std::string> labels_a, labels_b;
    for (const auto& [id, label] : a) {
        auto it = b.find(id);
        if (it == b.end()) {
            throw DataError("item '" + id + "' labeled by annotator_a but not annotator_b");
        }
        labels_a.push_back(label);
        labels_b.push_back(it->second);
    }
    for (const auto& [id, label] : b) {
        if (a.find(id) == a.end()) {
            throw DataError("item '" + id + "' labeled by annotator_b but not annotator_a");
        }
    }

    const KappaResult result = cohens_kappa(labels_a, labels_b);

    RunManifest manifest;
    manifest.command = to_string(Command::classify_kappa);
    manifest.config = config.snapshot;
    manifest.add_input(config.annotator_a);
    manifest.add_input(config.annotator_b);
    detail::write_output_file(manifest, detail::output_path(config, "kappa.json"),
                              [&](std::ostream& out) {
                                  nlohmann::json obj;
                                  obj["n_items"] = labels_a.size();
                                  obj["observed_agreement"] = result.observed_agreement;
                                  obj["expected_agreement"] = result.expected_agreement;
                                  obj["degenerate"] = result.degenerate;
                                  if (!result.degenerate) obj["kappa"] = result.kappa;
                                  out << obj.dump(2) << '\n';
                              });
    write_manifest(manifest, detail::output_path(config, "manifest.json"));

    std::cout << "classify kappa: n=" << labels_a.size() << " observed="
              << detail::format_double(result.observed_agreement) << " kappa=";
    if (result.degenerate) {
        std::cout << "degenerate (expected agreement = 1)";
    } else {
        std::cout << detail::format_double(result.kappa);
    }
    std::cout << '\n';
    return kExitSuccess;
}

// ---------------------------------------------------------------------------
// returns
// ---------------------------------------------------------------------------

inline int cmd_returns(const RunConfig& config) {
    validate_run_config(config, Command::returns);
    detail::ensure_output_dir(config);

    auto prices = load_prices_csv(config.prices);
    const bool have_calendar = !config.calendar.empty();
    TradingCalendar calendar;
    if (have_calendar) calendar = load_calendar_file(config.calendar);

    std::map<std::string, ReturnSeries> all_returns;
    std::map<std::string, long> gap_counts;
    std::vector<std::pair<std::string, std::string>> skipped;
    for (const auto& [instrument, series] : prices) {
        if (series.observations.size() < 2) {
            skipped.emplace_back(instrument, "fewer than 2 price observations");
            continue;
        }
        ReturnSeries returns = compute_returns(series, config.return_method);
        if (have_calendar) {
            returns = returns.restrict_to(calendar);
            if (returns.observations.empty()) {
                skipped.emplace_back(instrument, "no return dates on the trading calendar");
                continue;
            }
            gap_counts[instrument] = count_gap_days(returns, calendar);
        }
        all_returns.emplace(instrument, std::move(returns));
    }

    RunManifest manifest;
    manifest.command = to_string(Command::returns);
    manifest.config = config.snapshot;
    manifest.add_input(config.prices);
    if (have_calendar) manifest.add_input(config.calendar);

    detail::write_output_file(
        manifest, detail::output_path(config, "returns.csv"), [&](std::ostream& out) {
            out << "instrument,date,return\n";
            for (const auto& [instrument, series] : all_returns) {
                for (const auto& [date, value] : series.observations) {
                    out << instrument << ',' << to_string(date) << ','
                        << detail::format_double(value) << '\n';
                }
            }
        });

    for (const auto& [instrument, reason] : skipped) {
        manifest.dropped.push_back({{"instrument", instrument}, {"reason", reason}});
    }
    manifest.extra["instruments"] = all_returns.size();
    if (have_calendar) manifest.extra["gap_counts"] = gap_counts;
    write_manifest(manifest, detail::output_path(config, "manifest.json"));

    std::cout << "returns: " << all_returns.size() << " instrument(s), " << skipped.size()
              << " skipped\n";
    return skipped.empty() ? kExitSuccess : kExitPartialFailure;
}

} // namespace finsent
