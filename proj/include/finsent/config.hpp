#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "finsent/classifier.hpp"
#include "finsent/errors.hpp"
#include "finsent/expected_return.hpp"
#include "finsent/log.hpp"
#include "finsent/market_data.hpp"

namespace finsent {

enum class Command {
    event_study,
    regress,
    classify_train,
    classify_eval,
    classify_kappa,
    returns,
};

inline const char* to_string(Command cmd) {
    switch (cmd) {
        case Command::event_study: return "event-study";
        case Command::regress: return "regress";
        case Command::classify_train: return "classify train";
        case Command::classify_eval: return "classify eval";
        case Command::classify_kappa: return "classify kappa";
        case Command::returns: return "returns";
    }
    return "";
}

/// One static config file drives a run; command-line flags override
/// individual fields. See README for the documented schema.
struct RunConfig {
    // input paths
    std::string prices;
    std::string factors;
    std::string events;
    std::string annotations;
    std::string fundamentals;
    std::string corpus;
    std::string calendar;
    std::string split_train;
    std::string split_dev;
    std::string split_test;
    std::string annotator_a;
    std::string annotator_b;
    std::string model_file;

    // analysis parameters
    std::string market_index; // instrument id of the market proxy in the prices file
    ExpectedReturnKind model = ExpectedReturnKind::fama_french;
    std::vector<int> windows = {1, 3, 5};
    long estimation_length = kDefaultEstimationLength;
    long min_observations = kDefaultMinObservations;
    ReturnMethod return_method = ReturnMethod::log;
    std::uint64_t seed = 0;
    long resamples = 10000;
    double ridge_lambda = 1.0;
    int threads = 0;
    ClassificationTask task = ClassificationTask::aspect;
    std::string eval_split = "test";

    std::string output_dir = "out";

    nlohmann::json snapshot; // resolved values, recorded in the manifest
};

/// Flag values that win over the config file.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::vector<int>> windows;
    std::optional<std::string> model;
    std::optional<double> lambda;
    std::optional<std::string> out;
};

namespace detail {

inline std::string json_type_error(const std::string& key, const char* expected) {
    return "config key '" + key + "' must be " + expected;
}

inline void read_string(const nlohmann::json& obj, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_string()) throw ConfigError(json_type_error(key, "a string"));
    out = obj[key].get<std::string>();
}

} // namespace detail

inline nlohmann::json config_snapshot(const RunConfig& config);

/// Parse the JSON config file and apply flag overrides. Unknown keys are
/// rejected so typos fail loudly instead of silently using defaults.
inline RunConfig load_run_config(const std::string& path, const ConfigOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json obj;
    try {
        in >> obj;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    if (!obj.is_object()) throw ConfigError(path + ": config must be a JSON object");

    static const std::set<std::string> known = {
        "prices", "factors", "events", "annotations", "fundamentals", "corpus",
        "calendar", "split_train", "split_dev", "split_test", "annotator_a",
        "annotator_b", "model_file", "market_index", "model", "windows",
        "estimation_length", "min_observations", "return_method", "seed",
        "resamples", "lambda", "threads", "task", "eval_split", "output_dir",
    };
    for (const auto& [key, value] : obj.items()) {
        if (known.find(key) == known.end()) {
            throw ConfigError(path + ": unknown config key '" + key + "'");
        }
    }

    RunConfig config;
    detail::read_string(obj, "prices", config.prices);
    detail::read_string(obj, "factors", config.factors);
    detail::read_string(obj, "events", config.events);
    detail::read_string(obj, "annotations", config.annotations);
    detail::read_string(obj, "fundamentals", config.fundamentals);
    detail::read_string(obj, "corpus", config.corpus);
    detail::read_string(obj, "calendar", config.calendar);
    detail::read_string(obj, "split_train", config.split_train);
    detail::read_string(obj, "split_dev", config.split_dev);
    detail::read_string(obj, "split_test", config.split_test);
    detail::read_string(obj, "annotator_a", config.annotator_a);
    detail::read_string(obj, "annotator_b", config.annotator_b);
    detail::read_string(obj, "model_file", config.model_file);
    detail::read_string(obj, "market_index", config.market_index);
    detail::read_string(obj, "output_dir", config.output_dir);
    detail::read_string(obj, "eval_split", config.eval_split);

    try {
        if (obj.contains("model")) config.model = parse_expected_return_kind(obj["model"].get<std::string>());
        if (obj.contains("return_method")) {
            config.return_method = parse_return_method(obj["return_method"].get<std::string>());
        }
        if (obj.contains("task")) config.task = parse_task(obj["task"].get<std::string>());
        if (obj.contains("windows")) config.windows = obj["windows"].get<std::vector<int>>();
        if (obj.contains("estimation_length")) config.estimation_length = obj["estimation_length"].get<long>();
        if (obj.contains("min_observations")) config.min_observations = obj["min_observations"].get<long>();
        if (obj.contains("seed")) config.seed = obj["seed"].get<std::uint64_t>();
        if (obj.contains("resamples")) config.resamples = obj["resamples"].get<long>();
        if (obj.contains("lambda")) config.ridge_lambda = obj["lambda"].get<double>();
        if (obj.contains("threads")) config.threads = obj["threads"].get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    } catch (const DataError& e) {
        throw ConfigError(path + ": " + e.what());
    }

    if (overrides.seed) config.seed = *overrides.seed;
    if (overrides.windows) config.windows = *overrides.windows;
    if (overrides.model) {
        try {
            config.model = parse_expected_return_kind(*overrides.model);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
    }
    if (overrides.lambda) config.ridge_lambda = *overrides.lambda;
    if (overrides.out) config.output_dir = *overrides.out;

    config.snapshot = config_snapshot(config);
    return config;
}

namespace detail {

inline void require_path(const std::string& value, const char* key) {
    if (value.empty()) {
        throw ConfigError(std::string("config key '") + key + "' is required for this command");
    }
    if (!std::filesystem::exists(value)) {
        throw ConfigError(std::string("config key '") + key + "': path does not exist: " + value);
    }
}

} // namespace detail

/// Check the fields the command will actually use: referenced paths must
/// exist, parameters must be in range, and model-dependent inputs (factors
/// for Fama-French, a market index for the market model) must be present.
inline void validate_run_config(const RunConfig& config, Command cmd) {
    if (config.output_dir.empty()) throw ConfigError("output_dir must not be empty");

    const bool needs_market_data = cmd == Command::event_study || cmd == Command::regress ||
                                   cmd == Command::returns;
    if (needs_market_data) {
        detail::require_path(config.prices, "prices");
        if (config.return_method != ReturnMethod::simple &&
            config.return_method != ReturnMethod::log) {
            throw ConfigError("invalid return_method");
        }
    }
    if (cmd == Command::event_study || cmd == Command::regress) {
        detail::require_path(config.events, "events");
        if (config.model == ExpectedReturnKind::fama_french) {
            detail::require_path(config.factors, "factors");
        }
        if (config.model == ExpectedReturnKind::market && config.market_index.empty()) {
            throw ConfigError("market model requires config key 'market_index'");
        }
        if (!config.calendar.empty()) detail::require_path(config.calendar, "calendar");
        if (config.calendar.empty() && config.market_index.empty()) {
            throw ConfigError(
                "no trading calendar: provide 'calendar' or 'market_index' (calendar is derived "
                "from the market index when no calendar file is given)");
        }
        if (config.windows.empty()) throw ConfigError("windows must be non-empty");
        for (int w : config.windows) {
            if (w < 1) throw ConfigError("window widths must be >= 1, got " + std::to_string(w));
            if (w != 1 && w != 3 && w != 5) {
                log::warn("window " + std::to_string(w) + " is outside the standard {1,3,5} set");
            }
        }
        if (config.estimation_length < kEstimationLengthFloor) {
            throw ConfigError("estimation_length must be >= " +
                              std::to_string(kEstimationLengthFloor));
        }
        if (config.min_observations < 1) throw ConfigError("min_observations must be >= 1");
    }
    if (cmd == Command::regress) {
        detail::require_path(config.annotations, "annotations");
        detail::require_path(config.fundamentals, "fundamentals");
        if (config.ridge_lambda < 0.0) throw ConfigError("lambda must be non-negative");
        if (config.resamples < 1) throw ConfigError("resamples must be >= 1");
    }
    if (cmd == Command::classify_train || cmd == Command::classify_eval) {
        detail::require_path(config.corpus, "corpus");
    }
    if (cmd == Command::classify_train) {
        detail::require_path(config.split_train, "split_train");
        if (!config.split_dev.empty()) detail::require_path(config.split_dev, "split_dev");
        if (!config.split_test.empty()) detail::require_path(config.split_test, "split_test");
    }
    if (cmd == Command::classify_eval) {
        detail::require_path(config.model_file, "model_file");
        if (config.eval_split != "train" && config.eval_split != "dev" &&
            config.eval_split != "test") {
            throw ConfigError("eval_split must be one of train, dev, test");
        }
        const std::string& split = config.eval_split == "train" ? config.split_train
                                   : config.eval_split == "dev" ? config.split_dev
                                                                : config.split_test;
        if (split.empty()) {
            throw ConfigError("config key 'split_" + config.eval_split +
                              "' is required to evaluate on the " + config.eval_split + " split");
        }
        detail::require_path(split, ("split_" + config.eval_split).c_str());
    }
    if (cmd == Command::classify_kappa) {
        detail::require_path(config.annotator_a, "annotator_a");
        detail::require_path(config.annotator_b, "annotator_b");
    }
}

inline nlohmann::json config_snapshot(const RunConfig& config) {
    nlohmann::json snap;
    auto put_path = [&snap](const char* key, const std::string& value) {
        if (!value.empty()) snap[key] = value;
    };
    put_path("prices", config.prices);
    put_path("factors", config.factors);
    put_path("events", config.events);
    put_path("annotations", config.annotations);
    put_path("fundamentals", config.fundamentals);
    put_path("corpus", config.corpus);
    put_path("calendar", config.calendar);
    put_path("split_train", config.split_train);
    put_path("split_dev", config.split_dev);
    put_path("split_test", config.split_test);
    put_path("annotator_a", config.annotator_a);
    put_path("annotator_b", config.annotator_b);
    put_path("model_file", config.model_file);
    put_path("market_index", config.market_index);
    snap["model"] = to_string(config.model);
    snap["windows"] = config.windows;
    snap["estimation_length"] = config.estimation_length;
    snap["min_observations"] = config.min_observations;
    snap["return_method"] = config.return_method == ReturnMethod::simple ? "simple" : "log";
    snap["seed"] = config.seed;
    snap["resamples"] = config.resamples;
    snap["lambda"] = config.ridge_lambda;
    snap["threads"] = config.threads;
    snap["task"] = config.task == ClassificationTask::aspect ? "aspect" : "sentiment";
    snap["eval_split"] = config.eval_split;
    snap["output_dir"] = config.output_dir;
    return snap;
}

} // namespace finsent
