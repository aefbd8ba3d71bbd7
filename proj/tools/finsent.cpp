#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "finsent/commands.hpp"
#include "finsent/config.hpp"
#include "finsent/version.hpp"

namespace {

struct CliState {
    std::string config_path;
    std::uint64_t seed = 0;
    std::vector<int> windows;
    std::string model;
    double lambda = 0.0;
    std::string out;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* windows_opt = nullptr;
    CLI::Option* model_opt = nullptr;
    CLI::Option* lambda_opt = nullptr;
    CLI::Option* out_opt = nullptr;

    finsent::ConfigOverrides overrides() const {
        finsent::ConfigOverrides o;
        if (seed_opt->count() > 0) o.seed = seed;
        if (windows_opt->count() > 0) o.windows = windows;
        if (model_opt->count() > 0) o.model = model;
        if (lambda_opt->count() > 0) o.lambda = lambda;
        if (out_opt->count() > 0) o.out = out;
        return o;
    }
};

void add_common_options(CLI::App* sub, CliState& state) {
    sub->add_option("--config", state.config_path, "Path to the JSON run config")
        ->required();
    state.seed_opt = sub->add_option("--seed", state.seed, "Override the config seed");
    state.windows_opt = sub->add_option("--windows", state.windows,
                                        "Override event window half-widths (e.g. 1,3,5)")
                            ->delimiter(',');
    state.model_opt = sub->add_option(
        "--model", state.model, "Override the normal-return model (constant_mean|market|fama_french)");
    state.lambda_opt = sub->add_option("--lambda", state.lambda, "Override the ridge penalty");
    state.out_opt = sub->add_option("--out", state.out, "Override the output directory");
}

int dispatch(finsent::Command command, const CliState& state) {
    const finsent::RunConfig config =
        finsent::load_run_config(state.config_path, state.overrides());
    switch (command) {
        case finsent::Command::event_study: return finsent::cmd_event_study(config);
        case finsent::Command::regress: return finsent::cmd_regress(config);
        case finsent::Command::classify_train: return finsent::cmd_classify_train(config);
        case finsent::Command::classify_eval: return finsent::cmd_classify_eval(config);
        case finsent::Command::classify_kappa: return finsent::cmd_classify_kappa(config);
        case finsent::Command::returns: return finsent::cmd_returns(config);
    }
    return finsent::kExitConfigError;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(finsent::kToolName) +
                 ": event studies, sentiment regressions, and MaxEnt baselines"};
    app.set_version_flag("--version", std::string(finsent::kVersion));
    app.require_subcommand(1);

    CliState ev_state, rg_state, tr_state, ex_state, ka_state, rt_state;

    CLI::App* ev = app.add_subcommand("event-study",
                                      "Compute abnormal returns, CAR, and CAAR around events");
    add_common_options(ev, ev_state);

    CLI::App* rg = app.add_subcommand(
        "regress", "Regress per-event CARs on sentiment features (Models 1-5, OLS and ridge)");
    add_common_options(rg, rg_state);

    CLI::App* cl = app.add_subcommand("classify", "MaxEnt baselines and annotator agreement");
    cl->require_subcommand(1);
    CLI::App* tr = cl->add_subcommand("train", "Train a MaxEnt classifier on the train split");
    add_common_options(tr, tr_state);
    CLI::App* ex = cl->add_subcommand("eval", "Evaluate a trained model on a split");
    add_common_options(ex, ex_state);
    CLI::App* ka = cl->add_subcommand("kappa", "Cohen's kappa between two annotator files");
    add_common_options(ka, ka_state);

    CLI::App* rt = app.add_subcommand("returns", "Compute daily returns from a prices file");
    add_common_options(rt, rt_state);

    CLI11_PARSE(app, argc, argv);

    finsent::Command command = finsent::Command::returns;
    const CliState* state = &rt_state;
    if (ev->parsed()) {
        command = finsent::Command::event_study;
        state = &ev_state;
    } else if (rg->parsed()) {
        command = finsent::Command::regress;
        state = &rg_state;
    } else if (cl->parsed()) {
        if (tr->parsed()) {
            command = finsent::Command::classify_train;
            state = &tr_state;
        } else if (ex->parsed()) {
            command = finsent::Command::classify_eval;
            state = &ex_state;
        } else {
            command = finsent::Command::classify_kappa;
            state = &ka_state;
        }
    }

    try {
        return dispatch(command, *state);
    } catch (const finsent::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return finsent::kExitConfigError;
    } catch (const finsent::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return finsent::kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return finsent::kExitPartialFailure;
    }
}
