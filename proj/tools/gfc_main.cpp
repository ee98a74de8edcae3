// gfc: panel-data causal effect estimation and forecasting on declared grids.
//
// Commands
//   simulate   forward-sample a panel from a structural model config
//   estimate   treatment effect on the treated over the observed window
//   forecast   treatment effect on a future window under temporal transport
//   expose     exposure effects under hypothetical exposure laws
//   validate   run the bundled acceptance matrix
//   report     summarize and verify a finished run directory
//   rerun      replay a run from its manifest (byte-identical outputs)
//
// Exit codes: 0 ok, 2 config error, 3 estimation failure, 4 overlap refusal,
// 5 validation failure.

#include <iostream>

#include <CLI11.hpp>

#include "gfc/acceptance.hpp"
#include "gfc/run.hpp"
#include "gfc/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"panel-data causal effect estimation and forecasting"};
    app.set_version_flag("--version", gfc::kVersion);
    app.require_subcommand(1);

    gfc::RunArgs args;
    std::string seed_str;
    std::string dgp_str, panel_str, schema_str, analysis_str, scenario_str, policy_str, out_str,
        manifest_str, configs_str = "configs";
    int threads = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--out", out_str, "output directory")->required();
        cmd->add_option("--seed", seed_str, "RNG seed (required for stochastic commands)");
        cmd->add_option("--threads", threads, "worker threads (env GFC_THREADS as fallback)");
        cmd->add_option("--configs", configs_str, "bundled config directory");
    };

    auto* sim = app.add_subcommand("simulate", "forward-sample a panel from a structural model");
    sim->add_option("--dgp", dgp_str, "model config file or bundled name")->required();
    sim->add_option("--units", args.units, "number of units")->required();
    sim->add_option("--horizon", args.horizon, "time horizon T")->required();
    add_common(sim);

    auto* est = app.add_subcommand("estimate", "observed-window treatment effect");
    est->add_option("--panel", panel_str, "panel CSV")->required();
    est->add_option("--schema", schema_str, "schema JSON")->required();
    est->add_option("--config", analysis_str, "analysis config JSON")->required();
    est->add_option("--dgp", dgp_str, "optional model config for oracle columns");
    est->add_option("--mode", args.mode, "adjustment|gformula")
        ->check(CLI::IsMember({"adjustment", "gformula", ""}));
    est->add_option("--control-convention", args.convention, "canonical|weighted")
        ->check(CLI::IsMember({"canonical", "weighted", ""}));
    add_common(est);

    auto* for_ = app.add_subcommand("forecast", "future-window treatment effect");
    for_->add_option("--panel", panel_str)->required();
    for_->add_option("--schema", schema_str)->required();
    for_->add_option("--config", analysis_str)->required();
    for_->add_option("--scenario", scenario_str, "future-window scenario JSON")->required();
    for_->add_option("--dgp", dgp_str, "optional model config for oracle columns");
    add_common(for_);

    auto* exp_ = app.add_subcommand("expose", "exposure effects under hypothetical laws");
    exp_->add_option("--panel", panel_str)->required();
    exp_->add_option("--schema", schema_str)->required();
    exp_->add_option("--config", analysis_str)->required();
    exp_->add_option("--policy", policy_str, "exposure policy JSON")->required();
    exp_->add_option("--scenario", scenario_str, "optional: future window instead of observed");
    exp_->add_option("--dgp", dgp_str, "optional model config for oracle columns");
    add_common(exp_);

    auto* val = app.add_subcommand("validate", "run the bundled acceptance matrix");
    val->add_option("--configs", configs_str, "bundled config directory");
    val->add_option("--out", out_str, "output directory for the JUnit XML and work files");
    val->add_option("--filter", args.mode, "only criteria whose name contains this substring");
    val->add_option("--threads", threads, "worker threads");

    auto* rep = app.add_subcommand("report", "summarize and verify a run directory");
    rep->add_option("--run", out_str, "run directory")->required();

    auto* rer = app.add_subcommand("rerun", "replay a run from its manifest");
    rer->add_option("--manifest", manifest_str, "manifest.json of the original run")->required();
    rer->add_option("--out", out_str, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    args.panel = panel_str;
    args.schema = schema_str;
    args.analysis = analysis_str;
    args.scenario = scenario_str;
    args.policy = policy_str;
    args.dgp = dgp_str;
    args.out = out_str;
    args.manifest = manifest_str;
    args.configs_dir = configs_str;
    args.threads = threads;
    if (!seed_str.empty()) {
        try {
            args.seed = std::stoull(seed_str);
            args.seed_given = true;
        } catch (const std::exception&) {
            std::cerr << "config error: --seed must be an unsigned integer\n";
            return static_cast<int>(gfc::ExitCode::ConfigError);
        }
    }

    if (sim->parsed()) args.command = "simulate";
    if (est->parsed()) args.command = "estimate";
    if (for_->parsed()) args.command = "forecast";
    if (exp_->parsed()) args.command = "expose";
    if (rep->parsed()) {
        args.command = "report";
        args.manifest = gfc::fs::path(out_str) / "manifest.json";
        args.out = out_str;
        return gfc::execute(args, std::cout);
    }
    if (rer->parsed()) args.command = "rerun";
    if (val->parsed()) {
        gfc::AcceptanceOptions opt;
        opt.configs_dir = configs_str;
        opt.work_dir = out_str.empty() ? "validate-out" : out_str;
        opt.filter = args.mode;
        opt.threads = threads;
        return gfc::run_acceptance(opt, std::cout);
    }

    return gfc::execute(args, std::cerr);
}
