#pragma once

#include <iostream>
#include <optional>
#include <string>

#include "gfc/estimand_oracle.hpp"
#include "gfc/exposure.hpp"
#include "gfc/forecast.hpp"
#include "gfc/manifest.hpp"
#include "gfc/report.hpp"
#include "gfc/simulate.hpp"

namespace gfc {

// Config-driven command layer. The CLI is a thin wrapper over these
// functions; the validation suite calls them in-process with the same
// semantics (including output files and manifests).

struct RunArgs {
    std::string command; // simulate | estimate | forecast | expose | report | rerun
    fs::path panel, schema, dgp, analysis, scenario, policy, out, manifest;
    fs::path configs_dir = "configs";
    int units = 0, horizon = 0;
    uint64_t seed = 0;
    bool seed_given = false;
    int threads = 0; // 0 = resolve via GFC_THREADS, else 1
    std::string mode;       // optional --mode override
    std::string convention; // optional --control-convention override
};

// Named DGPs resolve against the bundled config directory.
inline fs::path resolve_dgp_path(const std::string& arg, const fs::path& configs_dir) {
    if (fs::exists(arg)) return arg;
    const fs::path named = configs_dir / "dgp" / (arg + ".json");
    if (fs::exists(named)) return named;
    throw ConfigError("dgp '" + arg + "' is neither a file nor a bundled config under " +
                      (configs_dir / "dgp").string());
}

// ---- analysis config ---------------------------------------------------------

struct AnalysisConfig {
    WindowSpec window;
    TreatmentMapper mapper;
    std::string driver = "treatment";
    AttOptions att;
    ErfOptions erf;
    ExposedSelection selection;
    TransitionKernels kernels;
    bool kernels_declared = false;
};

inline std::vector<VarRef> parse_parent_list(const json& arr, const Schema& sc) {
    std::vector<VarRef> out;
    for (const auto& pr : arr) {
        if (!pr.is_array() || pr.size() != 2)
            throw ConfigError("kernels: parent must be [name, lag]");
        out.push_back({var_code_from_schema(sc, pr[0].get<std::string>()), pr[1].get<int>()});
    }
    return out;
}

inline AnalysisConfig analysis_from_json(const json& j, const Schema& schema) {
    AnalysisConfig a;
    if (!j.contains("window")) throw ConfigError("analysis: missing 'window'");
    a.window = window_from_json(j["window"]);
    a.mapper = j.contains("mapper") ? mapper_from_json(j["mapper"]) : TreatmentMapper{};
    a.mapper.validate(a.window);
    a.driver = j.value("driver", std::string("treatment"));
    if (a.driver != "treatment" && a.driver != "exposure")
        throw ConfigError("analysis: driver must be 'treatment' or 'exposure'");

    const std::string method = j.value("method", std::string("gformula"));
    if (method == "adjustment") a.att.method = Method::Adjustment;
    else if (method == "gformula") a.att.method = Method::GFormula;
    else throw ConfigError("analysis: method must be 'adjustment' or 'gformula'");

    const std::string cond = j.value("conditioning", std::string("auto"));
    if (cond == "auto") a.att.conditioning = Conditioning::Auto;
    else if (cond == "r") a.att.conditioning = Conditioning::R;
    else if (cond == "rv") a.att.conditioning = Conditioning::RV;
    else throw ConfigError("analysis: conditioning must be auto|r|rv");

    const std::string conv = j.value("control_convention", std::string("canonical"));
    if (conv == "canonical") a.att.convention = ControlConvention::Canonical;
    else if (conv == "weighted") a.att.convention = ControlConvention::Weighted;
    else throw ConfigError("analysis: control_convention must be canonical|weighted");

    a.att.min_cell = j.value("min_cell", 5);
    a.att.path_cap = j.value("path_cap", 1e7);
    a.att.mc_paths = j.value("mc_paths", 10000L);
    a.att.v_includes_window_end = j.value("v_includes_window_end", true);
    a.att.anchor_time = j.value("anchor_time", -1);
    if (j.contains("structure") && !j["structure"].is_null())
        a.att.structure = structure_from_json(j["structure"], schema);

    a.erf.min_cell = a.att.min_cell;
    a.erf.path_cap = a.att.path_cap;
    a.erf.mc_paths = a.att.mc_paths;
    a.erf.v_includes_window_end = a.att.v_includes_window_end;
    const std::string erf_mode = j.value("erf_mode", std::string("gformula"));
    a.erf.mode = erf_mode == "matching" ? ErfMode::Matching : ErfMode::GFormula;

    if (j.contains("selection")) {
        const auto& s = j["selection"];
        const std::string rule = s.value("rule", std::string("all"));
        if (rule == "all") a.selection.rule = ExposedSelection::Rule::All;
        else if (rule == "any-at-or-above") a.selection.rule = ExposedSelection::Rule::AnyAtOrAbove;
        else if (rule == "all-below") a.selection.rule = ExposedSelection::Rule::AllBelow;
        else throw ConfigError("analysis: selection.rule must be all|any-at-or-above|all-below");
        if (s.contains("s_star")) {
            const auto c = schema.s.code_of(s["s_star"].get<double>());
            if (!c) throw ConfigError("analysis: selection.s_star off the exposure grid");
            a.selection.threshold_code = *c;
        }
    }

    if (j.contains("kernels") && !j["kernels"].is_null()) {
        a.kernels_declared = true;
        const auto& kj = j["kernels"];
        for (int p = 0; p < schema.n_covariates(); ++p) {
            Kernel kx;
            const std::string k1 = schema.x[static_cast<size_t>(p)].name;
            const std::string k2 = "x" + std::to_string(p + 1);
            if (kj.contains(k1)) kx.spec.parents = parse_parent_list(kj[k1], schema);
            else if (kj.contains(k2)) kx.spec.parents = parse_parent_list(kj[k2], schema);
            else throw ConfigError("analysis.kernels: missing covariate '" + k1 + "'");
            a.kernels.x.push_back(std::move(kx));
        }
        if (!kj.contains("y")) throw ConfigError("analysis.kernels: missing 'y'");
        a.kernels.y.spec.parents = parse_parent_list(kj["y"], schema);
        if (kj.contains("s")) a.kernels.s.spec.parents = parse_parent_list(kj["s"], schema);
    }
    return a;
}

// ---- commands -----------------------------------------------------------------

namespace detail {

inline void require_seed(const RunArgs& args) {
    if (!args.seed_given)
        throw ConfigError("--seed is required for stochastic commands");
}

inline void write_with_manifest(const fs::path& out_dir, Manifest& manifest,
                                const std::vector<std::pair<std::string, std::string>>& files) {
    for (const auto& [name, bytes] : files) {
        manifest.add_output(out_dir / name, bytes);
        atomic_write(out_dir / name, bytes);
    }
    atomic_write(out_dir / "manifest.json", manifest.to_json().dump(2) + "\n");
}

inline Panel load_panel(const RunArgs& args, Schema& schema_out) {
    if (args.schema.empty() || args.panel.empty())
        throw ConfigError("--panel and --schema are required");
    schema_out = schema_from_json(parse_json_file(args.schema));
    return ingest_csv_file(args.panel.string(), schema_out);
}

} // namespace detail

inline void run_simulate(const RunArgs& args) {
    detail::require_seed(args);
    if (args.dgp.empty()) throw ConfigError("simulate: --dgp is required");
    if (args.units < 1 || args.horizon < 1)
        throw ConfigError("simulate: --units and --horizon must be positive");
    const fs::path dgp_path = resolve_dgp_path(args.dgp.string(), args.configs_dir);
    const Dgp dgp = dgp_from_file(dgp_path.string());
    const Panel panel = simulate(dgp, args.units, args.horizon, args.seed);

    Manifest m;
    m.command = "simulate";
    m.seed = args.seed;
    m.threads = resolve_threads(args.threads);
    m.args = {{"dgp", dgp_path.string()},
              {"units", args.units},
              {"horizon", args.horizon},
              {"configs_dir", args.configs_dir.string()}};
    m.add_input("dgp", dgp_path);
    detail::write_with_manifest(args.out, m,
                                {{"panel.csv", write_csv_string(panel)},
                                 {"schema.json", schema_to_json(panel.schema()).dump(2) + "\n"}});
}

inline EstimateReport run_estimate(const RunArgs& args) {
    detail::require_seed(args);
    Schema schema;
    const Panel panel = detail::load_panel(args, schema);
    if (args.analysis.empty()) throw ConfigError("estimate: --config analysis file is required");
    AnalysisConfig cfg = analysis_from_json(parse_json_file(args.analysis), schema);
    if (!args.mode.empty())
        cfg.att.method = args.mode == "adjustment" ? Method::Adjustment : Method::GFormula;
    if (!args.convention.empty())
        cfg.att.convention = args.convention == "weighted" ? ControlConvention::Weighted
                                                           : ControlConvention::Canonical;
    cfg.att.seed = args.seed;
    cfg.att.threads = resolve_threads(args.threads);

    const EstimateReport rep = estimate_att(panel, cfg.window, cfg.mapper, cfg.att);

    std::vector<std::pair<std::string, double>> oracle_rows;
    if (!args.dgp.empty()) {
        const fs::path dgp_path = resolve_dgp_path(args.dgp.string(), args.configs_dir);
        const Dgp dgp = dgp_from_file(dgp_path.string());
        const RealizedAttOracle oracle = oracle_att_realized(dgp, panel, cfg.window, cfg.mapper);
        oracle_rows.emplace_back("ATT", oracle.att.value);
        oracle_rows.emplace_back("attributable", oracle.attributable.value);
    }

    Manifest m;
    m.command = "estimate";
    m.seed = args.seed;
    m.threads = resolve_threads(args.threads);
    m.args = {{"panel", args.panel.string()},
              {"schema", args.schema.string()},
              {"analysis", args.analysis.string()},
              {"dgp", args.dgp.string()},
              {"mode", args.mode},
              {"convention", args.convention},
              {"configs_dir", args.configs_dir.string()}};
    m.add_input("panel", args.panel);
    m.add_input("schema", args.schema);
    m.add_input("analysis", args.analysis);
    if (!args.dgp.empty()) m.add_input("dgp", resolve_dgp_path(args.dgp.string(), args.configs_dir));
    detail::write_with_manifest(args.out, m,
                                {{"report.json", report_to_json(rep).dump(2) + "\n"},
                                 {"per_unit.csv", per_unit_csv(rep)},
                                 {"plot_data.csv", plot_data_csv(rep, oracle_rows)}});
    return rep;
}

inline ForecastReport run_forecast(const RunArgs& args) {
    detail::require_seed(args);
    Schema schema;
    const Panel panel = detail::load_panel(args, schema);
    if (args.analysis.empty() || args.scenario.empty())
        throw ConfigError("forecast: --config and --scenario are required");
    AnalysisConfig cfg = analysis_from_json(parse_json_file(args.analysis), schema);
    const ScenarioSpec sc = scenario_from_json(parse_json_file(args.scenario), schema, cfg.window);

    ForecastOptions opt;
    opt.min_cell = cfg.att.min_cell;
    opt.seed = args.seed;
    opt.threads = resolve_threads(args.threads);
    opt.kernels = cfg.kernels;
    opt.kernels_declared = cfg.kernels_declared;
    ForecastReport rep = forecast_att_f(panel, cfg.window, cfg.mapper, sc, opt);

    std::vector<std::pair<std::string, double>> oracle_rows;
    if (!args.dgp.empty()) {
        const fs::path dgp_path = resolve_dgp_path(args.dgp.string(), args.configs_dir);
        const Dgp dgp = dgp_from_file(dgp_path.string());
        const int anchor = sc.anchor_time > 0 ? sc.anchor_time : panel.horizon();
        const OracleResult oracle =
            oracle_att_future(dgp, cfg.window, cfg.mapper, anchor, sc.future);
        oracle_rows.emplace_back("ATT_F", oracle.value);
    }

    std::ostringstream per_draw;
    per_draw << "draw,n,dropped,estimate\n";
    for (const auto& row : rep.report.extra["per_draw"]) {
        per_draw << row["draw"] << "," << row["n"] << "," << row["dropped"] << ",";
        if (row.contains("estimate")) per_draw << format_double(row["estimate"].get<double>());
        per_draw << "\n";
    }

    Manifest m;
    m.command = "forecast";
    m.seed = args.seed;
    m.threads = resolve_threads(args.threads);
    m.args = {{"panel", args.panel.string()},
              {"schema", args.schema.string()},
              {"analysis", args.analysis.string()},
              {"scenario", args.scenario.string()},
              {"dgp", args.dgp.string()},
              {"configs_dir", args.configs_dir.string()}};
    m.add_input("panel", args.panel);
    m.add_input("schema", args.schema);
    m.add_input("analysis", args.analysis);
    m.add_input("scenario", args.scenario);
    if (!args.dgp.empty()) m.add_input("dgp", resolve_dgp_path(args.dgp.string(), args.configs_dir));
    detail::write_with_manifest(args.out, m,
                                {{"report.json", report_to_json(rep.report).dump(2) + "\n"},
                                 {"per_draw.csv", per_draw.str()},
                                 {"plot_data.csv", plot_data_csv(rep.report, oracle_rows)}});
    return rep;
}

inline EstimateReport run_expose(const RunArgs& args) {
    detail::require_seed(args);
    Schema schema;
    const Panel panel = detail::load_panel(args, schema);
    if (args.analysis.empty() || args.policy.empty())
        throw ConfigError("expose: --config and --policy are required");
    AnalysisConfig cfg = analysis_from_json(parse_json_file(args.analysis), schema);
    cfg.erf.seed = args.seed;

    std::optional<Dgp> dgp;
    if (!args.dgp.empty())
        dgp = dgp_from_file(resolve_dgp_path(args.dgp.string(), args.configs_dir).string());
    const ExposurePolicy policy = policy_from_json(parse_json_file(args.policy), schema, cfg.window,
                                                   dgp ? &*dgp : nullptr);

    EstimateReport rep;
    std::vector<std::pair<std::string, double>> oracle_rows;
    std::string per_rows;
    if (!args.scenario.empty()) {
        const ScenarioSpec sc = scenario_from_json(parse_json_file(args.scenario), schema, cfg.window);
        ExposureForecastOptions opt;
        opt.erf = cfg.erf;
        opt.kernels = cfg.kernels;
        opt.kernels_declared = cfg.kernels_declared;
        opt.structure = cfg.att.structure;
        opt.threads = resolve_threads(args.threads);
        opt.seed = args.seed;
        ForecastReport fr = forecast_aee_f(panel, cfg.window, policy, sc, opt);
        rep = fr.report;
        if (dgp) {
            const int anchor = sc.anchor_time > 0 ? sc.anchor_time : panel.horizon();
            oracle_rows.emplace_back("AEE_F",
                                     oracle_aee_future(*dgp, cfg.window, anchor, sc.future, policy).value);
        }
        std::ostringstream pd;
        pd << "draw,n,dropped,estimate\n";
        for (const auto& row : rep.extra["per_draw"]) {
            pd << row["draw"] << "," << row["n"] << "," << row["dropped"] << ",";
            if (row.contains("estimate")) pd << format_double(row["estimate"].get<double>());
            pd << "\n";
        }
        per_rows = pd.str();
    } else {
        AeeOptions opt;
        opt.erf = cfg.erf;
        opt.selection = cfg.selection;
        opt.structure = cfg.att.structure;
        opt.anchor_time = cfg.att.anchor_time;
        rep = estimate_aee(panel, cfg.window, policy, opt);
        if (dgp) {
            const RealizedAeeOracle oracle =
                oracle_aee_realized(*dgp, panel, cfg.window, cfg.selection, policy);
            oracle_rows.emplace_back("AEE", oracle.aee.value);
        }
        per_rows = per_unit_csv(rep);
    }

    Manifest m;
    m.command = "expose";
    m.seed = args.seed;
    m.threads = resolve_threads(args.threads);
    m.args = {{"panel", args.panel.string()},
              {"schema", args.schema.string()},
              {"analysis", args.analysis.string()},
              {"policy", args.policy.string()},
              {"scenario", args.scenario.string()},
              {"dgp", args.dgp.string()},
              {"configs_dir", args.configs_dir.string()}};
    m.add_input("panel", args.panel);
    m.add_input("schema", args.schema);
    m.add_input("analysis", args.analysis);
    m.add_input("policy", args.policy);
    if (!args.scenario.empty()) m.add_input("scenario", args.scenario);
    if (!args.dgp.empty()) m.add_input("dgp", resolve_dgp_path(args.dgp.string(), args.configs_dir));
    detail::write_with_manifest(
        args.out, m,
        {{"report.json", report_to_json(rep).dump(2) + "\n"},
         {args.scenario.empty() ? "per_unit.csv" : "per_draw.csv", per_rows},
         {"plot_data.csv", plot_data_csv(rep, oracle_rows)}});
    return rep;
}

// Summarize and verify a finished run directory.
inline int run_report(const RunArgs& args, std::ostream& out) {
    const fs::path dir = args.out.empty() ? args.manifest.parent_path() : args.out;
    const fs::path mf = args.manifest.empty() ? dir / "manifest.json" : args.manifest;
    const Manifest m = Manifest::from_json(parse_json_file(mf));
    out << "command: " << m.command << "\nseed: " << m.seed << "\nthreads: " << m.threads << "\n";
    bool ok = true;
    for (const auto& [name, hash] : m.outputs) {
        const fs::path p = mf.parent_path() / name;
        if (!fs::exists(p)) {
            out << "missing output: " << name << "\n";
            ok = false;
            continue;
        }
        const std::string actual = hash_file(p);
        out << name << ": " << (actual == hash ? "ok" : "HASH MISMATCH") << "\n";
        ok = ok && actual == hash;
    }
    if (fs::exists(mf.parent_path() / "report.json")) {
        const json rep = parse_json_file(mf.parent_path() / "report.json");
        out << rep["estimand"].get<std::string>() << " = " << rep["value"].get<double>()
            << " (mc_se " << rep["mc_se"].get<double>() << ")\n";
    }
    return ok ? 0 : static_cast<int>(ExitCode::ConfigError);
}

// Replay a run from its manifest into a new directory; outputs must be
// byte-identical (the manifest pins inputs by content hash).
inline void run_rerun(const RunArgs& args) {
    if (args.manifest.empty()) throw ConfigError("rerun: --manifest is required");
    const Manifest m = Manifest::from_json(parse_json_file(args.manifest));
    RunArgs replay;
    replay.command = m.command;
    replay.seed = m.seed;
    replay.seed_given = true;
    replay.threads = m.threads;
    replay.out = args.out.empty() ? args.manifest.parent_path() : args.out;
    auto arg_of = [&](const char* k) {
        return m.args.contains(k) ? fs::path(m.args[k].get<std::string>()) : fs::path();
    };
    replay.panel = arg_of("panel");
    replay.schema = arg_of("schema");
    replay.analysis = arg_of("analysis");
    replay.scenario = arg_of("scenario");
    replay.policy = arg_of("policy");
    replay.dgp = arg_of("dgp");
    replay.configs_dir = arg_of("configs_dir");
    if (m.args.contains("mode")) replay.mode = m.args["mode"].get<std::string>();
    if (m.args.contains("convention")) replay.convention = m.args["convention"].get<std::string>();
    if (m.args.contains("units")) replay.units = m.args["units"].get<int>();
    if (m.args.contains("horizon")) replay.horizon = m.args["horizon"].get<int>();

    if (m.command == "simulate") run_simulate(replay);
    else if (m.command == "estimate") run_estimate(replay);
    else if (m.command == "forecast") run_forecast(replay);
    else if (m.command == "expose") run_expose(replay);
    else throw ConfigError("rerun: unsupported command '" + m.command + "'");
}

// Exit-code mapping shared by the CLI and the validation harness.
inline int execute(const RunArgs& args, std::ostream& err) {
    try {
        if (args.command == "simulate") run_simulate(args);
        else if (args.command == "estimate") run_estimate(args);
        else if (args.command == "forecast") run_forecast(args);
        else if (args.command == "expose") run_expose(args);
        else if (args.command == "report") return run_report(args, err);
        else if (args.command == "rerun") run_rerun(args);
        else throw ConfigError("unknown command '" + args.command + "'");
        return 0;
    } catch (const OverlapRefusal& e) {
        err << "overlap refusal: " << e.what() << "\n";
        return static_cast<int>(ExitCode::OverlapRefusal);
    } catch (const EstimationError& e) {
        err << "estimation failure: " << e.what() << "\n";
        return static_cast<int>(ExitCode::EstimationFailure);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::ConfigError);
    }
}

} // namespace gfc
