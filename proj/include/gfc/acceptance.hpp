#pragma once

// Bundled acceptance matrix: property-based checks of every estimator against
// the exact structural-model oracles, at desk scale. `gfc validate` and the
// standalone acceptance binary both run this.

#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "gfc/run.hpp"

namespace gfc {

struct AcceptanceOptions {
    fs::path configs_dir = "configs";
    fs::path work_dir = "validate-out";
    std::string filter;
    int threads = 0;
};

struct CriterionResult {
    std::string id;
    std::string name;
    bool passed = false;
    std::string detail;
};

// Enumeration vs Monte Carlo agreement gate used by the validate pre-flight.
inline bool oracle_crosscheck(double exact, const OracleResult& mc, double k = 3.0) {
    return std::abs(mc.value - exact) <= k * mc.mc_se;
}

namespace acceptance {

struct Ctx {
    AcceptanceOptions opt;

    fs::path dgp(const std::string& name) const {
        const fs::path p = opt.configs_dir / "dgp" / (name + ".json");
        if (!fs::exists(p)) throw ConfigError("missing bundled config: " + p.string());
        return p;
    }
    fs::path cfg(const std::string& kind, const std::string& name) const {
        const fs::path p = opt.configs_dir / kind / (name + ".json");
        if (!fs::exists(p)) throw ConfigError("missing bundled config: " + p.string());
        return p;
    }
    AnalysisConfig analysis(const std::string& name, const Schema& schema) const {
        return analysis_from_json(parse_json_file(cfg("analysis", name)), schema);
    }
    ScenarioSpec scenario(const std::string& name, const Schema& schema,
                          const WindowSpec& spec) const {
        return scenario_from_json(parse_json_file(cfg("scenario", name)), schema, spec);
    }
    ExposurePolicy policy(const std::string& name, const Schema& schema, const WindowSpec& spec,
                          const Dgp* context = nullptr) const {
        return policy_from_json(parse_json_file(cfg("policy", name)), schema, spec, context);
    }
};

inline std::string zline(const char* what, double value, double target, double se) {
    std::ostringstream oss;
    oss << what << "=" << value << " target=" << target << " se=" << se;
    return oss.str();
}

// 0. Enumeration and Monte Carlo oracles agree on every shipped model.
inline CriterionResult c0_oracle_crosscheck(const Ctx& ctx) {
    CriterionResult r{"0", "oracle-crosscheck", true, ""};
    struct Probe {
        const char* dgp;
        WindowSpec spec;
        bool exposure;
    };
    WindowSpec s123;
    s123.b = 1; s123.k = 2; s123.l = 3; s123.l_x = 2; s123.l_y = 3;
    WindowSpec s122;
    s122.b = 1; s122.k = 2; s122.l = 2; s122.l_x = 2; s122.l_y = 3;
    WindowSpec s022;
    s022.b = 0; s022.k = 2; s022.l = 2; s022.l_x = 2; s022.l_y = 3;
    WindowSpec s112;
    s112.b = 1; s112.k = 1; s112.l = 1; s112.l_x = 2; s112.l_y = 2;
    const std::vector<Probe> probes = {{"null-effect", s123, false},
                                       {"tdc-on", s122, false},
                                       {"covid-toy", s123, false},
                                       {"prop1-check", s022, false},
                                       {"drift-shift", s022, false},
                                       {"support-drift", s022, false},
                                       {"exposure-clean", s112, true},
                                       {"exposure-tdc", s112, true}};
    std::ostringstream detail;
    for (const auto& probe : probes) {
        const Dgp d = dgp_from_file(ctx.dgp(probe.dgp).string());
        WindowSpec spec = probe.spec;
        spec.validate();
        const int t = 20;
        Intervention iv;
        double exact;
        if (probe.exposure) {
            Key sw(static_cast<size_t>(spec.k + 1), 1);
            force_window_s(iv, spec, t, sw);
            exact = oracle_exposure_response(d, spec, t, sw).value;
        } else {
            TreatmentMapper mapper{MapperKind::OneDay};
            force_window_z(iv, spec, t, mapper.canonical_treated(spec));
            exact = oracle_potential_outcome(d, mapper, spec, t, 1).value;
        }
        McOptions mc;
        mc.replications = 100000;
        mc.seed = 7;
        const OracleResult approx = mc_mean_y(d, t, iv, {}, mc);
        if (!oracle_crosscheck(exact, approx)) {
            r.passed = false;
            detail << probe.dgp << ": |" << approx.value << " - " << exact << "| > 3*"
                   << approx.mc_se << "; ";
        }
    }
    r.detail = r.passed ? "all shipped models agree within 3 SE" : detail.str();
    return r;
}

// 1. Null effect: ATT, ATT_F, AEE, AEE_F all within 3 SE of zero at 10^4 rows.
inline CriterionResult c1_null_effect(const Ctx& ctx) {
    CriterionResult r{"1", "null-effect", true, ""};
    const Dgp d = dgp_from_file(ctx.dgp("null-effect").string());
    const Panel p = simulate(d, 200, 50, 7);
    std::ostringstream detail;

    const AnalysisConfig az = ctx.analysis("null-effect", p.schema());
    AttOptions att = az.att;
    att.seed = 7;
    const EstimateReport ratt = estimate_att(p, az.window, az.mapper, att);
    if (std::abs(ratt.value) > 3.0 * ratt.se) r.passed = false;
    detail << "ATT " << zline("v", ratt.value, 0.0, ratt.se);

    ScenarioSpec sc = ctx.scenario("fixed-f5-small", p.schema(), az.window);
    ForecastOptions fopt;
    fopt.seed = 7;
    fopt.threads = resolve_threads(ctx.opt.threads);
    fopt.kernels = az.kernels;
    fopt.kernels_declared = az.kernels_declared;
    const ForecastReport rf = forecast_att_f(p, az.window, az.mapper, sc, fopt);
    if (std::abs(rf.report.value) > 3.0 * rf.report.se) r.passed = false;
    detail << "; ATT_F " << zline("v", rf.report.value, 0.0, rf.report.se);

    const AnalysisConfig ae = ctx.analysis("null-effect-exposure", p.schema());
    const ExposurePolicy pm = ctx.policy("point-mass-low", p.schema(), ae.window);
    AeeOptions aopt;
    aopt.erf = ae.erf;
    aopt.erf.seed = 7;
    aopt.structure = ae.att.structure;
    const EstimateReport raee = estimate_aee(p, ae.window, pm, aopt);
    if (std::abs(raee.value) > 3.0 * raee.se) r.passed = false;
    detail << "; AEE " << zline("v", raee.value, 0.0, raee.se);

    ScenarioSpec sce = ctx.scenario("exposure-f4", p.schema(), ae.window);
    ExposureForecastOptions eopt;
    eopt.erf = ae.erf;
    eopt.kernels = ae.kernels;
    eopt.kernels_declared = ae.kernels_declared;
    eopt.structure = ae.att.structure;
    eopt.seed = 7;
    eopt.threads = resolve_threads(ctx.opt.threads);
    const ForecastReport re = forecast_aee_f(p, ae.window, pm, sce, eopt);
    if (std::abs(re.report.value) > 3.0 * re.report.se) r.passed = false;
    detail << "; AEE_F " << zline("v", re.report.value, 0.0, re.report.se);

    r.detail = detail.str();
    return r;
}

// 2. The nested sum matches the oracle where plain matching is biased.
inline CriterionResult c2_gformula(const Ctx& ctx) {
    CriterionResult r{"2", "g-formula-vs-selection-bias", true, ""};
    const Dgp d = dgp_from_file(ctx.dgp("tdc-on").string());
    const Panel p = simulate(d, 200, 50, 7);
    const AnalysisConfig a = ctx.analysis("tdc-on", p.schema());

    const RealizedAttOracle oracle = oracle_att_realized(d, p, a.window, a.mapper);

    AttOptions g = a.att;
    g.method = Method::GFormula;
    g.seed = 7;
    const EstimateReport gf = estimate_att(p, a.window, a.mapper, g);
    const double z_gf = std::abs(gf.value - oracle.att.value) / gf.se_imputation;

    AttOptions n = a.att;
    n.method = Method::Adjustment;
    n.conditioning = Conditioning::RV;
    const EstimateReport naive = estimate_att(p, a.window, a.mapper, n);
    const double z_naive = std::abs(naive.value - oracle.att.value) / naive.se;

    r.passed = z_gf <= 3.0 && z_naive > 3.0 && gf.tdc_suspected;
    std::ostringstream detail;
    detail << "oracle=" << oracle.att.value << " gformula=" << gf.value << " (z=" << z_gf
           << ") naive=" << naive.value << " (z=" << z_naive
           << ") tdc_flag=" << (gf.tdc_suspected ? "on" : "off");
    r.detail = detail.str();
    return r;
}

// 3. K=0 degenerates the nested sum to simple adjustment, bitwise.
inline CriterionResult c3_k0_bitwise(const Ctx& ctx) {
    CriterionResult r{"3", "k0-degenerate-equivalence", true, ""};
    const Dgp d = dgp_from_file(ctx.dgp("null-effect").string());
    const Panel p = simulate(d, 100, 40, 11);
    WindowSpec spec;
    spec.b = 1; spec.k = 0; spec.l = 1; spec.l_x = 1; spec.l_y = 1;
    spec.validate();
    TreatmentMapper mapper{MapperKind::OneDay};
    const FittedWindow f = fit_window_tables(p, spec, Driver::Treatment, mapper);
    const auto [all, treated] = build_unit_sets(p, spec, mapper);
    (void)all;
    long compared = 0;
    for (const auto& [i, t] : treated.members) {
        if (t < spec.min_query_time()) continue;
        const HistoryView h = extract_history(p, spec, i, t);
        double adj;
        try {
            adj = estimate_adjusted_mean(f, h, Conditioning::R, 0, 5);
        } catch (const EstimationError&) {
            continue;
        }
        GFormulaOptions gopt;
        const GFormulaValue gf = g_formula_mean(f, h.r_key(), TreatmentMapper::canonical_control(spec), gopt);
        if (gf.value != adj) {
            r.passed = false;
            r.detail = "bitwise mismatch at unit " + std::to_string(i) + " t=" + std::to_string(t);
            return r;
        }
        ++compared;
    }
    r.detail = "bitwise equal on " + std::to_string(compared) + " treated unit-times";
    r.passed = r.passed && compared > 0;
    return r;
}

// 4. The conditional law of the potential outcome given R is identical in the
// observed and future populations (enumeration, TV <= 1e-10).
inline CriterionResult c4_prop1(const Ctx& ctx) {
    CriterionResult r{"4", "transport-factorization", true, ""};
    const Dgp d = dgp_from_file(ctx.dgp("prop1-check").string());
    const AnalysisConfig a = ctx.analysis("prop1-check", d.schema);
    const WindowSpec spec = a.window;
    const int T = 20, t_future = 28;
    TreatmentMapper mapper{MapperKind::OneDay};
    double worst = 0.0;
    int shared = 0;
    for (int arm = 0; arm <= 1; ++arm) {
        auto law_at = [&](int t, bool future) {
            Intervention iv;
            if (future) iv.force_z_from = T + 1;
            force_window_z(iv, spec, t,
                           arm ? mapper.canonical_treated(spec) : TreatmentMapper::canonical_control(spec));
            std::vector<RetainSpec> retain = retain_r(d, spec, t);
            retain.push_back({var::kY, t});
            const DpResult res = dp_run(d, t, retain, iv, 1e7);
            const auto ridx = r_indices(res, d, spec, t);
            const size_t y_idx = res.index_of(var::kY, t);
            std::unordered_map<Key, std::vector<double>, KeyHash> law;
            std::unordered_map<Key, double, KeyHash> mass;
            for (const auto& [row, pr] : res.joint) {
                Key rk = res.subkey(row, ridx);
                auto& v = law[rk];
                if (v.empty()) v.assign(static_cast<size_t>(d.schema.y.size()), 0.0);
                v[static_cast<size_t>(row[y_idx])] += pr;
                mass[rk] += pr;
            }
            for (auto& [rk, v] : law)
                for (auto& q : v) q /= mass[rk];
            return law;
        };
        const auto past = law_at(T, false);
        const auto future = law_at(t_future, true);
        for (const auto& [rk, v] : past) {
            auto it = future.find(rk);
            if (it == future.end()) continue;
            ++shared;
            double tv = 0.0;
            for (size_t c = 0; c < v.size(); ++c) tv += std::abs(v[c] - it->second[c]);
            worst = std::max(worst, 0.5 * tv);
        }
    }
    r.passed = shared > 0 && worst <= 1e-10;
    r.detail = "max TV over " + std::to_string(shared) + " shared profiles = " + std::to_string(worst);
    return r;
}

// 5. Transport consistency and the back-test.
inline CriterionResult c5_transport(const Ctx& ctx) {
    CriterionResult r{"5", "transport-consistency", true, ""};
    const Dgp d = dgp_from_file(ctx.dgp("prop1-check").string());
    std::ostringstream detail;

    {
        const Panel p = simulate(d, 200, 40, 7);
        const AnalysisConfig a = ctx.analysis("prop1-check", p.schema());
        ScenarioSpec sc = ctx.scenario("fixed-f5", p.schema(), a.window);
        sc.future.t_z_len = 2;
        sc.future.t_out_end = 2;
        ForecastOptions opt;
        opt.seed = 7;
        opt.threads = resolve_threads(ctx.opt.threads);
        opt.kernels = a.kernels;
        opt.kernels_declared = a.kernels_declared;
        const ForecastReport rep = forecast_att_f(p, a.window, a.mapper, sc, opt);
        const OracleResult oracle = oracle_att_future(d, a.window, a.mapper, 40, sc.future);
        const double z = std::abs(rep.report.value - oracle.value) / rep.report.se;
        if (z > 3.0) r.passed = false;
        detail << "forecast=" << rep.report.value << " oracle=" << oracle.value << " z=" << z;
    }
    {
        const Panel p = simulate(d, 200, 50, 9);
        const AnalysisConfig a = ctx.analysis("prop1-check", p.schema());
        const ScenarioSpec sc = ctx.scenario("backtest-a40-f5", p.schema(), a.window);
        ForecastOptions opt;
        opt.seed = 9;
        opt.kernels = a.kernels;
        opt.kernels_declared = a.kernels_declared;
        const ForecastReport rep = forecast_att_f(p, a.window, a.mapper, sc, opt);
        // in-sample contrast on the same strata, anchored fit
        const FittedWindow f = fit_window_tables(p, a.window, Driver::Treatment, a.mapper, {}, 40);
        double sum = 0.0;
        long n = 0;
        std::unordered_map<Key, long, KeyHash> per_stratum;
        for (const auto& su : rep.selected[0]) {
            const auto c1 = stratum_cell(f, Conditioning::R, su.r, Key{1}, 5);
            const auto c0 = stratum_cell(f, Conditioning::R, su.r, Key{0}, 5);
            if (!c1 || !c0) continue;
            sum += c1->mean() - c0->mean();
            ++per_stratum[su.r];
            ++n;
        }
        double var_sum = 0.0;
        for (const auto& [rk, nr] : per_stratum) {
            const auto c1 = stratum_cell(f, Conditioning::R, rk, Key{1}, 5);
            const auto c0 = stratum_cell(f, Conditioning::R, rk, Key{0}, 5);
            const double w = static_cast<double>(nr) / static_cast<double>(n);
            var_sum += w * w * (c1->mean_var() + c0->mean_var());
        }
        const double in_sample = n ? sum / static_cast<double>(n) : 0.0;
        const double comb = std::sqrt(rep.report.se * rep.report.se + var_sum);
        const double gap = std::abs(rep.report.value - in_sample);
        if (n == 0 || gap > 3.0 * comb + 1e-12) r.passed = false;
        detail << "; backtest=" << rep.report.value << " in-sample=" << in_sample
               << " gap=" << gap << " (3se=" << 3.0 * comb << ")";
    }
    r.detail = detail.str();
    return r;
}

// 6. An unmeasured modifier shifting right after the observed window makes
// the forecast provably off (detectability).
inline CriterionResult c6_violation(const Ctx& ctx) {
    CriterionResult r{"6", "violation-sensitivity", true, ""};
    const Dgp d = dgp_from_file(ctx.dgp("drift-shift").string());
    const Panel p = simulate(d, 200, 40, 7); // shift fires at 41
    const AnalysisConfig a = ctx.analysis("drift-shift", p.schema());
    ScenarioSpec sc = ctx.scenario("fixed-f5-small", p.schema(), a.window);
    sc.future.t_z_len = 2;
    sc.future.t_out_end = 2;
    ForecastOptions opt;
    opt.seed = 7;
    opt.threads = resolve_threads(ctx.opt.threads);
    opt.kernels = a.kernels;
    opt.kernels_declared = a.kernels_declared;
    const ForecastReport rep = forecast_att_f(p, a.window, a.mapper, sc, opt);
    const OracleResult oracle = oracle_att_future(d, a.window, a.mapper, 40, sc.future);
    const double z = std::abs(rep.report.value - oracle.value) / rep.report.se;
    r.passed = z > 3.0;
    std::ostringstream detail;
    detail << "forecast=" << rep.report.value << " drifted-oracle=" << oracle.value << " z=" << z;
    r.detail = detail.str();
    return r;
}

// 7. Overlap: off-support profiles refuse with the dedicated exit code; no
// false refusals on supported scenarios across 20 seeds.
inline CriterionResult c7_overlap(const Ctx& ctx) {
    CriterionResult r{"7", "overlap-refusal", true, ""};
    std::ostringstream detail;
    const fs::path work = ctx.opt.work_dir / "c7";
    fs::create_directories(work);

    // refusal path through the command layer (exit code 4)
    {
        RunArgs sim;
        sim.command = "simulate";
        sim.dgp = ctx.dgp("support-drift");
        sim.units = 60;
        sim.horizon = 40;
        sim.seed = 7;
        sim.seed_given = true;
        sim.out = work / "panel";
        sim.configs_dir = ctx.opt.configs_dir;
        run_simulate(sim);

        RunArgs fc;
        fc.command = "forecast";
        fc.panel = work / "panel" / "panel.csv";
        fc.schema = work / "panel" / "schema.json";
        fc.analysis = ctx.cfg("analysis", "support-drift");
        fc.scenario = ctx.cfg("scenario", "explicit-unsupported");
        fc.seed = 7;
        fc.seed_given = true;
        fc.out = work / "refused";
        fc.configs_dir = ctx.opt.configs_dir;
        std::ostringstream sink;
        const int code = execute(fc, sink);
        if (code != static_cast<int>(ExitCode::OverlapRefusal)) {
            r.passed = false;
            detail << "expected exit 4, got " << code << "; ";
        } else {
            detail << "unsupported profile refused (exit 4)";
        }
    }

    // fully supported scenarios: zero refusals across 20 seeds
    const Dgp d = dgp_from_file(ctx.dgp("prop1-check").string());
    const AnalysisConfig a = ctx.analysis("prop1-check", d.schema);
    int refusals = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const Panel p = simulate(d, 100, 40, 200 + seed);
        ScenarioSpec sc = ctx.scenario("backtest-a40-f5", p.schema(), a.window);
        sc.anchor_time = -1;
        sc.n_draws = 30;
        ForecastOptions opt;
        opt.seed = seed;
        opt.kernels = a.kernels;
        opt.kernels_declared = a.kernels_declared;
        try {
            forecast_att_f(p, a.window, a.mapper, sc, opt);
        } catch (const OverlapRefusal&) {
            ++refusals;
        }
    }
    if (refusals != 0) r.passed = false;
    detail << "; false refusals over 20 seeds: " << refusals;
    r.detail = detail.str();
    return r;
}

// 8. Exposure suite: flat ERF, exact status-quo zeroes, policies vs oracle,
// both transport invariances, and exact policy-mixture linearity.
inline CriterionResult c8_exposure(const Ctx& ctx) {
    CriterionResult r{"8", "exposure-suite", true, ""};
    std::ostringstream detail;
    const Dgp clean = dgp_from_file(ctx.dgp("exposure-clean").string());
    const Panel p = simulate(clean, 200, 50, 7);
    const AnalysisConfig a = ctx.analysis("exposure-clean", p.schema());

    // flat ERF on the null model
    {
        const Dgp null = dgp_from_file(ctx.dgp("null-effect").string());
        const Panel pn = simulate(null, 200, 50, 7);
        const AnalysisConfig an = ctx.analysis("null-effect-exposure", pn.schema());
        const TreatmentMapper dummy{MapperKind::AnyDay};
        const FittedWindow f =
            fit_window_tables(pn, an.window, Driver::Exposure, dummy, an.att.structure);
        double worst = 0.0;
        const ErfEstimate erf = estimate_erf_for_stratum(f, *f.r_support.begin(), an.erf);
        std::vector<const ErfCell*> cells;
        for (const auto& [sw, c] : erf.by_window)
            if (c.estimable) cells.push_back(&c);
        for (size_t i = 0; i < cells.size(); ++i)
            for (size_t j = i + 1; j < cells.size(); ++j)
                worst = std::max(worst, std::abs(cells[i]->value - cells[j]->value) /
                                            std::sqrt(cells[i]->var + cells[j]->var + 1e-18));
        if (cells.size() < 2 || worst > 3.0) r.passed = false;
        detail << "flat-ERF max z=" << worst;
    }

    // status-quo zeroes
    {
        ExposurePolicy natural;
        natural.kind = ExposurePolicy::Kind::Natural;
        AeeOptions aopt;
        aopt.erf = a.erf;
        aopt.erf.mode = ErfMode::Matching;
        aopt.erf.min_cell = 1;
        aopt.structure = a.att.structure;
        const EstimateReport aee = estimate_aee(p, a.window, natural, aopt);
        ScenarioSpec sc = ctx.scenario("exposure-f4", p.schema(), a.window);
        sc.n_draws = 50;
        ExposureForecastOptions eopt;
        eopt.erf = a.erf;
        eopt.kernels = a.kernels;
        eopt.kernels_declared = a.kernels_declared;
        eopt.structure = a.att.structure;
        eopt.seed = 7;
        const ForecastReport aeef = forecast_aee_f(p, a.window, natural, sc, eopt);
        if (std::abs(aee.value) > 1e-12 || std::abs(aeef.report.value) > 1e-12) r.passed = false;
        detail << "; status-quo AEE=" << aee.value << " AEE_F=" << aeef.report.value;
    }

    // point-mass and truncation vs oracle
    for (const char* pol_name : {"point-mass-low", "truncate-below-2"}) {
        const ExposurePolicy pol = ctx.policy(pol_name, p.schema(), a.window);
        AeeOptions aopt;
        aopt.erf = a.erf;
        aopt.erf.seed = 7;
        aopt.structure = a.att.structure;
        const EstimateReport rep = estimate_aee(p, a.window, pol, aopt);
        ExposedSelection all;
        const RealizedAeeOracle oracle = oracle_aee_realized(clean, p, a.window, all, pol);
        const double z = std::abs(rep.value - oracle.aee.value) / rep.se_imputation;
        if (z > 3.0) r.passed = false;
        detail << "; AEE(" << pol_name << ") z=" << z;

        ScenarioSpec sc = ctx.scenario("exposure-f4", p.schema(), a.window);
        ExposureForecastOptions eopt;
        eopt.erf = a.erf;
        eopt.kernels = a.kernels;
        eopt.kernels_declared = a.kernels_declared;
        eopt.structure = a.att.structure;
        eopt.seed = 7;
        eopt.threads = resolve_threads(ctx.opt.threads);
        const ForecastReport fr = forecast_aee_f(p, a.window, pol, sc, eopt);
        const OracleResult of = oracle_aee_future(clean, a.window, 50, sc.future, pol);
        const double zf = std::abs(fr.report.value - of.value) / fr.report.se;
        if (zf > 3.0) r.passed = false;
        detail << " AEE_F z=" << zf;
    }

    // transport invariances by enumeration
    {
        const WindowSpec spec = a.window;
        const int T = 20, t_future = 28;
        double worst = 0.0;
        for (const Key& sw : enumerate_tuples(clean.schema.s.size(), spec.k + 1)) {
            auto law_at = [&](int t) {
                Intervention iv;
                force_window_s(iv, spec, t, sw);
                std::vector<RetainSpec> retain = retain_r(clean, spec, t);
                retain.push_back({var::kY, t});
                const DpResult res = dp_run(clean, t, retain, iv, 1e7);
                const auto ridx = r_indices(res, clean, spec, t);
                const size_t y_idx = res.index_of(var::kY, t);
                std::unordered_map<Key, std::vector<double>, KeyHash> law;
                std::unordered_map<Key, double, KeyHash> mass;
                for (const auto& [row, pr] : res.joint) {
                    Key rk = res.subkey(row, ridx);
                    auto& v = law[rk];
                    if (v.empty()) v.assign(2, 0.0);
                    v[static_cast<size_t>(row[y_idx])] += pr;
                    mass[rk] += pr;
                }
                for (auto& [rk, v] : law)
                    for (auto& q : v) q /= mass[rk];
                return law;
            };
            const auto past = law_at(T), future = law_at(t_future);
            for (const auto& [rk, v] : past) {
                auto it = future.find(rk);
                if (it == future.end()) continue;
                double tv = 0.0;
                for (size_t c = 0; c < v.size(); ++c) tv += std::abs(v[c] - it->second[c]);
                worst = std::max(worst, 0.5 * tv);
            }
        }
        // carry-over exposure law invariance
        auto slaw_at = [&](int t) {
            const WindowSpec spec2 = a.window;
            std::vector<RetainSpec> retain = retain_r(clean, spec2, t);
            const int H = spec2.window_start(t);
            retain.push_back({var::kS, H - 1});
            retain.push_back({var::kS, H});
            retain.push_back({var::kS, H + 1});
            const DpResult res = dp_run(clean, t, retain, {}, 1e7);
            const auto ridx = r_indices(res, clean, spec2, t);
            const size_t pre = res.index_of(var::kS, H - 1);
            const size_t s0 = res.index_of(var::kS, H), s1 = res.index_of(var::kS, H + 1);
            std::unordered_map<Key, std::unordered_map<Key, double, KeyHash>, KeyHash> law;
            std::unordered_map<Key, double, KeyHash> mass;
            for (const auto& [row, pr] : res.joint) {
                Key cond = res.subkey(row, ridx);
                cond.push_back(row[pre]);
                law[cond][Key{row[s0], row[s1]}] += pr;
                mass[cond] += pr;
            }
            for (auto& [c, m] : law)
                for (auto& [sw2, q] : m) q /= mass[c];
            return law;
        };
        const auto past = slaw_at(T), future = slaw_at(t_future);
        for (const auto& [cond, m] : past) {
            auto it = future.find(cond);
            if (it == future.end()) continue;
            double tv = 0.0;
            for (const auto& [sw2, q] : m) {
                auto jt = it->second.find(sw2);
                tv += std::abs(q - (jt == it->second.end() ? 0.0 : jt->second));
            }
            worst = std::max(worst, 0.5 * tv);
        }
        if (worst > 1e-10) r.passed = false;
        detail << "; transport TV=" << worst;
    }

    // exact policy-mixture linearity
    {
        auto table_policy = [&](std::vector<std::pair<Key, double>> entries) {
            ExposurePolicy pol;
            pol.kind = ExposurePolicy::Kind::ExplicitTable;
            for (auto& [k, v] : entries) pol.table[k] = v;
            return pol;
        };
        const ExposurePolicy p1 = table_policy({{Key{0, 0}, 0.6}, {Key{1, 1}, 0.4}});
        const ExposurePolicy p2 = table_policy({{Key{2, 2}, 0.5}, {Key{0, 1}, 0.5}});
        const double alpha = 0.3;
        ExposurePolicy mix;
        mix.kind = ExposurePolicy::Kind::ExplicitTable;
        for (const auto& [k, v] : p1.table) mix.table[k] += alpha * v;
        for (const auto& [k, v] : p2.table) mix.table[k] += (1 - alpha) * v;
        AeeOptions aopt;
        aopt.erf = a.erf;
        aopt.erf.min_cell = 3;
        aopt.structure = a.att.structure;
        const double a1 = estimate_aee(p, a.window, p1, aopt).value;
        const double a2 = estimate_aee(p, a.window, p2, aopt).value;
        const double am = estimate_aee(p, a.window, mix, aopt).value;
        const double gap = std::abs(am - (alpha * a1 + (1 - alpha) * a2));
        if (gap > 1e-12) r.passed = false;
        detail << "; mixture gap=" << gap;
    }

    r.detail = detail.str();
    return r;
}

// 9. Byte-identical reproducibility from manifests, including threads > 1.
inline CriterionResult c9_reproducibility(const Ctx& ctx) {
    CriterionResult r{"9", "reproducibility", true, ""};
    std::ostringstream detail;
    const fs::path work = ctx.opt.work_dir / "c9";
    fs::remove_all(work);
    fs::create_directories(work);

    auto files_equal = [&](const fs::path& a, const fs::path& b) {
        return read_file(a) == read_file(b);
    };

    RunArgs sim;
    sim.command = "simulate";
    sim.dgp = ctx.dgp("covid-toy");
    sim.units = 20;
    sim.horizon = 30;
    sim.seed = 7;
    sim.seed_given = true;
    sim.out = work / "sim";
    sim.configs_dir = ctx.opt.configs_dir;
    run_simulate(sim);

    RunArgs rerun_args;
    rerun_args.command = "rerun";
    rerun_args.manifest = work / "sim" / "manifest.json";
    rerun_args.out = work / "sim2";
    run_rerun(rerun_args);
    bool ok = files_equal(work / "sim" / "panel.csv", work / "sim2" / "panel.csv") &&
              files_equal(work / "sim" / "manifest.json", work / "sim2" / "manifest.json");
    detail << "simulate rerun " << (ok ? "identical" : "DIFFERS");

    // forecast under 1 vs 2 threads, plus a manifest replay
    const Dgp d = dgp_from_file(ctx.dgp("prop1-check").string());
    const Panel p = simulate(d, 60, 40, 7);
    atomic_write(work / "p" / "panel.csv", write_csv_string(p));
    atomic_write(work / "p" / "schema.json", schema_to_json(p.schema()).dump(2) + "\n");

    auto forecast_into = [&](const fs::path& out, int threads) {
        RunArgs fc;
        fc.command = "forecast";
        fc.panel = work / "p" / "panel.csv";
        fc.schema = work / "p" / "schema.json";
        fc.analysis = ctx.cfg("analysis", "prop1-check");
        fc.scenario = ctx.cfg("scenario", "fixed-f5-small");
        fc.seed = 7;
        fc.seed_given = true;
        fc.threads = threads;
        fc.out = out;
        fc.configs_dir = ctx.opt.configs_dir;
        run_forecast(fc);
    };
    forecast_into(work / "f1", 1);
    forecast_into(work / "f2", 2);
    const bool thread_ok = files_equal(work / "f1" / "report.json", work / "f2" / "report.json") &&
                           files_equal(work / "f1" / "per_draw.csv", work / "f2" / "per_draw.csv");
    ok = ok && thread_ok;
    detail << "; threads 1 vs 2 " << (thread_ok ? "identical" : "DIFFERS");

    RunArgs rf;
    rf.command = "rerun";
    rf.manifest = work / "f1" / "manifest.json";
    rf.out = work / "f3";
    run_rerun(rf);
    const bool rerun_ok = files_equal(work / "f1" / "report.json", work / "f3" / "report.json");
    ok = ok && rerun_ok;
    detail << "; forecast rerun " << (rerun_ok ? "identical" : "DIFFERS");

    r.passed = ok;
    r.detail = detail.str();
    return r;
}

// 10. Fitted transition tables recover the model probabilities within
// 3 binomial SE per cell (pass rate >= 99% pooled across seeds).
inline CriterionResult c10_table_fidelity(const Ctx& ctx) {
    CriterionResult r{"10", "table-fidelity", true, ""};
    const Dgp d = dgp_from_file(ctx.dgp("prop1-check").string());
    long cells = 0, passed = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        const Panel p = simulate(d, 200, 50, 300 + seed);
        TransitionKernels k;
        Kernel kx;
        kx.spec.parents = {{0, 1}};
        k.x.push_back(kx);
        k.y.spec.parents = {{var::kZ, 2}, {0, 0}};
        fit_kernels(k, p);

        const double truth_x[2][2] = {{0.75, 0.25}, {0.3, 0.7}};
        for (const auto& [key, row] : k.x[0].rows) {
            for (int c = 0; c < 2; ++c) {
                const double pt = truth_x[key[0]][c];
                const double se = std::sqrt(pt * (1 - pt) / row.total);
                ++cells;
                if (std::abs(row.prob(c) - pt) <= 3.0 * se + 1e-12) ++passed;
            }
        }
        const double truth_y[4] = {0.20, 0.48, 0.12, 0.28};
        for (const auto& [key, row] : k.y.rows) {
            if (row.total < 30) continue;
            const double pt = truth_y[key[0] * 2 + key[1]];
            for (int c = 0; c < 2; ++c) {
                const double pc = c == 1 ? pt : 1 - pt;
                const double se = std::sqrt(pc * (1 - pc) / row.total);
                ++cells;
                if (std::abs(row.prob(c) - pc) <= 3.0 * se + 1e-12) ++passed;
            }
        }
    }
    const double rate = static_cast<double>(passed) / static_cast<double>(cells);
    r.passed = rate >= 0.99;
    r.detail = "per-cell pass rate " + std::to_string(rate) + " over " + std::to_string(cells) +
               " cells";
    return r;
}

} // namespace acceptance

inline std::vector<CriterionResult> acceptance_criteria(const AcceptanceOptions& opt) {
    acceptance::Ctx ctx{opt};
    using Fn = std::function<CriterionResult(const acceptance::Ctx&)>;
    const std::vector<std::pair<std::string, Fn>> all = {
        {"oracle-crosscheck", acceptance::c0_oracle_crosscheck},
        {"null-effect", acceptance::c1_null_effect},
        {"g-formula-vs-selection-bias", acceptance::c2_gformula},
        {"k0-degenerate-equivalence", acceptance::c3_k0_bitwise},
        {"transport-factorization", acceptance::c4_prop1},
        {"transport-consistency", acceptance::c5_transport},
        {"violation-sensitivity", acceptance::c6_violation},
        {"overlap-refusal", acceptance::c7_overlap},
        {"exposure-suite", acceptance::c8_exposure},
        {"reproducibility", acceptance::c9_reproducibility},
        {"table-fidelity", acceptance::c10_table_fidelity},
    };
    std::vector<CriterionResult> results;
    for (const auto& [name, fn] : all) {
        if (!opt.filter.empty() && name.find(opt.filter) == std::string::npos) continue;
        results.push_back(fn(ctx));
    }
    return results;
}

inline std::string junit_xml(const std::vector<CriterionResult>& results) {
    std::ostringstream xml;
    int failures = 0;
    for (const auto& r : results) failures += r.passed ? 0 : 1;
    xml << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    xml << "<testsuite name=\"acceptance\" tests=\"" << results.size() << "\" failures=\""
        << failures << "\">\n";
    for (const auto& r : results) {
        xml << "  <testcase classname=\"acceptance\" name=\"" << r.id << "-" << r.name << "\"";
        if (r.passed) {
            xml << "/>\n";
        } else {
            xml << ">\n    <failure message=\"" << r.detail << "\"/>\n  </testcase>\n";
        }
    }
    xml << "</testsuite>\n";
    return xml.str();
}

inline int run_acceptance(const AcceptanceOptions& opt, std::ostream& out) {
    std::vector<CriterionResult> results;
    try {
        results = acceptance_criteria(opt);
    } catch (const ConfigError& e) {
        out << "setup error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::ConfigError);
    }
    bool all_passed = true;
    for (const auto& r : results) {
        out << (r.passed ? "[PASS]" : "[FAIL]") << " " << r.id << " " << r.name << " - "
            << r.detail << "\n";
        all_passed = all_passed && r.passed;
    }
    if (!opt.work_dir.empty()) {
        fs::create_directories(opt.work_dir);
        atomic_write(opt.work_dir / "acceptance.xml", junit_xml(results));
    }
    out << (all_passed ? "acceptance: all criteria passed" : "acceptance: FAILURES present") << "\n";
    return all_passed ? 0 : static_cast<int>(ExitCode::ValidationFailure);
}

} // namespace gfc
