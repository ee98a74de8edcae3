#include <catch2/catch_amalgamated.hpp>

#include "gfc/estimand_oracle.hpp"
#include "gfc/forecast.hpp"
#include "gfc/simulate.hpp"
#include "support/fixtures.hpp"

using namespace gfc;

namespace {

WindowSpec prop1_spec() {
    WindowSpec s;
    s.b = 0;
    s.k = 2;
    s.l = 2;
    s.l_x = 2;
    s.l_y = 3;
    s.validate();
    return s;
}

TransitionKernels prop1_kernels() {
    TransitionKernels k;
    Kernel kx;
    kx.spec.parents = {{0, 1}};
    kx.card = 2;
    k.x.push_back(kx);
    k.y.spec.parents = {{var::kZ, 2}, {0, 0}};
    k.y.card = 2;
    k.s.card = 1;
    return k;
}

ScenarioSpec fixed_scenario(int f, int n_draws, int anchor = -1, int l = 2) {
    ScenarioSpec sc;
    sc.rule = ScenarioSpec::Rule::FixedTime;
    sc.future.gap = f;
    sc.future.t_z_len = l;
    sc.future.t_out_end = l;
    sc.n_draws = n_draws;
    sc.anchor_time = anchor;
    return sc;
}

} // namespace

TEST_CASE("imputation never overwrites observed cells and draws reuse data") {
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const Panel p = simulate(d, 30, 40, 3);
    TransitionKernels k = prop1_kernels();
    fit_kernels(k, p, 30); // anchored fit
    // future window inside the panel: every needed time is observed
    const ImputedSeries s0 = impute_series(p, k, 38, 0, 9, 5, 5, {}, false);
    const ImputedSeries s1 = impute_series(p, k, 38, 1, 9, 5, 5, {}, false);
    for (int t = 1; t <= 38; ++t) {
        REQUIRE(s0.observed(t));
        REQUIRE(s0.y(5, t) == p.y(5, t));
        REQUIRE(s0.y(5, t) == s1.y(5, t));
    }
}

TEST_CASE("deterministic transitions give identical draws") {
    const Dgp d = test::point_mass_dgp();
    const Panel p = simulate(d, 5, 12, 1);
    TransitionKernels k;
    Kernel kx;
    kx.spec.parents = {{0, 1}};
    kx.card = 2;
    k.x.push_back(kx);
    k.y.spec.parents = {{0, 0}};
    k.y.card = 2;
    fit_kernels(k, p);
    const ImputedSeries a = impute_series(p, k, 16, 0, 4, 2, 1, {}, false);
    const ImputedSeries b = impute_series(p, k, 16, 7, 4, 2, 1, {}, false);
    for (int t = 13; t <= 16; ++t) {
        REQUIRE(a.x(2, t, 0) == b.x(2, t, 0));
        REQUIRE(a.y(2, t) == b.y(2, t));
        REQUIRE_FALSE(a.observed(t));
    }
}

TEST_CASE("imputed covariate law matches the simulated future (TV < 0.05)") {
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const int T = 40, F = 6;
    const Panel p = simulate(d, 50, T, 11);
    TransitionKernels k = prop1_kernels();
    fit_kernels(k, p);

    // imputed law of x at T+F pooled over units and draws
    double imp[2] = {0, 0};
    const int n_draws = 200;
    for (int dr = 0; dr < n_draws; ++dr)
        for (int i = 0; i < 50; ++i) {
            const ImputedSeries s = impute_series(p, k, T + F, dr, 13, i, 5, {}, false);
            imp[s.x(i, T + F, 0)] += 1.0;
        }
    // true law from fresh simulations with z suppressed after T
    double tru[2] = {0, 0};
    Intervention iv;
    iv.force_z_from = T + 1;
    for (int rep = 0; rep < 10000; ++rep) {
        const Trajectory tr = simulate_unit(d, T + F, 999, static_cast<uint64_t>(rep), 0, iv);
        tru[tr.x[static_cast<size_t>(T + F - 1)][0]] += 1.0;
    }
    const double n_imp = imp[0] + imp[1], n_tru = tru[0] + tru[1];
    const double tv = 0.5 * (std::abs(imp[0] / n_imp - tru[0] / n_tru) +
                             std::abs(imp[1] / n_imp - tru[1] / n_tru));
    REQUIRE(tv < 0.05);
}

TEST_CASE("fixed-time selection takes every unit once") {
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const Panel p = simulate(d, 5, 30, 21);
    const WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};
    ScenarioSpec sc = fixed_scenario(4, 3);
    ForecastOptions opt;
    opt.kernels = prop1_kernels();
    opt.kernels_declared = true;
    opt.min_cell = 2;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);
    for (const auto& per_draw : rep.selected) REQUIRE(per_draw.size() == 5);
}

TEST_CASE("explicit profiles never realized give an empty selection") {
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const Panel p = simulate(d, 5, 30, 22);
    const WindowSpec spec = prop1_spec();
    TransitionKernels k = prop1_kernels();
    fit_kernels(k, p);
    std::vector<std::vector<ImputedSeries>> draws(2);
    for (int dr = 0; dr < 2; ++dr)
        for (int i = 0; i < 5; ++i)
            draws[static_cast<size_t>(dr)].push_back(
                impute_series(p, k, 36, dr, 5, i, 5, {}, false));
    ScenarioSpec sc = fixed_scenario(4, 2);
    sc.rule = ScenarioSpec::Rule::ExplicitR;
    sc.r_values = {Key{9, 9, 9, 9, 9}}; // impossible codes
    const auto sel = select_future_units(p, spec, sc, draws, {}, 30);
    for (const auto& per_draw : sel) REQUIRE(per_draw.empty());
}

TEST_CASE("match-past-R selection frequency tracks the past frequency") {
    // the outcome ignores z here, so the natural-course future law equals
    // the in-sample law and the selection frequency is transportable
    const Dgp d = dgp_from_file("configs/dgp/null-effect.json");
    const int T = 40;
    const Panel p = simulate(d, 100, T, 31);
    WindowSpec spec;
    spec.b = 1;
    spec.k = 2;
    spec.l = 3;
    spec.l_x = 2;
    spec.l_y = 3;
    spec.validate();
    TreatmentMapper mapper{MapperKind::OneDay};

    // past treated profiles and the population frequency of that set
    std::unordered_set<Key, KeyHash> rset;
    const auto [all, treated] = build_unit_sets(p, spec, mapper);
    (void)all;
    for (const auto& [i, t] : treated.members)
        if (t >= spec.min_query_time()) rset.insert(extract_history(p, spec, i, t).r_key());
    long in_set = 0, total = 0;
    for (int i = 0; i < p.n_units(); ++i)
        for (int t = spec.min_query_time(); t <= T; ++t) {
            ++total;
            if (rset.count(extract_history(p, spec, i, t).r_key())) ++in_set;
        }
    const double past_freq = static_cast<double>(in_set) / static_cast<double>(total);

    ScenarioSpec sc = fixed_scenario(5, 50, -1, 3);
    sc.rule = ScenarioSpec::Rule::MatchPastR;
    ForecastOptions opt;
    TransitionKernels k;
    Kernel kx;
    kx.spec.parents = {{0, 1}};
    kx.card = 2;
    k.x.push_back(kx);
    k.y.spec.parents = {{0, 1}};
    k.y.card = 2;
    k.s.spec.parents = {{0, 0}};
    k.s.card = 3;
    opt.kernels = k;
    opt.kernels_declared = true;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);
    long selected = 0;
    for (const auto& per_draw : rep.selected) selected += static_cast<long>(per_draw.size());
    const long n_times = sc.future.t_out_end - spec.l + 1;
    const long candidates = 50L * 100L * n_times;
    const double freq = static_cast<double>(selected) / static_cast<double>(candidates);
    const double se = std::sqrt(past_freq * (1 - past_freq) / static_cast<double>(candidates));
    // draws are correlated through the fitted kernels, allow a wide band
    REQUIRE(std::abs(freq - past_freq) < std::max(0.05, 5 * se));
}

TEST_CASE("fully supported profiles give zero violations") {
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const Panel p = simulate(d, 100, 40, 41);
    const WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};
    ScenarioSpec sc = fixed_scenario(5, 20);
    ForecastOptions opt;
    opt.kernels = prop1_kernels();
    opt.kernels_declared = true;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);
    REQUIRE(rep.overlap.violation_fraction == 0.0);
}

TEST_CASE("profiles off the observed support refuse unless forced") {
    const Dgp d = dgp_from_file("configs/dgp/support-drift.json");
    const Panel p = simulate(d, 60, 40, 43); // drift never fires by T=40
    WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};

    ScenarioSpec sc = fixed_scenario(5, 4);
    sc.rule = ScenarioSpec::Rule::ExplicitR;
    // x1 = 2 is declared on the grid but never emitted before the shift
    sc.r_values = {Key{2, 2, 0}};
    ForecastOptions opt;
    TransitionKernels k;
    Kernel kx;
    kx.spec.parents = {{0, 1}};
    kx.card = 3;
    k.x.push_back(kx);
    k.y.spec.parents = {{var::kZ, 2}, {0, 0}};
    k.y.card = 2;
    k.s.card = 1;
    opt.kernels = k;
    opt.kernels_declared = true;

    // selection is empty because level 2 is never imputed either; seed the
    // problem by asking for the never-observed profile explicitly via
    // check_overlap
    std::vector<Key> asked = {Key{2, 2, 0}};
    const FittedWindow f = fit_window_tables(p, spec, Driver::Treatment, mapper);
    const OverlapReport rep = check_overlap(asked, f.r_support);
    REQUIRE(rep.violation_fraction == 1.0);
}

TEST_CASE("observed drifted futures surface overlap violations") {
    const Dgp d = dgp_from_file("configs/dgp/support-drift.json");
    // simulate THROUGH the shift; analyze anchored before it
    const Panel p = simulate(d, 80, 60, 47);
    const WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};
    ScenarioSpec sc = fixed_scenario(8, 2, /*anchor=*/40); // t* = 48 > tau
    sc.force = true; // keep going to read the report
    ForecastOptions opt;
    TransitionKernels k;
    Kernel kx;
    kx.spec.parents = {{0, 1}};
    kx.card = 3;
    k.x.push_back(kx);
    k.y.spec.parents = {{var::kZ, 2}, {0, 0}};
    k.y.card = 2;
    k.s.card = 1;
    opt.kernels = k;
    opt.kernels_declared = true;
    opt.min_cell = 3;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);
    REQUIRE(rep.overlap.violation_fraction > 0.0);

    sc.force = false;
    REQUIRE_THROWS_AS(forecast_att_f(p, spec, mapper, sc, opt), OverlapRefusal);
}

TEST_CASE("null effect forecasts to zero within 3 SE") {
    const Dgp d = dgp_from_file("configs/dgp/null-effect.json");
    const Panel p = simulate(d, 200, 50, 53);
    WindowSpec spec;
    spec.b = 1;
    spec.k = 2;
    spec.l = 3; // treatment at the window start: R alone carries the confounders
    spec.l_x = 2;
    spec.l_y = 3;
    spec.validate();
    TreatmentMapper mapper{MapperKind::OneDay};
    ScenarioSpec sc = fixed_scenario(5, 200, -1, 3);
    ForecastOptions opt;
    TransitionKernels k;
    Kernel kx;
    kx.spec.parents = {{0, 1}};
    kx.card = 2;
    k.x.push_back(kx);
    k.y.spec.parents = {{0, 1}};
    k.y.card = 2;
    k.s.spec.parents = {{0, 0}};
    k.s.card = 3;
    opt.kernels = k;
    opt.kernels_declared = true;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);
    REQUIRE(std::abs(rep.report.value) < 3.0 * rep.report.se);
}

TEST_CASE("time-homogeneous forecast matches the enumeration oracle") {
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const int T = 40;
    const Panel p = simulate(d, 200, T, 57);
    const WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};
    ScenarioSpec sc = fixed_scenario(5, 300);
    ForecastOptions opt;
    opt.kernels = prop1_kernels();
    opt.kernels_declared = true;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);

    FutureWindow fut;
    fut.gap = 5;
    fut.t_z_len = 2;
    fut.t_out_end = 2;
    const OracleResult oracle = oracle_att_future(d, spec, mapper, T, fut);
    REQUIRE(std::abs(rep.report.value - oracle.value) < 3.0 * rep.report.se);
}

TEST_CASE("back-test inside the observed window reproduces the in-sample contrast") {
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const Panel p = simulate(d, 200, 50, 59);
    const WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};

    const int anchor = 40;
    ScenarioSpec sc = fixed_scenario(5, 3, anchor); // t* = 45 <= 50: observed
    ForecastOptions opt;
    opt.kernels = prop1_kernels();
    opt.kernels_declared = true;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);

    // all modifiers observed: every draw must agree exactly
    REQUIRE(rep.report.mc_se == 0.0);

    // in-sample contrast on the same strata, fitted on the anchored window
    const FittedWindow f = fit_window_tables(p, spec, Driver::Treatment, mapper, {}, anchor);
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
    REQUIRE(n > 0);
    double var_sum = 0.0;
    for (const auto& [r, nr] : per_stratum) {
        const auto c1 = stratum_cell(f, Conditioning::R, r, Key{1}, 5);
        const auto c0 = stratum_cell(f, Conditioning::R, r, Key{0}, 5);
        const double w = static_cast<double>(nr) / static_cast<double>(n);
        var_sum += w * w * (c1->mean_var() + c0->mean_var());
    }
    const double in_sample = sum / static_cast<double>(n);
    const double comb = std::sqrt(rep.report.se * rep.report.se + var_sum);
    REQUIRE(std::abs(rep.report.value - in_sample) < 3.0 * comb + 1e-12);
}

TEST_CASE("a modifier shift after the observed window is detectable") {
    const Dgp d = dgp_from_file("configs/dgp/drift-shift.json");
    const int T = 40; // shift fires at 41
    const Panel p = simulate(d, 200, T, 61);
    const WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};
    ScenarioSpec sc = fixed_scenario(5, 300);
    ForecastOptions opt;
    opt.kernels = prop1_kernels();
    opt.kernels_declared = true;
    const ForecastReport rep = forecast_att_f(p, spec, mapper, sc, opt);

    FutureWindow fut;
    fut.gap = 5;
    fut.t_z_len = 2;
    fut.t_out_end = 2;
    const OracleResult oracle = oracle_att_future(d, spec, mapper, T, fut);
    INFO("forecast " << rep.report.value << " vs drifted truth " << oracle.value);
    REQUIRE(std::abs(rep.report.value - oracle.value) > 3.0 * rep.report.se);
}

TEST_CASE("earlier future windows do not increase the draw component of the SE") {
    // anchored analysis with six post-anchor times observed: the near window
    // reuses data (zero draw spread), the far one must impute
    const Dgp d = dgp_from_file("configs/dgp/prop1-check.json");
    const WindowSpec spec = prop1_spec();
    TreatmentMapper mapper{MapperKind::OneDay};
    double mc_near = 0.0, mc_far = 0.0;
    for (uint64_t seed = 1; seed <= 6; ++seed) {
        const Panel p = simulate(d, 100, 46, 100 + seed);
        ForecastOptions opt;
        opt.kernels = prop1_kernels();
        opt.kernels_declared = true;
        opt.seed = seed;
        ScenarioSpec near = fixed_scenario(2, 60, /*anchor=*/40);
        ScenarioSpec far = fixed_scenario(8, 60, /*anchor=*/40);
        mc_near += forecast_att_f(p, spec, mapper, near, opt).report.mc_se;
        mc_far += forecast_att_f(p, spec, mapper, far, opt).report.mc_se;
    }
    REQUIRE(mc_near <= mc_far + 1e-9);
    REQUIRE(mc_near < 1e-12); // fully observed modifiers: draws agree

}
