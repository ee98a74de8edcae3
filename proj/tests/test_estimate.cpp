#include <catch2/catch_amalgamated.hpp>

#include "gfc/estimand_oracle.hpp"
#include "gfc/estimate.hpp"
#include "gfc/simulate.hpp"
#include "support/fixtures.hpp"

using namespace gfc;

namespace {

WindowSpec spec_bk(int b, int k, int l, int lx, int ly) {
    WindowSpec s;
    s.b = b;
    s.k = k;
    s.l = l;
    s.l_x = lx;
    s.l_y = ly;
    s.validate();
    return s;
}

// Hand-built panel: units share identical histories; unit 0 is treated at
// t-1 (B=1, K=0); controls carry outcomes 2 and 4 at the query time.
Panel handmade_panel() {
    Schema sc;
    sc.s = ValueGrid{{0.0}, {}};
    sc.y = ValueGrid{{0.0, 2.0, 4.0}, {}};
    sc.x.push_back({"x1", ValueGrid{{0.0, 1.0}, {}}});
    Panel p(sc, {"a", "b", "c"}, 4);
    // identical across units; x flips at t=3 so the strata at query times
    // 3 and 4 stay distinct
    for (int i = 0; i < 3; ++i)
        for (int t = 1; t <= 4; ++t) {
            p.set_x(i, t, 0, t >= 3 ? 1 : 0);
            p.set_y(i, t, 0);
        }
    p.set_z(0, 3, 1);     // treated window for t=4 is {z_3}
    p.set_y(0, 4, 1);     // treated outcome 2.0
    p.set_y(1, 4, 1);     // control outcomes 2.0 and 4.0
    p.set_y(2, 4, 2);
    return p;
}

} // namespace

TEST_CASE("adjusted mean is the stratum control average: {2,4} -> 3") {
    const Panel p = handmade_panel();
    const WindowSpec spec = spec_bk(1, 0, 1, 0, 1);
    TreatmentMapper mapper{MapperKind::OneDay};
    const FittedWindow f = fit_window_tables(p, spec, Driver::Treatment, mapper);
    const HistoryView h = extract_history(p, spec, 0, 4);
    REQUIRE(estimate_adjusted_mean(f, h, Conditioning::R, 0, 2) == 3.0);
}

TEST_CASE("empty control stratum drops the unit with a named reason") {
    Panel p = handmade_panel();
    p.set_z(1, 3, 1); // all units treated at t=4's window
    p.set_z(2, 3, 1);
    const WindowSpec spec = spec_bk(1, 0, 1, 0, 1);
    TreatmentMapper mapper{MapperKind::OneDay};
    AttOptions opt;
    opt.method = Method::Adjustment;
    opt.min_cell = 1;
    REQUIRE_THROWS_WITH(estimate_att(p, spec, mapper, opt),
                        Catch::Matchers::ContainsSubstring("no-control-match"));
}

TEST_CASE("K=0: nested sum and simple adjustment are bitwise identical") {
    const Dgp d = test::no_tdc_effect_dgp();
    const Panel p = simulate(d, 60, 40, 31);
    const WindowSpec spec = spec_bk(1, 0, 1, 1, 2);
    TreatmentMapper mapper{MapperKind::OneDay};
    const FittedWindow f = fit_window_tables(p, spec, Driver::Treatment, mapper);
    const auto [all, treated] = build_unit_sets(p, spec, mapper);
    (void)all;
    int compared = 0;
    for (const auto& [i, t] : treated.members) {
        if (t < spec.min_query_time()) continue;
        const HistoryView h = extract_history(p, spec, i, t);
        GFormulaOptions gopt;
        gopt.min_cell = 1;
        double adj;
        try {
            adj = estimate_adjusted_mean(f, h, Conditioning::R, 0, 1);
        } catch (const EstimationError&) {
            continue;
        }
        const GFormulaValue gf = g_formula_mean(f, h.r_key(), TreatmentMapper::canonical_control(spec), gopt);
        REQUIRE(gf.value == adj); // bitwise
        ++compared;
    }
    REQUIRE(compared > 10);
}

TEST_CASE("no-TDC model: adjustment and g-formula agree and match the oracle") {
    const Dgp d = test::no_tdc_effect_dgp();
    const Panel p = simulate(d, 200, 50, 17);
    const WindowSpec spec = spec_bk(1, 2, 2, 2, 3);
    TreatmentMapper mapper{MapperKind::OneDay};
    const WindowStructure st = test::make_structure({{var::kZ, 2}, {0, 1}}, {{0, 1}});

    AttOptions gopt;
    gopt.structure = st;
    gopt.method = Method::GFormula;
    const EstimateReport gf = estimate_att(p, spec, mapper, gopt);

    AttOptions aopt;
    aopt.method = Method::Adjustment;
    aopt.conditioning = Conditioning::RV;
    const EstimateReport adj = estimate_att(p, spec, mapper, aopt);

    const RealizedAttOracle oracle = oracle_att_realized(d, p, spec, mapper);

    REQUIRE(std::abs(gf.value - oracle.att.value) < 3.0 * gf.se_imputation);
    const double comb = std::sqrt(gf.se_imputation * gf.se_imputation +
                                  adj.se_imputation * adj.se_imputation);
    REQUIRE(std::abs(gf.value - adj.value) < 3.0 * comb);
    REQUIRE_FALSE(gf.tdc_suspected);
}

TEST_CASE("time-dependent confounding: naive matching is biased, the nested sum is not") {
    const Dgp d = dgp_from_file("configs/dgp/tdc-on.json");
    const Panel p = simulate(d, 200, 50, 8);
    const WindowSpec spec = spec_bk(1, 2, 2, 2, 3);
    TreatmentMapper mapper{MapperKind::OneDay};

    const RealizedAttOracle oracle = oracle_att_realized(d, p, spec, mapper);

    AttOptions gopt;
    gopt.structure = test::make_structure({{var::kZ, 2}, {0, 1}}, {{var::kZ, 1}});
    gopt.method = Method::GFormula;
    const EstimateReport gf = estimate_att(p, spec, mapper, gopt);
    REQUIRE(std::abs(gf.value - oracle.att.value) < 3.0 * gf.se_imputation);
    REQUIRE(gf.tdc_suspected);

    AttOptions aopt;
    aopt.method = Method::Adjustment;
    aopt.conditioning = Conditioning::RV;
    const EstimateReport adj = estimate_att(p, spec, mapper, aopt);
    // bias demonstration: direction/magnitude recorded, detectability asserted
    INFO("naive bias = " << adj.value - oracle.att.value << " (se " << adj.se << ")");
    REQUIRE(std::abs(adj.value - oracle.att.value) > 3.0 * adj.se);
}

TEST_CASE("consistency sharpens from n=10^3 to n=10^4") {
    const Dgp d = dgp_from_file("configs/dgp/tdc-on.json");
    const WindowSpec spec = spec_bk(1, 2, 2, 2, 3);
    TreatmentMapper mapper{MapperKind::OneDay};
    for (int n_units : {20, 200}) {
        const Panel p = simulate(d, n_units, 50, 40 + n_units);
        AttOptions opt;
        opt.structure = test::make_structure({{var::kZ, 2}, {0, 1}}, {{var::kZ, 1}});
        opt.method = Method::GFormula;
        opt.min_cell = 3;
        const EstimateReport gf = estimate_att(p, spec, mapper, opt);
        const RealizedAttOracle oracle = oracle_att_realized(d, p, spec, mapper);
        REQUIRE(std::abs(gf.value - oracle.att.value) < 3.0 * gf.se_imputation + 1e-9);
    }
}

TEST_CASE("null effect: ATT within 3 SE of zero") {
    const Dgp d = dgp_from_file("configs/dgp/null-effect.json");
    const Panel p = simulate(d, 200, 50, 55);
    const WindowSpec spec = spec_bk(1, 2, 2, 2, 3);
    TreatmentMapper mapper{MapperKind::OneDay};
    AttOptions opt;
    opt.structure = test::make_structure({{0, 1}}, {{0, 1}});
    const EstimateReport gf = estimate_att(p, spec, mapper, opt);
    REQUIRE(std::abs(gf.value) < 3.0 * gf.se);
    REQUIRE_FALSE(gf.tdc_suspected);
}

TEST_CASE("adding a constant to all outcomes shifts means, not the ATT") {
    const Dgp d = test::no_tdc_effect_dgp();
    Panel p = simulate(d, 100, 40, 61);
    const WindowSpec spec = spec_bk(1, 2, 2, 2, 3);
    TreatmentMapper mapper{MapperKind::OneDay};
    AttOptions opt;
    opt.structure = test::make_structure({{var::kZ, 2}, {0, 1}}, {{0, 1}});
    const EstimateReport base = estimate_att(p, spec, mapper, opt);

    // same codes, outcome labels shifted by c
    Schema shifted = p.schema();
    const double c = 7.5;
    for (auto& v : shifted.y.levels) v += c;
    Panel q(shifted, p.units(), p.horizon());
    for (int i = 0; i < p.n_units(); ++i)
        for (int t = 1; t <= p.horizon(); ++t) {
            q.set_z(i, t, p.z(i, t));
            q.set_s(i, t, p.s(i, t));
            q.set_y(i, t, p.y(i, t));
            for (int pp = 0; pp < p.n_covariates(); ++pp) q.set_x(i, t, pp, p.x(i, t, pp));
        }
    const EstimateReport shifted_rep = estimate_att(q, spec, mapper, opt);
    REQUIRE(std::abs(shifted_rep.value - base.value) < 1e-12);
    REQUIRE(std::abs(shifted_rep.per_unit[0].imputed0 - base.per_unit[0].imputed0 - c) < 1e-12);
}

TEST_CASE("permuting unit labels leaves the estimate unchanged") {
    const Dgp d = test::no_tdc_effect_dgp();
    const Panel p = simulate(d, 50, 40, 71);
    const WindowSpec spec = spec_bk(1, 2, 2, 2, 3);
    TreatmentMapper mapper{MapperKind::OneDay};
    AttOptions opt;
    opt.structure = test::make_structure({{var::kZ, 2}, {0, 1}}, {{0, 1}});
    const EstimateReport base = estimate_att(p, spec, mapper, opt);

    // reverse the unit order
    std::vector<std::string> units(p.units().rbegin(), p.units().rend());
    Panel q(p.schema(), units, p.horizon());
    for (int i = 0; i < p.n_units(); ++i) {
        const int src = p.n_units() - 1 - i;
        for (int t = 1; t <= p.horizon(); ++t) {
            q.set_z(i, t, p.z(src, t));
            q.set_s(i, t, p.s(src, t));
            q.set_y(i, t, p.y(src, t));
            for (int pp = 0; pp < p.n_covariates(); ++pp) q.set_x(i, t, pp, p.x(src, t, pp));
        }
    }
    const EstimateReport perm = estimate_att(q, spec, mapper, opt);
    REQUIRE(std::abs(perm.value - base.value) < 1e-12);
    REQUIRE(perm.n_used == base.n_used);
}

TEST_CASE("MC path integration agrees with the exact nested sum") {
    const Dgp d = dgp_from_file("configs/dgp/tdc-on.json");
    const Panel p = simulate(d, 200, 50, 91);
    const WindowSpec spec = spec_bk(1, 2, 2, 2, 3);
    TreatmentMapper mapper{MapperKind::OneDay};
    const WindowStructure st = test::make_structure({{var::kZ, 2}, {0, 1}}, {{var::kZ, 1}});
    const FittedWindow f = fit_window_tables(p, spec, Driver::Treatment, mapper, st);
    const Key r = *f.r_support.begin();

    GFormulaOptions exact_opt;
    const GFormulaValue exact = g_formula_mean(f, r, TreatmentMapper::canonical_control(spec), exact_opt);

    GFormulaOptions mc_opt;
    mc_opt.path_cap = 1; // force sampling
    mc_opt.mc_paths = 20000;
    mc_opt.seed = 3;
    const GFormulaValue approx = g_formula_mean(f, r, TreatmentMapper::canonical_control(spec), mc_opt);
    REQUIRE_FALSE(approx.exact);
    REQUIRE(std::abs(approx.value - exact.value) < 3.0 * std::sqrt(approx.mc_var) + 1e-9);
}
