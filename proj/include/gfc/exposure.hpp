#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gfc/estimate.hpp"
#include "gfc/forecast.hpp"
#include "gfc/policy.hpp"
#include "gfc/tables.hpp"

namespace gfc {

// Exposure-response machinery: the exposure window plays the intervention
// role, potential outcomes are indexed by the whole lagged exposure vector,
// and hypothetical interventions are laws over that vector evaluated as
// exact grid sums.

enum class ErfMode { Matching, GFormula }; // exact [R,V] matching vs nested sum on R

struct ErfCell {
    double value = 0.0;
    double var = 0.0;
    long n = 0;
    bool estimable = false;
};

// Estimated exposure-response vector for one conditioning stratum.
struct ErfEstimate {
    Key stratum;
    ErfMode mode = ErfMode::Matching;
    std::vector<std::pair<Key, ErfCell>> by_window; // every grid window vector

    const ErfCell* at(const Key& sw) const {
        for (const auto& [k, c] : by_window)
            if (k == sw) return &c;
        return nullptr;
    }
};

struct ErfOptions {
    ErfMode mode = ErfMode::Matching;
    int min_cell = 5;
    double path_cap = 1e7;
    long mc_paths = 10000;
    uint64_t seed = 1;
    bool v_includes_window_end = true;
};

// ERF for one conditioning stratum key ([R,V] in matching mode, R in
// g-formula mode).
inline ErfEstimate estimate_erf_for_stratum(const FittedWindow& f, const Key& stratum,
                                            const ErfOptions& opt) {
    if (f.driver != Driver::Exposure)
        throw ConfigError("exposure-response needs tables fitted with the exposure driver");
    ErfEstimate out;
    out.stratum = stratum;
    out.mode = opt.mode;
    for (const Key& sw : enumerate_tuples(f.driver_card, f.spec.k + 1)) {
        ErfCell cell;
        if (opt.mode == ErfMode::Matching) {
            Key k = stratum;
            key_append(k, sw);
            auto it = f.strata_rv.find(k);
            if (it != f.strata_rv.end()) {
                cell.n = it->second.n;
                if (it->second.n >= opt.min_cell) {
                    cell.value = it->second.mean();
                    cell.var = it->second.mean_var();
                    cell.estimable = true;
                }
            }
        } else {
            try {
                GFormulaOptions gopt{opt.min_cell, opt.path_cap, opt.mc_paths, opt.seed};
                const GFormulaValue v = g_formula_mean(f, stratum, sw, gopt);
                cell.value = v.value;
                cell.var = v.var + v.mc_var;
                cell.n = 1;
                cell.estimable = true;
            } catch (const EstimationError&) {
                cell.estimable = false;
            }
        }
        out.by_window.emplace_back(sw, cell);
    }
    return out;
}

// Per-unit form: the ERF vector on the stratum of (i, t).
inline ErfEstimate estimate_erf(const Panel& panel, const WindowSpec& spec, int i, int t,
                                const ErfOptions& opt, const WindowStructure& structure = {},
                                int anchor_time = -1) {
    const TreatmentMapper dummy{MapperKind::AnyDay};
    const FittedWindow f = fit_window_tables(panel, spec, Driver::Exposure, dummy, structure,
                                             anchor_time, opt.v_includes_window_end);
    const HistoryView h = extract_history(panel, spec, i, t);
    const Key stratum = opt.mode == ErfMode::Matching
                            ? h.rv_key(opt.v_includes_window_end && spec.b >= 1)
                            : h.r_key();
    return estimate_erf_for_stratum(f, stratum, opt);
}

// ---- policy laws over the exposure window ------------------------------------

// Law of the exposure window implied by a dynamic one-step policy kernel,
// chained against the fitted within-window factors on stratum r (modifiers
// integrated out). Parents of the kernel must resolve inside the window or
// the pre-treatment profile.
inline std::unordered_map<Key, double, KeyHash> dynamic_window_law(const FittedWindow& f,
                                                                   const Key& r,
                                                                   const Equation& kernel,
                                                                   const GFormulaOptions& opt) {
    const int K = f.spec.k;
    std::vector<int> xp(static_cast<size_t>(K) + 1, 0), yp(static_cast<size_t>(K) + 1, 0);
    Key dw(static_cast<size_t>(K) + 1, 0);
    const int t_query = f.spec.min_query_time();
    const WindowCtx ctx = f.make_ctx(t_query, dw, xp, yp, r);
    const int H = f.spec.window_start(t_query);

    std::unordered_map<Key, double, KeyHash> law;
    std::function<void(int, double)> walk = [&](int m, double w) {
        if (w == 0.0) return;
        if (m > K) {
            law[dw] += w;
            return;
        }
        auto branch_sy = [&](double w2) {
            // driver value at offset m from the policy kernel
            const int u = H + m;
            size_t row_idx = 0;
            for (const auto& pr : kernel.parents) {
                std::optional<int> v;
                if ((f.driver == Driver::Exposure && pr.var == var::kS) ||
                    (f.driver == Driver::Treatment && pr.var == var::kZ)) {
                    const int uu = u - pr.lag;
                    v = uu >= H ? std::optional<int>(dw[static_cast<size_t>(uu - H)]) : std::nullopt;
                } else {
                    v = ctx.resolve(pr.var, u - pr.lag);
                }
                if (!v)
                    throw ConfigError("dynamic policy parent does not resolve inside the window "
                                      "or pre-treatment profile");
                int card = 2;
                if (var::is_covariate(pr.var)) card = f.x_cards[static_cast<size_t>(pr.var)];
                else if (pr.var == var::kS) card = f.driver_card;
                else if (pr.var == var::kY) card = f.y_card;
                row_idx = row_idx * static_cast<size_t>(card) + static_cast<size_t>(*v);
            }
            const auto& row = kernel.table.at(row_idx);
            for (int c = 0; c < static_cast<int>(row.size()); ++c) {
                if (row[static_cast<size_t>(c)] == 0.0) continue;
                dw[static_cast<size_t>(m)] = static_cast<int16_t>(c);
                // outcome factor advances the modifier path
                const Key yk = window_y_factor_key(ctx, m, f.structure);
                auto yit = f.y_factor.find(yk);
                if (yit == f.y_factor.end() || yit->second.total < opt.min_cell)
                    throw EstimationError("unestimable outcome factor under the dynamic policy, cell " +
                                          key_to_string(yk));
                for (int yc = 0; yc < f.y_card; ++yc) {
                    const double py = yit->second.prob(yc);
                    if (py == 0.0) continue;
                    yp[static_cast<size_t>(m)] = yc;
                    walk(m + 1, w2 * row[static_cast<size_t>(c)] * py);
                }
            }
        };
        if (m >= 1) {
            const Key xk = window_x_factor_key(ctx, m, f.structure);
            auto xit = f.x_factor.find(xk);
            if (xit == f.x_factor.end() || xit->second.total < opt.min_cell)
                throw EstimationError("unestimable covariate factor under the dynamic policy, cell " +
                                      key_to_string(xk));
            for (int c = 0; c < f.x_card; ++c) {
                const double p = xit->second.prob(c);
                if (p == 0.0) continue;
                xp[static_cast<size_t>(m)] = c;
                branch_sy(w * p);
            }
        } else {
            branch_sy(w);
        }
    };
    walk(0, 1.0);
    return law;
}

// Policy law over window vectors for one stratum; empty optional = the
// policy is infeasible in this stratum (no truncation mass).
inline std::optional<std::unordered_map<Key, double, KeyHash>> policy_window_weights(
    const FittedWindow& f, const Key& stratum, const ExposurePolicy& policy, ErfMode mode,
    const GFormulaOptions& gopt) {
    std::unordered_map<Key, double, KeyHash> w;
    const auto& law_table = mode == ErfMode::Matching ? f.window_law_rv : f.window_law_r;
    switch (policy.kind) {
        case ExposurePolicy::Kind::PointMass: {
            w[Key(policy.s_star.begin(), policy.s_star.end())] = 1.0;
            return w;
        }
        case ExposurePolicy::Kind::ExplicitTable: {
            for (const auto& [sw, p] : policy.table)
                if (p > 0.0) w[sw] = p;
            return w;
        }
        case ExposurePolicy::Kind::Natural: {
            auto it = law_table.find(stratum);
            if (it == law_table.end()) return std::nullopt;
            for (size_t code = 0; code < it->second.counts.size(); ++code)
                if (it->second.counts[code] > 0.0)
                    w[f.window_from_code(static_cast<long>(code))] =
                        it->second.counts[code] / it->second.total;
            return w;
        }
        case ExposurePolicy::Kind::TruncateBelow: {
            auto it = law_table.find(stratum);
            if (it == law_table.end()) return std::nullopt;
            double mass = 0.0;
            for (size_t code = 0; code < it->second.counts.size(); ++code) {
                if (it->second.counts[code] == 0.0) continue;
                const Key sw = f.window_from_code(static_cast<long>(code));
                if (policy.window_below_threshold(sw)) {
                    w[sw] = it->second.counts[code];
                    mass += it->second.counts[code];
                }
            }
            if (mass == 0.0) return std::nullopt;
            for (auto& [k, v] : w) v /= mass;
            return w;
        }
        case ExposurePolicy::Kind::DynamicConditional: {
            if (mode != ErfMode::GFormula)
                throw ConfigError("dynamic policies need the g-formula exposure mode");
            return dynamic_window_law(f, stratum, policy.dynamic, gopt);
        }
    }
    return std::nullopt;
}

// ---- AEE on the observed window ---------------------------------------------

struct AeeOptions {
    ErfOptions erf;
    ExposedSelection selection;
    WindowStructure structure;
    int anchor_time = -1;
};

namespace detail {

// Policy-weighted counterfactual mean on one stratum. Returns nothing when
// the policy is infeasible there (truncation with no mass); throws when the
// policy puts mass on an unestimable exposure cell. The natural policy in
// matching mode telescopes to the plain stratum outcome mean, which makes
// the status-quo effect an exact arithmetic zero.
inline std::optional<double> policy_mean_for_stratum(
    const FittedWindow& f, const Key& stratum, const ErfOptions& eopt,
    const ExposurePolicy& policy,
    const std::function<const ErfEstimate&(const Key&)>& erf_of, double* var_out) {
    if (policy.kind == ExposurePolicy::Kind::Natural && eopt.mode == ErfMode::Matching) {
        const auto& law = f.window_law_rv;
        auto lit = law.find(stratum);
        if (lit == law.end()) return std::nullopt;
        double num = 0.0, den = 0.0, var = 0.0;
        for (size_t code = 0; code < lit->second.counts.size(); ++code) {
            const double cnt = lit->second.counts[code];
            if (cnt == 0.0) continue;
            Key k = stratum;
            key_append(k, f.window_from_code(static_cast<long>(code)));
            const auto& cell = f.strata_rv.at(k);
            num += cnt * cell.mean();
            var += (cnt / lit->second.total) * (cnt / lit->second.total) * cell.mean_var();
            den += cnt;
        }
        if (var_out) *var_out = var;
        return num / den;
    }

    GFormulaOptions gopt{eopt.min_cell, eopt.path_cap, eopt.mc_paths, eopt.seed};
    const auto weights = policy_window_weights(f, stratum, policy, eopt.mode, gopt);
    if (!weights) return std::nullopt;
    const ErfEstimate& erf = erf_of(stratum);
    double v = 0.0, var = 0.0;
    for (const auto& [sw, w] : *weights) {
        if (w == 0.0) continue;
        const ErfCell* cell = erf.at(sw);
        if (!cell || !cell->estimable)
            throw EstimationError("policy puts mass " + std::to_string(w) +
                                  " on unestimable exposure cell " + key_to_string(sw) +
                                  " in stratum " + key_to_string(stratum));
        v += w * cell->value;
        var += w * w * cell->var;
    }
    if (var_out) *var_out = var;
    return v;
}

} // namespace detail

// Average exposure effect on the selected observed unit-times:
//   mean over U1 of ( Y_obs - sum_s p*(s | stratum) ERF(s | stratum) ).
inline EstimateReport estimate_aee(const Panel& panel, const WindowSpec& spec,
                                   const ExposurePolicy& policy, const AeeOptions& opt) {
    const TreatmentMapper dummy{MapperKind::AnyDay};
    const FittedWindow f =
        fit_window_tables(panel, spec, Driver::Exposure, dummy, opt.structure, opt.anchor_time,
                          opt.erf.v_includes_window_end);
    const int T = opt.anchor_time > 0 ? std::min(opt.anchor_time, panel.horizon()) : panel.horizon();

    std::unordered_map<Key, ErfEstimate, KeyHash> erf_cache;
    auto erf_of = [&](const Key& stratum) -> const ErfEstimate& {
        auto it = erf_cache.find(stratum);
        if (it == erf_cache.end())
            it = erf_cache.emplace(stratum, estimate_erf_for_stratum(f, stratum, opt.erf)).first;
        return it->second;
    };

    EstimateReport rep;
    rep.estimand = "AEE";
    rep.mode_flags["policy"] = policy.kind_name();
    rep.mode_flags["erf_mode"] = opt.erf.mode == ErfMode::Matching ? "matching" : "gformula";
    rep.mode_flags["min_cell"] = opt.erf.min_cell;

    struct Group {
        double var = 0.0;
        long n = 0;
    };
    std::unordered_map<Key, Group, KeyHash> groups;
    std::vector<double> contrasts;

    for (int i = 0; i < panel.n_units(); ++i) {
        for (int t = spec.min_query_time(); t <= T; ++t) {
            const HistoryView h = extract_history(panel, spec, i, t);
            if (!opt.selection.selects(h.s_window)) continue;
            ++rep.n_treated;
            const Key stratum = opt.erf.mode == ErfMode::Matching
                                    ? h.rv_key(opt.erf.v_includes_window_end && spec.b >= 1)
                                    : h.r_key();
            double var = 0.0;
            const auto term =
                detail::policy_mean_for_stratum(f, stratum, opt.erf, policy, erf_of, &var);
            if (!term) {
                rep.add_drop(i, t, "policy-infeasible");
                continue;
            }
            const double y = panel.y_value(i, t);
            contrasts.push_back(y - *term);
            rep.per_unit.push_back({i, t, stratum, y, *term, y - *term});
            auto& g = groups[stratum];
            g.var = var;
            ++g.n;
        }
    }
    rep.n_used = static_cast<long>(contrasts.size());
    if (rep.n_used == 0)
        throw EstimationError("exposure selection is empty or fully infeasible; dominant reason: " +
                              rep.dominant_drop_reason());
    const double N = static_cast<double>(rep.n_used);
    rep.value = rng::pairwise_sum(contrasts) / N;
    rep.attributable = rng::pairwise_sum(contrasts);
    double imp_var = 0.0;
    for (const auto& [k, g] : groups) {
        const double w = static_cast<double>(g.n) / N;
        imp_var += w * w * g.var;
    }
    double s2 = 0.0;
    for (double c : contrasts) s2 += (c - rep.value) * (c - rep.value);
    s2 = contrasts.size() > 1 ? s2 / (N - 1.0) : 0.0;
    rep.se_imputation = std::sqrt(imp_var);
    rep.se = std::sqrt(imp_var + s2 / N);
    return rep;
}

// ---- future-window exposure forecasts ----------------------------------------

namespace detail {

// Overlay of an in-progress window path on top of an imputed series, so the
// one-step kernels can read lagged values during the chain.
struct WindowOverlay {
    const ImputedSeries* base;
    int from; // first overlaid time
    std::vector<std::vector<int>> xv; // [t - from][covariate]
    std::vector<int> sv, yv;
    int upto = 0; // last overlaid time with values filled

    int n_covariates() const { return base->n_covariates(); }
    bool time_observable(int t) const { return t >= 1 && t <= std::max(base->horizon, upto); }
    int z(int i, int t) const { return base->z(i, t); } // exposure scenarios leave z alone
    int x(int i, int t, int p) const {
        if (t >= from && t <= upto) return xv[static_cast<size_t>(t - from)][static_cast<size_t>(p)];
        return base->x(i, t, p);
    }
    int y(int i, int t) const {
        if (t >= from && t <= upto) return yv[static_cast<size_t>(t - from)];
        return base->y(i, t);
    }
    int s(int i, int t) const {
        if (t >= from && t <= upto) return sv[static_cast<size_t>(t - from)];
        return base->s(i, t);
    }
};

inline size_t equation_row_index(const Equation& eq, const WindowOverlay& src, int unit, int t,
                                 const Schema& schema) {
    size_t idx = 0;
    for (const auto& pr : eq.parents) {
        int card, v;
        const int u = t - pr.lag;
        if (pr.var == var::kZ) {
            card = 2;
            v = src.z(unit, u);
        } else if (pr.var == var::kS) {
            card = schema.s.size();
            v = src.s(unit, u);
        } else if (pr.var == var::kY) {
            card = schema.y.size();
            v = src.y(unit, u);
        } else {
            card = schema.x[static_cast<size_t>(pr.var)].grid.size();
            v = src.x(unit, u, pr.var);
        }
        idx = idx * static_cast<size_t>(card) + static_cast<size_t>(v);
    }
    return idx;
}

} // namespace detail

// Law of the exposure window at future time t, chained forward from the
// series' pre-window history through the fitted one-step kernels; covariates
// and outcomes inside the window are integrated out. With use_observed the
// chain keeps panel values wherever the window overlaps observed times (the
// natural course reuses data); policy chains replace the exposure step by
// `s_override` and never collapse onto observations.
inline std::unordered_map<Key, double, KeyHash> forecast_window_law(
    const ImputedSeries& series, const WindowSpec& spec, const TransitionKernels& kernels,
    const Schema& schema, int t, int min_cell, bool use_observed,
    const Equation* s_override = nullptr) {
    const int H = spec.window_start(t);
    const int last = t - spec.b;
    const int P = series.n_covariates();

    detail::WindowOverlay ov;
    ov.base = &series;
    ov.from = H;
    ov.xv.assign(static_cast<size_t>(last - H + 1), std::vector<int>(static_cast<size_t>(P), 0));
    ov.sv.assign(static_cast<size_t>(last - H + 1), 0);
    ov.yv.assign(static_cast<size_t>(last - H + 1), 0);
    ov.upto = H - 1;

    std::unordered_map<Key, double, KeyHash> law;
    Key window(static_cast<size_t>(spec.k + 1), 0);

    std::function<void(int, double)> step = [&](int u, double w) {
        if (w == 0.0) return;
        if (u > last) {
            law[window] += w;
            return;
        }
        const size_t off = static_cast<size_t>(u - H);
        const bool observed_here = use_observed && series.observed(u) && !s_override;
        ov.upto = u;

        auto do_y = [&](double w2) {
            if (observed_here) {
                ov.yv[off] = series.y(series.unit, u);
                step(u + 1, w2);
                return;
            }
            const Key k = kernels.y.key_at(ov, series.unit, u);
            auto it = kernels.y.rows.find(k);
            if (it == kernels.y.rows.end() || it->second.total < min_cell)
                throw EstimationError("unestimable outcome transition cell " + key_to_string(k) +
                                      " in the window chain at t=" + std::to_string(u));
            for (int c = 0; c < schema.y.size(); ++c) {
                const double p = it->second.prob(c);
                if (p == 0.0) continue;
                ov.yv[off] = c;
                step(u + 1, w2 * p);
            }
        };
        auto do_s = [&](double w2) {
            if (observed_here) {
                const int v = series.s(series.unit, u);
                ov.sv[off] = v;
                window[off] = static_cast<int16_t>(v);
                do_y(w2);
                return;
            }
            if (s_override) {
                const size_t ridx = detail::equation_row_index(*s_override, ov, series.unit, u, schema);
                const auto& row = s_override->table.at(ridx);
                for (int c = 0; c < static_cast<int>(row.size()); ++c) {
                    const double p = row[static_cast<size_t>(c)];
                    if (p == 0.0) continue;
                    ov.sv[off] = c;
                    window[off] = static_cast<int16_t>(c);
                    do_y(w2 * p);
                }
                return;
            }
            const Key k = kernels.s.key_at(ov, series.unit, u);
            auto it = kernels.s.rows.find(k);
            if (it == kernels.s.rows.end() || it->second.total < min_cell)
                throw EstimationError("unestimable exposure transition cell " + key_to_string(k) +
                                      " in the window chain at t=" + std::to_string(u));
            for (int c = 0; c < schema.s.size(); ++c) {
                const double p = it->second.prob(c);
                if (p == 0.0) continue;
                ov.sv[off] = c;
                window[off] = static_cast<int16_t>(c);
                do_y(w2 * p);
            }
        };
        // covariates first (within-step causal order)
        std::function<void(int, double)> do_x = [&](int p, double w2) {
            if (p == P) {
                do_s(w2);
                return;
            }
            if (observed_here) {
                ov.xv[off][static_cast<size_t>(p)] = series.x(series.unit, u, p);
                do_x(p + 1, w2);
                return;
            }
            const auto& kx = kernels.x[static_cast<size_t>(p)];
            const Key k = kx.key_at(ov, series.unit, u);
            auto it = kx.rows.find(k);
            if (it == kx.rows.end() || it->second.total < min_cell)
                throw EstimationError("unestimable covariate transition cell " + key_to_string(k) +
                                      " in the window chain at t=" + std::to_string(u));
            for (int c = 0; c < schema.x[static_cast<size_t>(p)].grid.size(); ++c) {
                const double pr = it->second.prob(c);
                if (pr == 0.0) continue;
                ov.xv[off][static_cast<size_t>(p)] = c;
                do_x(p + 1, w2 * pr);
            }
        };
        do_x(0, w);
    };
    step(H, 1.0);
    return law;
}

struct ExposureForecastOptions {
    ErfOptions erf;
    TransitionKernels kernels;
    bool kernels_declared = false;
    WindowStructure structure;
    int threads = 1;
    uint64_t seed = 1;
};

// Per-draw, per-unit forecast exposure laws at the scenario's first outcome
// time (the estimated p(s-window | A*=0, histories)).
struct ExposureLawForecast {
    int time = 0;
    // [draw][unit] -> law over window vectors
    std::vector<std::vector<std::unordered_map<Key, double, KeyHash>>> laws;
};

inline ExposureLawForecast forecast_exposure_law(const Panel& panel, const WindowSpec& spec,
                                                 const ScenarioSpec& sc,
                                                 const ExposureForecastOptions& opt) {
    const int anchor =
        sc.anchor_time > 0 ? std::min(sc.anchor_time, panel.horizon()) : panel.horizon();
    TransitionKernels kernels =
        opt.kernels_declared ? opt.kernels : default_kernel_specs(panel, spec, false);
    fit_kernels(kernels, panel, anchor);

    ExposureLawForecast out;
    out.time = sc.future.first_outcome_time(anchor, spec);
    const int horizon = modifier_horizon(sc, spec, anchor);
    out.laws.assign(static_cast<size_t>(sc.n_draws), {});
    for (int d = 0; d < sc.n_draws; ++d) {
        for (int i = 0; i < panel.n_units(); ++i) {
            const ImputedSeries series = impute_series(panel, kernels, horizon, d, opt.seed, i,
                                                       opt.erf.min_cell, sc.gap_schedule, true);
            out.laws[static_cast<size_t>(d)].push_back(forecast_window_law(
                series, spec, kernels, panel.schema(), out.time, opt.erf.min_cell, true));
        }
    }
    return out;
}

// Future-window exposure effect under a hypothetical law: the natural-course
// term minus the policy term, both integrated against the observed
// exposure-arm means on the imputed pre-treatment profiles.
inline ForecastReport forecast_aee_f(const Panel& panel, const WindowSpec& spec,
                                     const ExposurePolicy& policy, const ScenarioSpec& sc,
                                     const ExposureForecastOptions& opt) {
    sc_validate(sc, spec);
    const int anchor =
        sc.anchor_time > 0 ? std::min(sc.anchor_time, panel.horizon()) : panel.horizon();
    const TreatmentMapper dummy{MapperKind::AnyDay};
    const FittedWindow f = fit_window_tables(panel, spec, Driver::Exposure, dummy, opt.structure,
                                             anchor, opt.erf.v_includes_window_end);
    TransitionKernels kernels =
        opt.kernels_declared ? opt.kernels : default_kernel_specs(panel, spec, false);
    fit_kernels(kernels, panel, anchor);

    const int horizon = modifier_horizon(sc, spec, anchor);
    std::vector<std::vector<ImputedSeries>> draws(static_cast<size_t>(sc.n_draws));
    {
        std::vector<std::exception_ptr> errors(static_cast<size_t>(sc.n_draws));
        parallel_for(static_cast<size_t>(sc.n_draws), opt.threads, [&](size_t d) {
            try {
                for (int i = 0; i < panel.n_units(); ++i)
                    draws[d].push_back(impute_series(panel, kernels, horizon, static_cast<int>(d),
                                                     opt.seed, i, opt.erf.min_cell, sc.gap_schedule,
                                                     true));
            } catch (...) {
                errors[d] = std::current_exception();
            }
        });
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }
    auto selected = select_future_units(panel, spec, sc, draws, {}, anchor);

    // explicitly requested profiles are part of the scenario itself and are
    // support-checked directly; otherwise check every imputed profile
    std::vector<Key> profiles;
    if (sc.rule == ScenarioSpec::Rule::ExplicitR) {
        profiles = sc.r_values;
    } else {
        for (const auto& per_draw : selected)
            for (const auto& su : per_draw) profiles.push_back(su.r);
    }
    const OverlapReport overlap = check_overlap(profiles, f.r_support);
    if (overlap.violation_fraction > sc.overlap_threshold && !sc.force)
        throw OverlapRefusal("future profiles outside the observed support (fraction " +
                                 std::to_string(overlap.violation_fraction) + ")",
                             overlap.violation_fraction);

    ForecastReport out;
    out.overlap = overlap;
    EstimateReport& rep = out.report;
    rep.estimand = "AEE_F";
    rep.mode_flags["policy"] = policy.kind_name();
    rep.mode_flags["n_draws"] = sc.n_draws;
    rep.mode_flags["anchor_time"] = anchor;
    rep.mode_flags["min_cell"] = opt.erf.min_cell;

    // exposure-arm mean lookup: E[Y | A=1, s window, R]
    auto arm_cell = [&](const Key& r, const Key& sw) -> const MeanCell* {
        Key k = r;
        key_append(k, sw);
        auto it = f.strata_r.find(k);
        if (it == f.strata_r.end() || it->second.n < opt.erf.min_cell) return nullptr;
        return &it->second;
    };

    std::vector<double> draw_means;
    double within_var_sum = 0.0;
    long empty_draws = 0;
    json trace = json::array();
    GFormulaOptions gopt{opt.erf.min_cell, opt.erf.path_cap, opt.erf.mc_paths, opt.erf.seed};

    for (size_t d = 0; d < selected.size(); ++d) {
        double sum = 0.0;
        long n = 0, dropped = 0;
        // net weight per (stratum, window) for grouped matching variance
        std::unordered_map<Key, double, KeyHash> net_weight;
        for (const auto& su : selected[d]) {
            ++rep.n_treated;
            const ImputedSeries& series = draws[d][static_cast<size_t>(su.unit)];
            try {
                if (policy.kind == ExposurePolicy::Kind::Natural) {
                    // status quo: the two terms cancel identically
                    ++n;
                    continue;
                }
                const auto natural = forecast_window_law(series, spec, kernels, panel.schema(),
                                                         su.time, opt.erf.min_cell, true);
                std::unordered_map<Key, double, KeyHash> hypothetical;
                if (policy.kind == ExposurePolicy::Kind::PointMass) {
                    hypothetical[Key(policy.s_star.begin(), policy.s_star.end())] = 1.0;
                } else if (policy.kind == ExposurePolicy::Kind::ExplicitTable) {
                    for (const auto& [sw, p] : policy.table)
                        if (p > 0.0) hypothetical[sw] = p;
                } else if (policy.kind == ExposurePolicy::Kind::TruncateBelow) {
                    double mass = 0.0;
                    for (const auto& [sw, p] : natural)
                        if (policy.window_below_threshold(sw)) {
                            hypothetical[sw] = p;
                            mass += p;
                        }
                    if (mass == 0.0) {
                        rep.add_drop(su.unit, su.time, "policy-infeasible");
                        ++dropped;
                        continue;
                    }
                    for (auto& [sw, p] : hypothetical) p /= mass;
                } else { // dynamic-conditional
                    hypothetical = forecast_window_law(series, spec, kernels, panel.schema(),
                                                       su.time, opt.erf.min_cell, false,
                                                       &policy.dynamic);
                }
                // contrast = sum_s (natural - hypothetical)(s) E[Y | s, r]
                std::unordered_map<Key, double, KeyHash> diff = natural;
                for (const auto& [sw, p] : hypothetical) diff[sw] -= p;
                double contrib = 0.0;
                for (const auto& [sw, wgt] : diff) {
                    if (wgt == 0.0) continue;
                    const MeanCell* cell = arm_cell(su.r, sw);
                    if (!cell)
                        throw OverlapRefusal(
                            "policy/natural law puts mass on exposure window " + key_to_string(sw) +
                                " with no estimable match in stratum " + key_to_string(su.r),
                            1.0);
                    contrib += wgt * cell->mean();
                    Key nk = su.r;
                    key_append(nk, sw);
                    net_weight[nk] += wgt;
                }
                sum += contrib;
                ++n;
            } catch (const EstimationError& e) {
                rep.add_drop(su.unit, su.time, e.what());
                ++dropped;
            }
        }
        if (n == 0) {
            ++empty_draws;
            trace.push_back({{"draw", d}, {"n", 0}, {"dropped", dropped}});
            continue;
        }
        double var_d = 0.0;
        for (const auto& [nk, wsum] : net_weight) {
            const Key r(nk.begin(), nk.end() - (spec.k + 1));
            const Key sw(nk.end() - (spec.k + 1), nk.end());
            const MeanCell* cell = arm_cell(r, sw);
            const double w = wsum / static_cast<double>(n);
            var_d += w * w * cell->mean_var();
        }
        const double est = sum / static_cast<double>(n);
        draw_means.push_back(est);
        within_var_sum += var_d;
        trace.push_back({{"draw", d}, {"n", n}, {"dropped", dropped}, {"estimate", est}});
        rep.n_used += n;
    }
    rep.extra["per_draw"] = trace;
    rep.extra["overlap_violation_fraction"] = overlap.violation_fraction;
    rep.extra["empty_draws"] = empty_draws;
    (void)gopt;

    if (draw_means.empty())
        throw EstimationError("exposure forecast: every draw was empty or dropped; dominant reason: " +
                              rep.dominant_drop_reason());
    const double nd = static_cast<double>(draw_means.size());
    rep.value = rng::pairwise_sum(draw_means) / nd;
    double across = 0.0;
    for (double v : draw_means) across += (v - rep.value) * (v - rep.value);
    across = draw_means.size() > 1 ? across / (nd - 1.0) / nd : 0.0;
    const double within = within_var_sum / nd;
    rep.se_imputation = std::sqrt(within);
    rep.mc_se = std::sqrt(across);
    rep.se = std::sqrt(across + within);

    out.selected = std::move(selected);
    out.draws = std::move(draws);
    return out;
}

} // namespace gfc
