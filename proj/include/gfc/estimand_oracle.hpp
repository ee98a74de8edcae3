#pragma once

#include <map>
#include <optional>
#include <unordered_set>
#include <vector>

#include "gfc/oracle.hpp"
#include "gfc/policy.hpp"

namespace gfc {

// Ground-truth estimand values. ATT and AEE are evaluated on the realized
// treated/selected set of a concrete panel (the observed-outcome term uses
// the panel's own draws, so estimator-vs-oracle differences isolate the
// imputation error). The future-window estimands are super-population
// expectations under the natural-course law: treatments zero after T, the
// counterfactual window forced per arm.


// Mean over the panel's treated set (valid geometry only) of
// Y_obs - E[Y(0) | R], with E[Y(0) | R] exact under the canonical control
// window. Per-unit contributions are exposed for plot output.
struct RealizedAttOracle {
    OracleResult att;
    OracleResult attributable; // sum instead of mean
    std::vector<double> per_unit; // aligned with `units`
    std::vector<std::pair<int, int>> units;
};

inline RealizedAttOracle oracle_att_realized(const Dgp& d, const Panel& panel,
                                             const WindowSpec& spec, const TreatmentMapper& mapper,
                                             const OracleOptions& opt = {}) {
    const auto [all, treated] = build_unit_sets(panel, spec, mapper);
    (void)all;
    RealizedAttOracle out;
    std::map<int, ConditionalMeans> by_time;
    double sum = 0.0;
    for (const auto& [i, t] : treated.members) {
        if (spec.history_min_time(t) < 1) continue; // geometry does not fit
        auto it = by_time.find(t);
        if (it == by_time.end()) {
            Intervention iv;
            force_window_z(iv, spec, t, TreatmentMapper::canonical_control(spec));
            it = by_time.emplace(t, oracle_conditional_means(d, spec, t, iv, opt.cap)).first;
        }
        const HistoryView h = extract_history(panel, spec, i, t);
        const Key r = h.r_key();
        const auto m = it->second.mean.find(r);
        if (m == it->second.mean.end())
            throw EstimationError("oracle: realized pre-treatment profile has zero probability (" +
                                  key_to_string(r) + ")");
        const double contrib = panel.y_value(i, t) - m->second;
        out.per_unit.push_back(contrib);
        out.units.emplace_back(i, t);
        sum += contrib;
    }
    if (out.units.empty()) throw EstimationError("oracle: no treated unit-times with full geometry");
    out.att.value = sum / static_cast<double>(out.units.size());
    out.att.method = "enumeration";
    out.attributable.value = sum;
    out.attributable.method = "enumeration";
    return out;
}

// E[Y(1) - Y(0)] on the future outcome window under the natural-course law,
// optionally restricted to pre-treatment profiles in `r_filter`.
inline OracleResult oracle_att_future(const Dgp& d, const WindowSpec& spec,
                                      const TreatmentMapper& mapper, int T,
                                      const FutureWindow& future,
                                      const std::optional<std::unordered_set<Key, KeyHash>>& r_filter =
                                          std::nullopt,
                                      bool all_outcome_times = false,
                                      const OracleOptions& opt = {}) {
    future.validate(spec);
    std::vector<int> times;
    const int t0 = future.first_outcome_time(T, spec);
    const int t1 = all_outcome_times ? future.last_outcome_time(T) : t0;
    for (int t = t0; t <= t1; ++t) times.push_back(t);

    double num = 0.0, den = 0.0;
    for (int t : times) {
        Intervention iv1, iv0;
        iv1.force_z_from = iv0.force_z_from = T + 1; // no intervention after the observed window
        force_window_z(iv1, spec, t, mapper.canonical_treated(spec));
        force_window_z(iv0, spec, t, TreatmentMapper::canonical_control(spec));
        const ConditionalMeans m1 = oracle_conditional_means(d, spec, t, iv1, opt.cap);
        const ConditionalMeans m0 = oracle_conditional_means(d, spec, t, iv0, opt.cap);
        for (const auto& [r, p] : m0.prob) {
            if (r_filter && !r_filter->count(r)) continue;
            const auto f1 = m1.mean.find(r);
            if (f1 == m1.mean.end()) continue;
            num += p * (f1->second - m0.mean.at(r));
            den += p;
        }
    }
    if (den <= 0.0) throw EstimationError("oracle: future selection has probability zero");
    OracleResult r;
    r.value = num / den;
    r.method = "enumeration";
    return r;
}

// ---- exposure-side oracles --------------------------------------------------


// Natural law of the exposure window given each pre-treatment profile.
struct WindowLaw {
    // r -> (window vector -> probability), rows normalized
    std::unordered_map<Key, std::unordered_map<Key, double, KeyHash>, KeyHash> law;
    std::unordered_map<Key, double, KeyHash> r_prob;
};

inline WindowLaw oracle_s_window_law(const Dgp& d, const WindowSpec& spec, int t,
                                     const Intervention& iv, double cap = 1e7) {
    std::vector<RetainSpec> retain = retain_r(d, spec, t);
    const TimeRange w = spec.window_range(t);
    for (int u = w.first; u <= w.last; ++u) retain.push_back({var::kS, u});
    const DpResult res = dp_run(d, t, retain, iv, cap);
    const auto ridx = r_indices(res, d, spec, t);
    std::vector<size_t> sidx;
    for (int u = w.first; u <= w.last; ++u) sidx.push_back(res.index_of(var::kS, u));

    WindowLaw out;
    for (const auto& [row, p] : res.joint) {
        const Key r = res.subkey(row, ridx);
        const Key sw = res.subkey(row, sidx);
        out.law[r][sw] += p;
        out.r_prob[r] += p;
    }
    for (auto& [r, m] : out.law)
        for (auto& [sw, p] : m) p /= out.r_prob[r];
    return out;
}

// Exposure-response surface E[Y_t | do(s window), R=r] for every window
// vector, computed by one DP pass per vector.
struct ErfSurface {
    // s window -> ConditionalMeans over r
    std::vector<std::pair<Key, ConditionalMeans>> by_window;

    const ConditionalMeans& at(const Key& sw) const {
        for (const auto& [k, m] : by_window)
            if (k == sw) return m;
        throw std::logic_error("window vector missing from ERF surface");
    }
};

inline ErfSurface oracle_erf_surface(const Dgp& d, const WindowSpec& spec, int t,
                                     const Intervention& base_iv, double cap = 1e7) {
    ErfSurface out;
    for (const Key& sw : enumerate_tuples(d.schema.s.size(), spec.k + 1)) {
        Intervention iv = base_iv;
        force_window_s(iv, spec, t, sw);
        out.by_window.emplace_back(sw, oracle_conditional_means(d, spec, t, iv, cap));
    }
    return out;
}

// Policy-integrated counterfactual mean given r:
//   sum_s  p*(s | r) E[Y | do(s), r]
// Truncation draws its conditional law from `natural`; the dynamic kernel is
// evaluated by substituting it for the exposure equation inside the window.
inline std::optional<double> policy_term(const Dgp& d, const WindowSpec& spec, int t, const Key& r,
                                         const ExposurePolicy& policy, const ErfSurface& erf,
                                         const WindowLaw& natural,
                                         const std::function<double(const Key&)>& dynamic_term) {
    switch (policy.kind) {
        case ExposurePolicy::Kind::PointMass: {
            Key sw(policy.s_star.begin(), policy.s_star.end());
            return erf.at(sw).mean.at(r);
        }
        case ExposurePolicy::Kind::Natural: {
            double v = 0.0;
            for (const auto& [sw, p] : natural.law.at(r)) v += p * erf.at(sw).mean.at(r);
            return v;
        }
        case ExposurePolicy::Kind::TruncateBelow: {
            double mass = 0.0, v = 0.0;
            for (const auto& [sw, p] : natural.law.at(r)) {
                if (!policy.window_below_threshold(sw)) continue;
                mass += p;
                v += p * erf.at(sw).mean.at(r);
            }
            if (mass <= 0.0) return std::nullopt; // policy infeasible in this stratum
            return v / mass;
        }
        case ExposurePolicy::Kind::ExplicitTable: {
            double v = 0.0;
            for (const auto& [sw, p] : policy.table) v += p * erf.at(sw).mean.at(r);
            return v;
        }
        case ExposurePolicy::Kind::DynamicConditional:
            return dynamic_term(r);
    }
    return std::nullopt;
}

struct RealizedAeeOracle {
    OracleResult aee;
    int n_selected = 0;
    int n_infeasible = 0;
};

inline RealizedAeeOracle oracle_aee_realized(const Dgp& d, const Panel& panel,
                                             const WindowSpec& spec,
                                             const ExposedSelection& selection,
                                             const ExposurePolicy& policy,
                                             const OracleOptions& opt = {}) {
    struct TimeCache {
        ErfSurface erf;
        WindowLaw natural;
        std::optional<ConditionalMeans> dynamic;
    };
    std::map<int, TimeCache> cache;
    auto cache_for = [&](int t) -> TimeCache& {
        auto it = cache.find(t);
        if (it != cache.end()) return it->second;
        TimeCache c;
        c.erf = oracle_erf_surface(d, spec, t, {}, opt.cap);
        c.natural = oracle_s_window_law(d, spec, t, {}, opt.cap);
        if (policy.kind == ExposurePolicy::Kind::DynamicConditional) {
            Intervention iv;
            iv.s_kernel = &policy.dynamic;
            iv.s_kernel_from = spec.window_range(t).first;
            iv.s_kernel_to = spec.window_range(t).last;
            c.dynamic = oracle_conditional_means(d, spec, t, iv, opt.cap);
        }
        return cache.emplace(t, std::move(c)).first->second;
    };

    RealizedAeeOracle out;
    double sum = 0.0;
    int n = 0;
    for (int i = 0; i < panel.n_units(); ++i) {
        for (int t = spec.min_query_time(); t <= panel.horizon(); ++t) {
            const HistoryView h = extract_history(panel, spec, i, t);
            if (!selection.selects(h.s_window)) continue;
            TimeCache& c = cache_for(t);
            const Key r = h.r_key();
            auto dyn = [&](const Key& rk) { return c.dynamic->mean.at(rk); };
            const auto term = policy_term(d, spec, t, r, policy, c.erf, c.natural, dyn);
            ++out.n_selected;
            if (!term) {
                ++out.n_infeasible;
                continue;
            }
            sum += panel.y_value(i, t) - *term;
            ++n;
        }
    }
    if (n == 0) throw EstimationError("oracle: exposure selection is empty or fully infeasible");
    out.aee.value = sum / static_cast<double>(n);
    out.aee.method = "enumeration";
    return out;
}

// AEE on the future window: natural-course outcome mean minus the
// policy-integrated mean, averaged over the natural pre-treatment law.
inline OracleResult oracle_aee_future(const Dgp& d, const WindowSpec& spec, int T,
                                      const FutureWindow& future, const ExposurePolicy& policy,
                                      const OracleOptions& opt = {}) {
    future.validate(spec);
    const int t = future.first_outcome_time(T, spec);
    Intervention iv_nat;
    if (d.models_z) iv_nat.force_z_from = T + 1;

    const ConditionalMeans natural_mean = oracle_conditional_means(d, spec, t, iv_nat, opt.cap);
    double term1 = 0.0;
    for (const auto& [r, p] : natural_mean.prob) term1 += p * natural_mean.mean.at(r);

    if (policy.kind == ExposurePolicy::Kind::Natural) {
        OracleResult r;
        r.value = 0.0;
        r.method = "enumeration";
        return r;
    }

    const ErfSurface erf = oracle_erf_surface(d, spec, t, iv_nat, opt.cap);
    const WindowLaw natural = oracle_s_window_law(d, spec, t, iv_nat, opt.cap);
    std::optional<ConditionalMeans> dynamic;
    if (policy.kind == ExposurePolicy::Kind::DynamicConditional) {
        Intervention iv = iv_nat;
        iv.s_kernel = &policy.dynamic;
        iv.s_kernel_from = spec.window_range(t).first;
        iv.s_kernel_to = spec.window_range(t).last;
        dynamic = oracle_conditional_means(d, spec, t, iv, opt.cap);
    }

    double term2 = 0.0, mass = 0.0;
    for (const auto& [r, p] : natural.r_prob) {
        auto dyn = [&](const Key& rk) { return dynamic->mean.at(rk); };
        const auto v = policy_term(d, spec, t, r, policy, erf, natural, dyn);
        if (!v) continue; // infeasible stratum, matches estimator-side drop
        term2 += p * *v;
        mass += p;
    }
    if (mass <= 0.0) throw EstimationError("oracle: policy infeasible in every stratum");
    OracleResult r;
    if (mass < 1.0 - 1e-12) {
        // Some strata are policy-infeasible; the estimator averages over the
        // feasible ones, so restrict both terms to the feasible mass.
        double t1f = 0.0;
        for (const auto& [rk, p] : natural.r_prob) {
            auto dyn = [&](const Key& k2) { return dynamic->mean.at(k2); };
            if (policy_term(d, spec, t, rk, policy, erf, natural, dyn))
                t1f += p * natural_mean.mean.at(rk);
        }
        r.value = (t1f - term2) / mass;
    } else {
        r.value = term1 - term2;
    }
    r.method = "enumeration";
    return r;
}

} // namespace gfc
