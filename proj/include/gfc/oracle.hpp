#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfc/dgp.hpp"
#include "gfc/key.hpp"
#include "gfc/mapper.hpp"
#include "gfc/panel.hpp"
#include "gfc/rng.hpp"
#include "gfc/simulate.hpp"
#include "gfc/window.hpp"

namespace gfc {

// Exact distribution computations on a Dgp. The forward pass marches the
// joint law of the lag-state (every lag any equation reads, plus unit-static
// latents) through time; "enumeration" results are exact sums over all value
// paths, organized as dynamic programming so the work is states x branches
// per step instead of paths. The configured cap bounds total work units and
// triggers the Monte Carlo fallback when exceeded.

struct OracleResult {
    double value = 0.0;
    double mc_se = 0.0; // 0 for enumeration
    std::string method; // "enumeration" | "monte-carlo"
    long replications = 0;
    uint64_t seed = 0;
};

struct RetainSpec {
    int var = 0;
    int time = 0;
    bool operator==(const RetainSpec& o) const { return var == o.var && time == o.time; }
};

using Joint = std::unordered_map<Key, double, KeyHash>;

struct CapExceeded : std::runtime_error {
    CapExceeded(double work, double cap)
        : std::runtime_error("enumeration work " + std::to_string(work) +
                             " exceeds cap " + std::to_string(cap)) {}
};

// Joint law over retained (var, time) values; key order is chronological by
// (time, within-step causal order).
struct DpResult {
    std::vector<RetainSpec> order;
    Joint joint;

    size_t index_of(int v, int t) const {
        for (size_t k = 0; k < order.size(); ++k)
            if (order[k].var == v && order[k].time == t) return k;
        throw std::logic_error("retained value not found");
    }

    Key subkey(const Key& row, const std::vector<size_t>& idx) const {
        Key out;
        out.reserve(idx.size());
        for (size_t k : idx) out.push_back(row[k]);
        return out;
    }
};

namespace dp {

struct Layout {
    // lag slots: (var, lag>=1), fixed order
    std::vector<std::pair<int, int>> slots;
    std::vector<int> latent_slots; // latent index per slot

    size_t slot_index(int v, int lag) const {
        for (size_t k = 0; k < slots.size(); ++k)
            if (slots[k].first == v && slots[k].second == lag) return k;
        throw std::logic_error("missing lag slot");
    }
};

inline Layout build_layout(const Dgp& d, const Intervention& iv) {
    Layout lay;
    auto depth_of = [&](int v) {
        int m = d.max_lag_as_parent(v);
        if (iv.s_kernel)
            for (const auto& pr : iv.s_kernel->parents)
                if (pr.var == v) m = std::max(m, pr.lag);
        return m;
    };
    std::vector<int> vars;
    for (int p = 0; p < d.n_covariates(); ++p) vars.push_back(p);
    vars.push_back(var::kZ);
    vars.push_back(var::kS);
    vars.push_back(var::kY);
    for (int v : vars) {
        const int m = depth_of(v);
        for (int lag = 1; lag <= m; ++lag) lay.slots.emplace_back(v, lag);
    }
    for (size_t j = 0; j < d.latents.size(); ++j)
        if (d.latents[j].kind == LatentSpec::Kind::UnitStatic)
            lay.latent_slots.push_back(static_cast<int>(j));
    return lay;
}

} // namespace dp

// Exact forward pass. Retained values accumulate at the front of the state
// key in chronological order; lag and latent slots are projected away at the
// end.
inline DpResult dp_run(const Dgp& d, int t_end, std::vector<RetainSpec> retain,
                       const Intervention& iv, double work_cap = 1e7) {
    for (const auto& r : retain)
        if (r.time < 1 || r.time > t_end)
            throw std::logic_error("retain time outside 1..t_end");

    std::stable_sort(retain.begin(), retain.end(), [&](const RetainSpec& a, const RetainSpec& b) {
        if (a.time != b.time) return a.time < b.time;
        return d.order_rank(a.var) < d.order_rank(b.var);
    });

    const dp::Layout lay = dp::build_layout(d, iv);
    const size_t n_lag = lay.slots.size();
    const size_t n_lat = lay.latent_slots.size();

    // state key layout: [retained... | latents | lag slots]
    Joint cur;
    {
        Key base(n_lat + n_lag, 0);
        for (size_t k = 0; k < n_lag; ++k)
            base[n_lat + k] = static_cast<int16_t>(d.initial_value(lay.slots[k].first));
        // enumerate latent value combos
        std::function<void(size_t, Key, double)> expand = [&](size_t j, Key key, double p) {
            if (j == n_lat) {
                cur[key] += p;
                return;
            }
            const auto& l = d.latents[static_cast<size_t>(lay.latent_slots[j])];
            for (int v = 0; v < static_cast<int>(l.probs.size()); ++v) {
                if (l.probs[static_cast<size_t>(v)] == 0.0) continue;
                Key k2 = key;
                k2[j] = static_cast<int16_t>(v);
                expand(j + 1, std::move(k2), p * l.probs[static_cast<size_t>(v)]);
            }
        };
        expand(0, base, 1.0);
    }

    std::vector<int> step_vars;
    for (int p = 0; p < d.n_covariates(); ++p) step_vars.push_back(p);
    step_vars.push_back(var::kZ);
    step_vars.push_back(var::kS);
    step_vars.push_back(var::kY);

    double work = 0.0;
    size_t retained_so_far = 0;

    for (int t = 1; t <= t_end; ++t) {
        // retained items realized at this step, in causal order
        std::vector<RetainSpec> here;
        for (const auto& r : retain)
            if (r.time == t) here.push_back(r);

        Joint next;
        next.reserve(cur.size() * 2);

        std::vector<int> current(step_vars.size(), 0);
        auto current_of = [&](int v) -> int {
            for (size_t k = 0; k < step_vars.size(); ++k)
                if (step_vars[k] == v) return current[k];
            throw std::logic_error("unknown current var");
        };

        for (const auto& [state, prob] : cur) {
            if (prob == 0.0) continue;
            const size_t n_ret = retained_so_far;

            auto value_at = [&](int v, int tt) -> int {
                if (var::is_latent(v)) {
                    const auto& l = d.latents[static_cast<size_t>(v - var::kLatentBase)];
                    if (l.kind == LatentSpec::Kind::Drift) return tt >= l.tau ? l.high : l.low;
                    for (size_t j = 0; j < n_lat; ++j)
                        if (lay.latent_slots[j] == v - var::kLatentBase)
                            return state[n_ret + j];
                    throw std::logic_error("latent slot missing");
                }
                const int lag = t - tt;
                if (lag == 0) return current_of(v);
                if (tt < 1) return d.initial_value(v);
                return state[n_ret + n_lat + lay.slot_index(v, lag)];
            };

            auto row_of = [&](const Equation& eq) -> const std::vector<double>& {
                static const std::vector<double> unit_row{1.0};
                if (eq.parents.empty()) return eq.table.empty() ? unit_row : eq.table[0];
                size_t idx = 0;
                for (const auto& pr : eq.parents)
                    idx = idx * static_cast<size_t>(d.cardinality(pr.var)) +
                          static_cast<size_t>(value_at(pr.var, t - pr.lag));
                return eq.table[idx];
            };

            // branch over the current step's variables in causal order
            std::function<void(size_t, double)> branch = [&](size_t k, double p) {
                if (p == 0.0) return;
                if (k == step_vars.size()) {
                    Key out;
                    out.reserve(n_ret + here.size() + n_lat + n_lag);
                    for (size_t j = 0; j < n_ret; ++j) out.push_back(state[j]);
                    for (const auto& r : here) out.push_back(static_cast<int16_t>(current_of(r.var)));
                    for (size_t j = 0; j < n_lat; ++j) out.push_back(state[n_ret + j]);
                    for (size_t j = 0; j < n_lag; ++j) {
                        const auto [v, lag] = lay.slots[j];
                        out.push_back(lag == 1 ? static_cast<int16_t>(current_of(v))
                                               : static_cast<int16_t>(value_at(v, t - lag + 1)));
                    }
                    next[std::move(out)] += p;
                    return;
                }
                const int v = step_vars[k];
                work += 1.0;
                if (work > work_cap) throw CapExceeded(work, work_cap);

                auto take = [&](int code, double q) {
                    current[k] = code;
                    branch(k + 1, p * q);
                };

                if (v == var::kZ) {
                    if (auto f = iv.forced_z(t)) {
                        take(*f, 1.0);
                        return;
                    }
                    if (!d.models_z) {
                        take(0, 1.0);
                        return;
                    }
                    const auto& row = row_of(d.z_eq);
                    for (int c = 0; c < 2; ++c)
                        if (row[static_cast<size_t>(c)] > 0.0) take(c, row[static_cast<size_t>(c)]);
                    return;
                }
                if (v == var::kS) {
                    if (auto f = iv.forced_s(t)) {
                        take(*f, 1.0);
                        return;
                    }
                    if (!d.models_s) {
                        take(0, 1.0);
                        return;
                    }
                    const auto& row = row_of(*iv.s_equation_at(t, d.s_eq));
                    for (int c = 0; c < static_cast<int>(row.size()); ++c)
                        if (row[static_cast<size_t>(c)] > 0.0) take(c, row[static_cast<size_t>(c)]);
                    return;
                }
                const auto& row = row_of(d.equation_for(v));
                for (int c = 0; c < static_cast<int>(row.size()); ++c)
                    if (row[static_cast<size_t>(c)] > 0.0) take(c, row[static_cast<size_t>(c)]);
            };
            branch(0, prob);
        }

        retained_so_far += here.size();
        cur = std::move(next);
    }

    // project away latent + lag slots
    DpResult res;
    res.order = std::move(retain);
    std::stable_sort(res.order.begin(), res.order.end(), [&](const RetainSpec& a, const RetainSpec& b) {
        if (a.time != b.time) return a.time < b.time;
        return d.order_rank(a.var) < d.order_rank(b.var);
    });
    for (const auto& [state, prob] : cur) {
        Key k(state.begin(), state.begin() + static_cast<long>(retained_so_far));
        res.joint[std::move(k)] += prob;
    }
    return res;
}

// ---- common retained geometries -------------------------------------------

inline std::vector<RetainSpec> retain_r(const Dgp& d, const WindowSpec& spec, int t) {
    std::vector<RetainSpec> out;
    const TimeRange rx = spec.r_x_range(t);
    for (int u = rx.first; u <= rx.last; ++u)
        for (int p = 0; p < d.n_covariates(); ++p) out.push_back({p, u});
    const TimeRange ry = spec.r_y_range(t);
    for (int u = ry.first; u <= ry.last; ++u) out.push_back({var::kY, u});
    return out;
}

// Indices of the R components inside a DpResult, ordered like
// HistoryView::r_key() (covariate block time-major, then outcome block).
inline std::vector<size_t> r_indices(const DpResult& res, const Dgp& d, const WindowSpec& spec,
                                     int t) {
    std::vector<size_t> idx;
    const TimeRange rx = spec.r_x_range(t);
    for (int u = rx.first; u <= rx.last; ++u)
        for (int p = 0; p < d.n_covariates(); ++p) idx.push_back(res.index_of(p, u));
    const TimeRange ry = spec.r_y_range(t);
    for (int u = ry.first; u <= ry.last; ++u) idx.push_back(res.index_of(var::kY, u));
    return idx;
}

// Window z's forced to `pattern` (oldest first) at times [t-B-K, t-B].
inline void force_window_z(Intervention& iv, const WindowSpec& spec, int t, const Key& pattern) {
    const TimeRange w = spec.window_range(t);
    for (int u = w.first; u <= w.last; ++u)
        iv.force_z[u] = pattern[static_cast<size_t>(u - w.first)];
}

inline void force_window_s(Intervention& iv, const WindowSpec& spec, int t, const Key& pattern) {
    const TimeRange w = spec.window_range(t);
    for (int u = w.first; u <= w.last; ++u)
        iv.force_s[u] = pattern[static_cast<size_t>(u - w.first)];
}

// ---- Monte Carlo fallback ---------------------------------------------------

struct McOptions {
    long replications = 100000;
    uint64_t seed = 1;
};

struct McCondition {
    int var;
    int time;
    int code;
};

// Rejection-sampled conditional mean of the outcome value at time t.
inline OracleResult mc_mean_y(const Dgp& d, int t, const Intervention& iv,
                              const std::vector<McCondition>& conditions, const McOptions& mc) {
    std::vector<double> vals;
    vals.reserve(static_cast<size_t>(mc.replications));
    for (long rep = 0; rep < mc.replications; ++rep) {
        const Trajectory tr = simulate_unit(d, t, mc.seed, static_cast<uint64_t>(rep) + 1, 0, iv);
        bool ok = true;
        for (const auto& c : conditions)
            if (tr.value(c.var, c.time, d) != c.code) {
                ok = false;
                break;
            }
        if (!ok) continue;
        vals.push_back(d.schema.y.value(tr.y[static_cast<size_t>(t - 1)]));
    }
    if (vals.size() < 30)
        throw EstimationError("monte-carlo oracle: conditioning accepted only " +
                              std::to_string(vals.size()) + " of " + std::to_string(mc.replications) +
                              " replications");
    const double n = static_cast<double>(vals.size());
    const double mean = rng::pairwise_sum(vals) / n;
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    OracleResult r;
    r.value = mean;
    r.mc_se = std::sqrt(ss / (n - 1.0) / n);
    r.method = "monte-carlo";
    r.replications = static_cast<long>(vals.size());
    r.seed = mc.seed;
    return r;
}

// ---- potential-outcome / exposure-response oracles --------------------------

struct OracleOptions {
    double cap = 1e7;
    bool allow_mc = true;
    McOptions mc;
};

// E[Y_t] under `iv`, optionally conditional on an R-profile (values ordered
// like HistoryView::r_key()).
inline OracleResult oracle_mean_y(const Dgp& d, const WindowSpec& spec, int t, Intervention iv,
                                  const std::optional<Key>& r_profile, const OracleOptions& opt) {
    try {
        std::vector<RetainSpec> retain;
        if (r_profile) retain = retain_r(d, spec, t);
        retain.push_back({var::kY, t});
        const DpResult res = dp_run(d, t, retain, iv, opt.cap);
        const size_t y_idx = res.index_of(var::kY, t);
        std::vector<size_t> ridx;
        if (r_profile) ridx = r_indices(res, d, spec, t);

        double num = 0.0, den = 0.0;
        for (const auto& [row, p] : res.joint) {
            if (r_profile && res.subkey(row, ridx) != *r_profile) continue;
            num += p * d.schema.y.value(row[y_idx]);
            den += p;
        }
        if (den <= 0.0)
            throw EstimationError("oracle: conditioning profile has probability zero");
        OracleResult r;
        r.value = num / den;
        r.mc_se = 0.0;
        r.method = "enumeration";
        return r;
    } catch (const CapExceeded&) {
        if (!opt.allow_mc) throw EstimationError("enumeration cap exceeded and MC disabled");
        std::vector<McCondition> conds;
        if (r_profile) {
            const auto retain = retain_r(d, spec, t);
            // retain_r emits components in r_key order
            for (size_t k = 0; k < retain.size(); ++k)
                conds.push_back({retain[k].var, retain[k].time, (*r_profile)[k]});
        }
        return mc_mean_y(d, t, iv, conds, opt.mc);
    }
}

// E[Y_t(d)] with the treatment window set to the mapper's canonical pattern.
inline OracleResult oracle_potential_outcome(const Dgp& d, const TreatmentMapper& mapper,
                                             const WindowSpec& spec, int t, int arm,
                                             const std::optional<Key>& r_profile = std::nullopt,
                                             const OracleOptions& opt = {},
                                             const Intervention& base_iv = {}) {
    if (arm != 0 && arm != 1) throw ConfigError("oracle: arm must be 0 or 1");
    Intervention iv = base_iv;
    force_window_z(iv, spec, t,
                   arm == 1 ? mapper.canonical_treated(spec) : TreatmentMapper::canonical_control(spec));
    return oracle_mean_y(d, spec, t, std::move(iv), r_profile, opt);
}

// Exposure-response: E[Y_t(s_vector)] with the exposure window forced.
inline OracleResult oracle_exposure_response(const Dgp& d, const WindowSpec& spec, int t,
                                             const Key& s_vector,
                                             const std::optional<Key>& r_profile = std::nullopt,
                                             const OracleOptions& opt = {},
                                             const Intervention& base_iv = {}) {
    if (static_cast<int>(s_vector.size()) != spec.k + 1)
        throw ConfigError("oracle: exposure vector must have K+1 entries");
    Intervention iv = base_iv;
    force_window_s(iv, spec, t, s_vector);
    return oracle_mean_y(d, spec, t, std::move(iv), r_profile, opt);
}

// Conditional means E[Y_t | do(pattern), R=r] for every realizable r, plus
// the natural-course law of R itself. Used by the estimand oracles so one
// DP pass serves all units sharing a query time.
struct ConditionalMeans {
    std::unordered_map<Key, double, KeyHash> mean;
    std::unordered_map<Key, double, KeyHash> prob;
};

inline ConditionalMeans oracle_conditional_means(const Dgp& d, const WindowSpec& spec, int t,
                                                 const Intervention& iv, double cap = 1e7) {
    std::vector<RetainSpec> retain = retain_r(d, spec, t);
    retain.push_back({var::kY, t});
    const DpResult res = dp_run(d, t, retain, iv, cap);
    const size_t y_idx = res.index_of(var::kY, t);
    const auto ridx = r_indices(res, d, spec, t);

    ConditionalMeans out;
    std::unordered_map<Key, double, KeyHash> num;
    for (const auto& [row, p] : res.joint) {
        Key r = res.subkey(row, ridx);
        num[r] += p * d.schema.y.value(row[y_idx]);
        out.prob[r] += p;
    }
    for (auto& [r, q] : out.prob) out.mean[r] = num[r] / q;
    return out;
}

} // namespace gfc
