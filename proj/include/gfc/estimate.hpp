#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfc/error.hpp"
#include "gfc/parallel.hpp"
#include "gfc/rng.hpp"
#include "gfc/tables.hpp"

namespace gfc {

enum class Method { Adjustment, GFormula };
enum class Conditioning { Auto, R, RV };
enum class ControlConvention { Canonical, Weighted };

struct GFormulaOptions {
    int min_cell = 5;
    double path_cap = 1e7;
    long mc_paths = 10000;
    uint64_t seed = 1;
};

struct GFormulaValue {
    double value = 0.0;
    double var = 0.0;   // delta-method variance from estimated cells
    double mc_var = 0.0; // extra variance when path sampling was used
    bool exact = true;
    long paths = 0;
};

namespace detail {

struct FactorUse {
    const FreqRow* row;
    int level;
};

inline const FreqRow& factor_row(const FittedWindow& f,
                                 const std::unordered_map<Key, FreqRow, KeyHash>& table,
                                 const Key& key, int min_cell, const std::string& what, int offset) {
    auto it = table.find(key);
    if (it == table.end() || it->second.total < min_cell)
        throw EstimationError("unestimable " + what + " factor at window offset " +
                              std::to_string(offset) + ", cell " + key_to_string(key) +
                              (it == table.end() ? " (never observed)"
                                                 : " (count " + std::to_string(static_cast<long>(it->second.total)) + ")"));
    (void)f;
    return it->second;
}

} // namespace detail

// Empirical mean outcome in the exact stratum, per arm. For the treatment
// driver `arm_key` is {D}; for the exposure driver it is the full exposure
// window. Returns nothing when the cell is absent or under-populated.
inline std::optional<MeanCell> stratum_cell(const FittedWindow& f, Conditioning cond, const Key& cond_key,
                                            const Key& arm_key, int min_cell) {
    const auto& table = cond == Conditioning::RV ? f.strata_rv : f.strata_r;
    Key k = cond_key;
    key_append(k, arm_key);
    auto it = table.find(k);
    if (it == table.end() || it->second.n < min_cell) return std::nullopt;
    return it->second;
}

// Nested-sum counterfactual mean for one forced driver window, pre-treatment
// profile r. For K = 0 there is no within-window path to integrate and the
// value is the plain stratum mean (the same cell the simple adjustment
// reads, so the two estimators agree bitwise). For K >= 1 the sum chains
// fitted covariate and outcome factors; with B = 0 the last outcome factor
// supplies the value, otherwise the terminal regression does.
inline GFormulaValue g_formula_mean(const FittedWindow& f, const Key& r, const Key& dw,
                                    const GFormulaOptions& opt) {
    const int K = f.spec.k;
    GFormulaValue out;

    if (K == 0) {
        Key k = r;
        if (f.driver == Driver::Treatment)
            k.push_back(dw[0]); // any valid K=0 rule is the identity on the single entry
        else
            key_append(k, dw);
        const auto& table = f.strata_r;
        auto it = table.find(k);
        if (it == table.end() || it->second.n < opt.min_cell)
            throw EstimationError("unestimable stratum " + key_to_string(k) + " (K=0 window)");
        out.value = it->second.mean();
        out.var = it->second.mean_var();
        out.paths = 1;
        return out;
    }

    double path_space = 1.0;
    for (int m = 1; m <= K; ++m) path_space *= f.x_card;
    for (int m = 0; m <= K; ++m) path_space *= f.y_card;

    std::vector<int> xp(static_cast<size_t>(K) + 1, 0), yp(static_cast<size_t>(K) + 1, 0);
    // Keys depend on relative positions only, so any geometry-valid anchor
    // time works; fitting pooled offsets across times the same way.
    const int t_query = f.spec.min_query_time();
    const WindowCtx ctx = f.make_ctx(t_query, dw, xp, yp, r);

    if (path_space <= opt.path_cap) {
        // exact summation with delta-method variance propagation; accumulators
        // are kept in first-touch order so the variance sums in a
        // heap-address-independent order (bitwise reproducibility)
        std::unordered_map<const FreqRow*, size_t> row_slot;
        std::vector<std::pair<const FreqRow*, std::map<int, double>>> g_accum;
        std::unordered_map<const MeanCell*, size_t> cell_slot;
        std::vector<std::pair<const MeanCell*, double>> w_accum;
        auto g_add = [&](const FreqRow* row, int level, double v) {
            auto [it, fresh] = row_slot.try_emplace(row, g_accum.size());
            if (fresh) g_accum.emplace_back(row, std::map<int, double>{});
            g_accum[it->second].second[level] += v;
        };
        auto w_add = [&](const MeanCell* cell, double v) {
            auto [it, fresh] = cell_slot.try_emplace(cell, w_accum.size());
            if (fresh) w_accum.emplace_back(cell, 0.0);
            w_accum[it->second].second += v;
        };
        std::vector<detail::FactorUse> uses;
        double value = 0.0;

        std::function<void(int, double)> walk = [&](int m, double w) {
            if (w == 0.0) return;
            if (m > K) {
                if (f.spec.b == 0) {
                    // y at offset K is the outcome itself; its factor already
                    // branched, so read the value off the path.
                    const double yv = f.y_value_of(yp[static_cast<size_t>(K)]);
                    value += w * yv;
                    for (const auto& u : uses) g_add(u.row, u.level, w * yv / u.row->prob(u.level));
                    return;
                }
                const Key tk = window_terminal_key(ctx, f.structure);
                auto it = f.terminal.find(tk);
                if (it == f.terminal.end() || it->second.n < opt.min_cell)
                    throw EstimationError("unestimable terminal cell " + key_to_string(tk));
                const MeanCell* cell = &it->second;
                const double leaf = cell->mean();
                value += w * leaf;
                w_add(cell, w);
                for (const auto& u : uses) g_add(u.row, u.level, w * leaf / u.row->prob(u.level));
                return;
            }
            auto branch_y = [&](double w2) {
                const Key yk = window_y_factor_key(ctx, m, f.structure);
                const FreqRow& row = detail::factor_row(f, f.y_factor, yk, opt.min_cell, "outcome", m);
                for (int c = 0; c < f.y_card; ++c) {
                    const double p = row.prob(c);
                    if (p == 0.0) continue;
                    yp[static_cast<size_t>(m)] = c;
                    uses.push_back({&row, c});
                    walk(m + 1, w2 * p);
                    uses.pop_back();
                }
            };
            if (m >= 1) {
                const Key xk = window_x_factor_key(ctx, m, f.structure);
                const FreqRow& row = detail::factor_row(f, f.x_factor, xk, opt.min_cell, "covariate", m);
                for (int c = 0; c < f.x_card; ++c) {
                    const double p = row.prob(c);
                    if (p == 0.0) continue;
                    xp[static_cast<size_t>(m)] = c;
                    uses.push_back({&row, c});
                    branch_y(w * p);
                    uses.pop_back();
                }
            } else {
                branch_y(w);
            }
        };
        walk(0, 1.0);

        out.value = value;
        out.paths = static_cast<long>(path_space);
        double var = 0.0;
        for (const auto& [cell, wsum] : w_accum) var += wsum * wsum * cell->mean_var();
        for (const auto& [row, levels] : g_accum) {
            for (const auto& [a, ga] : levels)
                for (const auto& [b, gb] : levels) {
                    const double pa = row->prob(a), pb = row->prob(b);
                    const double cov = ((a == b ? pa : 0.0) - pa * pb) / row->total;
                    var += ga * gb * cov;
                }
        }
        out.var = std::max(0.0, var);
        return out;
    }

    // Monte Carlo path integration from the fitted laws.
    out.exact = false;
    out.paths = opt.mc_paths;
    std::vector<double> vals(static_cast<size_t>(opt.mc_paths), 0.0);
    for (long it = 0; it < opt.mc_paths; ++it) {
        double leaf = 0.0;
        for (int m = 0; m <= K; ++m) {
            if (m >= 1) {
                const Key xk = window_x_factor_key(ctx, m, f.structure);
                const FreqRow& row = detail::factor_row(f, f.x_factor, xk, opt.min_cell, "covariate", m);
                const double u = rng::uniform_at(opt.seed, static_cast<uint64_t>(it), 0,
                                                 static_cast<uint64_t>(m), 1);
                xp[static_cast<size_t>(m)] = rng::categorical(row.counts, u);
            }
            const Key yk = window_y_factor_key(ctx, m, f.structure);
            const FreqRow& row = detail::factor_row(f, f.y_factor, yk, opt.min_cell, "outcome", m);
            const double u = rng::uniform_at(opt.seed, static_cast<uint64_t>(it), 0,
                                             static_cast<uint64_t>(m), 2);
            yp[static_cast<size_t>(m)] = rng::categorical(row.counts, u);
        }
        if (f.spec.b == 0) {
            leaf = f.y_value_of(yp[static_cast<size_t>(K)]);
        } else {
            const Key tk = window_terminal_key(ctx, f.structure);
            auto itc = f.terminal.find(tk);
            if (itc == f.terminal.end() || itc->second.n < opt.min_cell)
                throw EstimationError("unestimable terminal cell " + key_to_string(tk));
            leaf = itc->second.mean();
        }
        vals[static_cast<size_t>(it)] = leaf;
    }
    const double n = static_cast<double>(opt.mc_paths);
    out.value = rng::pairwise_sum(vals) / n;
    double ss = 0.0;
    for (double v : vals) ss += (v - out.value) * (v - out.value);
    out.mc_var = ss / (n - 1.0) / n;
    return out;
}

// ---- ATT / attributable events ----------------------------------------------

struct DropRecord {
    int unit;
    int time;
    std::string reason;
};

struct PerUnitRecord {
    int unit;
    int time;
    Key stratum;
    double y_obs;
    double imputed0;
    double contrast;
};

struct EstimateReport {
    std::string estimand;
    double value = 0.0;
    double se = 0.0;            // total sampling SE of the estimate
    double se_imputation = 0.0; // counterfactual-arm component only
    double mc_se = 0.0;         // Monte Carlo integration component
    double attributable = 0.0;  // sum instead of mean
    long n_treated = 0;         // candidate unit-times before drops
    long n_used = 0;
    std::vector<DropRecord> drops;
    std::map<std::string, long> drop_counts;
    bool tdc_suspected = false;
    double tdc_dependence = 0.0;
    json mode_flags;
    json extra; // per-draw traces, overlap fractions, policy notes
    std::vector<PerUnitRecord> per_unit;

    void add_drop(int unit, int time, const std::string& reason) {
        drops.push_back({unit, time, reason});
        // aggregate counts by the reason category, not the specific cell
        std::string bucket = reason;
        for (const char* sep : {", cell", ": stratum", " in stratum", " reached"}) {
            const auto pos = bucket.find(sep);
            if (pos != std::string::npos) bucket = bucket.substr(0, pos);
        }
        ++drop_counts[bucket];
    }
    std::string dominant_drop_reason() const {
        std::string best = "none";
        long n = -1;
        for (const auto& [r, c] : drop_counts)
            if (c > n) {
                n = c;
                best = r;
            }
        return best;
    }
};

struct AttOptions {
    Method method = Method::GFormula;
    Conditioning conditioning = Conditioning::Auto;
    ControlConvention convention = ControlConvention::Canonical;
    WindowStructure structure; // factor conditioning; maximal by default
    int min_cell = 5;
    double path_cap = 1e7;
    long mc_paths = 10000;
    uint64_t seed = 1;
    int threads = 1;
    bool v_includes_window_end = true;
    int anchor_time = -1;
};

// Conditioning set per intervention type: one-day rules need only the
// pre-treatment history, multi-day rules without time-dependent confounding
// add the within-window history.
inline Conditioning resolve_conditioning(Conditioning c, const TreatmentMapper& mapper) {
    if (c != Conditioning::Auto) return c;
    return mapper.kind == MapperKind::OneDay ? Conditioning::R : Conditioning::RV;
}

// Imputed counterfactual mean for one unit-time under the adjustment method:
// the empirical mean outcome among observed units with D = d in the exact
// stratum. Throws when the stratum has no (or too few) such units.
inline double estimate_adjusted_mean(const FittedWindow& f, const HistoryView& h, Conditioning cond,
                                     int d, int min_cell, bool v_includes_window_end = true) {
    // With B = 0 the window-end outcome is the outcome itself, so the [R,V]
    // key always leaves it out in that case.
    const Key cond_key = cond == Conditioning::RV ? h.rv_key(v_includes_window_end && f.spec.b >= 1)
                                                  : h.r_key();
    const auto cell = stratum_cell(f, cond, cond_key, Key{static_cast<int16_t>(d)}, min_cell);
    if (!cell)
        throw EstimationError("no-control-match: stratum " + key_to_string(cond_key) + " arm " +
                              std::to_string(d));
    return cell->mean();
}

namespace detail {

struct Imputed {
    double value;
    double var;    // variance of the imputed mean
    double mc_var; // extra MC component
    Key group;     // grouping key for shared-error accounting
};

inline Imputed impute_control_mean(const FittedWindow& f, const HistoryView& h, Conditioning cond,
                                   const TreatmentMapper& mapper, const AttOptions& opt) {
    if (opt.method == Method::Adjustment) {
        const Key cond_key = cond == Conditioning::RV
                                 ? h.rv_key(opt.v_includes_window_end && f.spec.b >= 1)
                                 : h.r_key();
        const auto cell = stratum_cell(f, cond, cond_key, Key{0}, opt.min_cell);
        if (!cell)
            throw EstimationError("no-control-match: stratum " + key_to_string(cond_key));
        return {cell->mean(), cell->mean_var(), 0.0, cond_key};
    }
    // g-formula on the pre-treatment profile
    const Key r = h.r_key();
    GFormulaOptions gopt{opt.min_cell, opt.path_cap, opt.mc_paths, opt.seed};
    if (opt.convention == ControlConvention::Canonical) {
        const GFormulaValue v = g_formula_mean(f, r, TreatmentMapper::canonical_control(f.spec), gopt);
        return {v.value, v.var, v.mc_var, r};
    }
    // propensity-weighted average over realized control windows in the stratum
    auto it = f.control_windows_r.find(r);
    if (it == f.control_windows_r.end() || it->second.total < opt.min_cell)
        throw EstimationError("no realized control windows in stratum " + key_to_string(r));
    double value = 0.0, var = 0.0, mc_var = 0.0;
    for (size_t code = 0; code < it->second.counts.size(); ++code) {
        const double cnt = it->second.counts[code];
        if (cnt == 0.0) continue;
        const Key w = f.window_from_code(static_cast<long>(code));
        if (mapper.map(w, f.spec) != 0) continue; // realized but treated window (window exits set)
        const double weight = cnt / it->second.total;
        const GFormulaValue v = g_formula_mean(f, r, w, gopt);
        value += weight * v.value;
        var += weight * weight * v.var;
        mc_var += weight * weight * v.mc_var;
    }
    return {value, var, mc_var, r};
}

} // namespace detail

// ATT (mean) and attributable events (sum) over the realized treated set.
inline EstimateReport estimate_att(const Panel& panel, const WindowSpec& spec,
                                   const TreatmentMapper& mapper, const AttOptions& opt) {
    mapper.validate(spec);
    const Conditioning cond = resolve_conditioning(opt.conditioning, mapper);
    const FittedWindow f = fit_window_tables(panel, spec, Driver::Treatment, mapper,
                                             opt.structure, opt.anchor_time,
                                             opt.v_includes_window_end);
    const auto [all, treated] = build_unit_sets(panel, spec, mapper);
    (void)all;

    EstimateReport rep;
    rep.estimand = "ATT";
    rep.mode_flags["method"] = opt.method == Method::Adjustment ? "adjustment" : "gformula";
    rep.mode_flags["conditioning"] = cond == Conditioning::R ? "r" : "rv";
    rep.mode_flags["control_convention"] =
        opt.convention == ControlConvention::Canonical ? "canonical" : "weighted";
    rep.mode_flags["min_cell"] = opt.min_cell;

    const int T = opt.anchor_time > 0 ? std::min(opt.anchor_time, panel.horizon()) : panel.horizon();

    struct Group {
        double var = 0.0, mc_var = 0.0;
        long n = 0;
    };
    std::unordered_map<Key, Group, KeyHash> groups;
    std::vector<double> contrasts;

    // candidates: treated unit-times inside the analysis window
    std::vector<std::pair<int, int>> candidates;
    for (const auto& [i, t] : treated.members)
        if (t <= T) candidates.push_back({i, t});
    rep.n_treated = static_cast<long>(candidates.size());

    // per-unit imputation is independent given the shared fitted tables;
    // slots keep the reduction order fixed regardless of the thread count
    struct Slot {
        bool ok = false;
        detail::Imputed m0{};
        std::string error;
    };
    std::vector<Slot> slots(candidates.size());
    parallel_for(candidates.size(), opt.threads, [&](size_t idx) {
        const auto [i, t] = candidates[idx];
        if (t < spec.min_query_time()) {
            slots[idx].error = "history-underflow";
            return;
        }
        try {
            const HistoryView h = extract_history(panel, spec, i, t);
            slots[idx].m0 = detail::impute_control_mean(f, h, cond, mapper, opt);
            slots[idx].ok = true;
        } catch (const EstimationError& e) {
            slots[idx].error = e.what();
        }
    });
    for (size_t idx = 0; idx < candidates.size(); ++idx) {
        const auto [i, t] = candidates[idx];
        if (!slots[idx].ok) {
            rep.add_drop(i, t, slots[idx].error);
            continue;
        }
        const detail::Imputed& m0 = slots[idx].m0;
        const double y = panel.y_value(i, t);
        rep.per_unit.push_back({i, t, m0.group, y, m0.value, y - m0.value});
        contrasts.push_back(y - m0.value);
        auto& g = groups[m0.group];
        g.var = m0.var;
        g.mc_var = m0.mc_var;
        ++g.n;
    }

    rep.n_used = static_cast<long>(contrasts.size());
    if (rep.n_used == 0)
        throw EstimationError("all treated unit-times dropped; dominant reason: " +
                              rep.dominant_drop_reason());

    const double N = static_cast<double>(rep.n_used);
    rep.value = rng::pairwise_sum(contrasts) / N;
    rep.attributable = rng::pairwise_sum(contrasts);

    // imputed means are shared within a group; treated-side noise from the
    // contrast spread
    double imp_var = 0.0, mc_var = 0.0;
    for (const auto& [k, g] : groups) {
        const double w = static_cast<double>(g.n) / N;
        imp_var += w * w * g.var;
        mc_var += w * w * g.mc_var;
    }
    double s2 = 0.0;
    for (double c : contrasts) s2 += (c - rep.value) * (c - rep.value);
    s2 = contrasts.size() > 1 ? s2 / (N - 1.0) : 0.0;
    rep.se_imputation = std::sqrt(imp_var);
    rep.mc_se = std::sqrt(mc_var);
    rep.se = std::sqrt(imp_var + mc_var + s2 / N);

    // structural diagnostic: covariate transitions reading treatment history
    if (panel.horizon() >= 3) {
        TransitionKernels kern = default_kernel_specs(panel, spec, /*with_z=*/true);
        fit_kernels(kern, panel, T);
        rep.tdc_dependence = covariate_driver_dependence(kern, var::kZ, /*min_rows=*/100);
        rep.tdc_suspected = rep.tdc_dependence > 0.1;
    }
    return rep;
}

} // namespace gfc
