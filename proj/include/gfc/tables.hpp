#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "gfc/dgp.hpp" // VarRef / var codes
#include "gfc/error.hpp"
#include "gfc/key.hpp"
#include "gfc/mapper.hpp"
#include "gfc/panel.hpp"
#include "gfc/rng.hpp"
#include "gfc/window.hpp"

namespace gfc {

// Which column plays the intervention role in the window machinery.
enum class Driver { Treatment, Exposure };

struct FreqRow {
    std::vector<double> counts;
    double total = 0.0;

    void add(int level, int card) {
        if (counts.empty()) counts.assign(static_cast<size_t>(card), 0.0);
        counts[static_cast<size_t>(level)] += 1.0;
        total += 1.0;
    }
    double prob(int level) const { return counts[static_cast<size_t>(level)] / total; }
};

struct MeanCell {
    double sum = 0.0, sum_sq = 0.0;
    long n = 0;

    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double mean() const { return sum / static_cast<double>(n); }
    // sample variance of the cell mean
    double mean_var() const {
        if (n < 2) return 0.0;
        const double m = mean();
        const double s2 = (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
        return std::max(0.0, s2) / static_cast<double>(n);
    }
};

namespace detail {

inline int composite_x_code(const Panel& p, int i, int t, int& card_out) {
    int code = 0, card = 1;
    for (int q = 0; q < p.n_covariates(); ++q) {
        const int c = p.schema().x[static_cast<size_t>(q)].grid.size();
        code = code * c + p.x(i, t, q);
        card *= c;
    }
    card_out = card;
    return code;
}

inline int decode_covariate(long composite, int p, const std::vector<int>& cards) {
    long rest = composite;
    for (int q = static_cast<int>(cards.size()) - 1; q > p; --q)
        rest /= cards[static_cast<size_t>(q)];
    return static_cast<int>(rest % cards[static_cast<size_t>(p)]);
}

} // namespace detail

// Declared conditioning structure for the nested-sum factors. Empty parent
// lists mean maximal conditioning (the full driver/covariate/outcome
// prefixes). With declared parents, factor keys carry only those parents
// (plus the pre-treatment profile), which keeps cells dense; parents that
// reach before the observable history are marginalized, matching the
// identification formula's conditionals.
struct WindowStructure {
    bool maximal = true;
    std::vector<VarRef> y_parents;
    std::vector<std::vector<VarRef>> x_parents; // per covariate
};

inline int var_code_from_schema(const Schema& sc, const std::string& nm) {
    if (nm == "z") return var::kZ;
    if (nm == "s") return var::kS;
    if (nm == "y") return var::kY;
    for (int p = 0; p < sc.n_covariates(); ++p)
        if (sc.x[static_cast<size_t>(p)].name == nm || nm == "x" + std::to_string(p + 1))
            return p;
    throw ConfigError("unknown variable '" + nm + "' in structure/parent reference");
}

// Value resolution around one query (i, t): forced/observed driver window,
// within-window paths in offset coordinates, and the pre-treatment profile.
struct WindowCtx {
    const WindowSpec* spec;
    int t;
    const Key* dw;               // driver window, oldest first
    const std::vector<int>* xp;  // composite covariate codes by offset (1..K)
    const std::vector<int>* yp;  // outcome codes by offset (0..K)
    const Key* r;                // r_key layout (x block then y block)
    std::vector<int> x_cards;    // per-covariate cardinalities
    Driver driver;

    // Value of variable v at absolute time u, or nothing when it lies
    // outside the window/profile (marginalized).
    std::optional<int> resolve(int v, int u) const {
        const WindowSpec& w = *spec;
        const int H = w.window_start(t);
        const bool is_driver = (driver == Driver::Treatment && v == var::kZ) ||
                               (driver == Driver::Exposure && v == var::kS);
        if (is_driver) {
            if (u >= H && u <= t - w.b) return (*dw)[static_cast<size_t>(u - H)];
            return std::nullopt;
        }
        if (v == var::kY) {
            if (u >= H && u <= t - w.b) return (*yp)[static_cast<size_t>(u - H)];
            const TimeRange ry = w.r_y_range(t);
            if (u >= ry.first && u <= ry.last) {
                const int P = static_cast<int>(x_cards.size());
                const int x_block = w.r_x_range(t).length() * P;
                return (*r)[static_cast<size_t>(x_block + (u - ry.first))];
            }
            return std::nullopt;
        }
        if (var::is_covariate(v)) {
            if (u >= H + 1 && u <= t - w.b)
                return detail::decode_covariate((*xp)[static_cast<size_t>(u - H)], v, x_cards);
            const TimeRange rx = w.r_x_range(t);
            if (u >= rx.first && u <= rx.last) {
                const int P = static_cast<int>(x_cards.size());
                return (*r)[static_cast<size_t>((u - rx.first) * P + v)];
            }
            return std::nullopt;
        }
        return std::nullopt; // the non-driver intervention column is marginalized
    }
};

// Key builders shared between fitting and evaluation so cells always align.
// Maximal mode keys carry the full prefixes; declared mode carries resolved
// parents only. The offset tag keeps different marginalization patterns
// apart.
inline Key window_x_factor_key(const WindowCtx& ctx, int m, const WindowStructure& st) {
    Key k{static_cast<int16_t>(m)};
    if (st.maximal) {
        for (int j = 0; j < m; ++j) k.push_back((*ctx.dw)[static_cast<size_t>(j)]);
        for (int j = 1; j < m; ++j) k.push_back(static_cast<int16_t>((*ctx.xp)[static_cast<size_t>(j)]));
        for (int j = 0; j < m; ++j) k.push_back(static_cast<int16_t>((*ctx.yp)[static_cast<size_t>(j)]));
    } else {
        const int u = ctx.spec->window_start(ctx.t) + m;
        for (size_t p = 0; p < ctx.x_cards.size(); ++p)
            for (const auto& pr : st.x_parents[p])
                if (auto v = ctx.resolve(pr.var, u - pr.lag)) k.push_back(static_cast<int16_t>(*v));
    }
    key_append(k, *ctx.r);
    return k;
}

inline Key window_y_factor_key(const WindowCtx& ctx, int m, const WindowStructure& st) {
    Key k{static_cast<int16_t>(m)};
    if (st.maximal) {
        for (int j = 0; j <= m; ++j) k.push_back((*ctx.dw)[static_cast<size_t>(j)]);
        for (int j = 1; j <= m; ++j) k.push_back(static_cast<int16_t>((*ctx.xp)[static_cast<size_t>(j)]));
        for (int j = 0; j < m; ++j) k.push_back(static_cast<int16_t>((*ctx.yp)[static_cast<size_t>(j)]));
    } else {
        const int u = ctx.spec->window_start(ctx.t) + m;
        for (const auto& pr : st.y_parents)
            if (auto v = ctx.resolve(pr.var, u - pr.lag)) k.push_back(static_cast<int16_t>(*v));
    }
    key_append(k, *ctx.r);
    return k;
}

inline Key window_terminal_key(const WindowCtx& ctx, const WindowStructure& st) {
    Key k;
    if (st.maximal) {
        k = *ctx.dw;
        for (int j = 1; j <= ctx.spec->k; ++j)
            k.push_back(static_cast<int16_t>((*ctx.xp)[static_cast<size_t>(j)]));
        for (int j = 0; j <= ctx.spec->k; ++j)
            k.push_back(static_cast<int16_t>((*ctx.yp)[static_cast<size_t>(j)]));
    } else {
        for (const auto& pr : st.y_parents)
            if (auto v = ctx.resolve(pr.var, ctx.t - pr.lag)) k.push_back(static_cast<int16_t>(*v));
    }
    key_append(k, *ctx.r);
    return k;
}

// Everything the window-geometry estimators read: nested-sum factors,
// exact-matching strata, natural window laws, and the observed support.
// All keys embed the pre-treatment profile r; within-window paths run in
// offset order (x at offsets 1..K, outcomes at offsets 0..K).
struct FittedWindow {
    Driver driver = Driver::Treatment;
    WindowSpec spec;
    WindowStructure structure;
    int n_covariates = 0;
    int x_card = 1;      // composite covariate-tuple cardinality
    std::vector<int> x_cards; // per covariate
    int driver_card = 2; // 2 for z, |S| for s
    int y_card = 2;
    std::vector<double> y_values; // outcome grid labels, by code
    long rows_used = 0;

    double y_value_of(int code) const { return y_values[static_cast<size_t>(code)]; }

    WindowCtx make_ctx(int t, const Key& dw, const std::vector<int>& xp, const std::vector<int>& yp,
                       const Key& r) const {
        return WindowCtx{&spec, t, &dw, &xp, &yp, &r, x_cards, driver};
    }

    // g-formula factors; keys: [offset, driver prefix, x path, y path, r...]
    std::unordered_map<Key, FreqRow, KeyHash> x_factor; // covariate tuple at offset m >= 1
    std::unordered_map<Key, FreqRow, KeyHash> y_factor; // outcome at offset m
    std::unordered_map<Key, MeanCell, KeyHash> terminal; // E[Y_t | full window, r], B >= 1

    // exact-matching strata: key = [cond key..., arm...]
    //   treatment driver: arm = D (one slot)
    //   exposure driver:  arm = full exposure window (K+1 slots)
    std::unordered_map<Key, MeanCell, KeyHash> strata_r;  // conditioning = R
    std::unordered_map<Key, MeanCell, KeyHash> strata_rv; // conditioning = [R, V]

    // natural law of the driver window per stratum (composite window code)
    std::unordered_map<Key, FreqRow, KeyHash> window_law_r, window_law_rv;
    // realized control-vector frequencies per r (weighted control convention)
    std::unordered_map<Key, FreqRow, KeyHash> control_windows_r;

    std::unordered_set<Key, KeyHash> r_support;

    int window_len() const { return spec.k + 1; }
    long window_code(const Key& w) const {
        long c = 0;
        for (auto v : w) c = c * driver_card + v;
        return c;
    }
    long n_window_codes() const {
        long c = 1;
        for (int j = 0; j < window_len(); ++j) c *= driver_card;
        return c;
    }
    Key window_from_code(long code) const {
        Key w(static_cast<size_t>(window_len()), 0);
        for (int j = window_len() - 1; j >= 0; --j) {
            w[static_cast<size_t>(j)] = static_cast<int16_t>(code % driver_card);
            code /= driver_card;
        }
        return w;
    }
};

// One pass over the panel filling every table. `anchor_time` truncates the
// fitting window (back-tests / analyses positioned before the panel's end).
inline FittedWindow fit_window_tables(const Panel& panel, const WindowSpec& spec, Driver driver,
                                      const TreatmentMapper& mapper,
                                      const WindowStructure& structure = {}, int anchor_time = -1,
                                      bool v_includes_window_end = true) {
    if (!structure.maximal &&
        structure.x_parents.size() != static_cast<size_t>(panel.n_covariates()))
        throw ConfigError("window structure: need one covariate parent list per covariate");
    FittedWindow f;
    f.driver = driver;
    f.spec = spec;
    f.structure = structure;
    f.n_covariates = panel.n_covariates();
    f.driver_card = driver == Driver::Treatment ? 2 : panel.schema().s.size();
    f.y_card = panel.schema().y.size();
    f.y_values = panel.schema().y.levels;
    for (const auto& c : panel.schema().x) f.x_cards.push_back(c.grid.size());
    int xc = 1;
    if (panel.n_units() > 0) detail::composite_x_code(panel, 0, 1, xc);
    f.x_card = xc;

    const int T = anchor_time > 0 ? std::min(anchor_time, panel.horizon()) : panel.horizon();
    const int K = spec.k;

    for (int i = 0; i < panel.n_units(); ++i) {
        for (int t = spec.min_query_time(); t <= T; ++t) {
            const HistoryView h = extract_history(panel, spec, i, t);
            const Key r = h.r_key();
            f.r_support.insert(r);
            ++f.rows_used;

            const Key& dw = driver == Driver::Treatment ? h.z_window : h.s_window;
            const int H = spec.window_start(t);

            // window paths in offset coordinates
            std::vector<int> xpath(static_cast<size_t>(K) + 1, 0); // offset 1..K used
            std::vector<int> ypath(static_cast<size_t>(K) + 1, 0);
            for (int m = 1; m <= K; ++m) {
                int card = 1;
                xpath[static_cast<size_t>(m)] = detail::composite_x_code(panel, i, H + m, card);
            }
            for (int m = 0; m <= K; ++m) ypath[static_cast<size_t>(m)] = panel.y(i, H + m);

            // factors
            const WindowCtx ctx = f.make_ctx(t, dw, xpath, ypath, r);
            for (int m = 1; m <= K; ++m)
                f.x_factor[window_x_factor_key(ctx, m, f.structure)].add(
                    xpath[static_cast<size_t>(m)], f.x_card);
            for (int m = 0; m <= K; ++m)
                f.y_factor[window_y_factor_key(ctx, m, f.structure)].add(
                    ypath[static_cast<size_t>(m)], f.y_card);
            if (spec.b >= 1)
                f.terminal[window_terminal_key(ctx, f.structure)].add(panel.y_value(i, t));

            // strata and window laws
            const double yv = panel.y_value(i, t);
            const Key rv = h.rv_key(v_includes_window_end && spec.b >= 1);
            const long wcode = f.window_code(dw);
            if (driver == Driver::Treatment) {
                const int d = mapper.map(h.z_window, spec);
                Key kr = r;
                kr.push_back(static_cast<int16_t>(d));
                f.strata_r[kr].add(yv);
                Key krv = rv;
                krv.push_back(static_cast<int16_t>(d));
                f.strata_rv[krv].add(yv);
                if (d == 0) f.control_windows_r[r].add(static_cast<int>(wcode), static_cast<int>(f.n_window_codes()));
            } else {
                Key kr = r;
                key_append(kr, h.s_window);
                f.strata_r[kr].add(yv);
                Key krv = rv;
                key_append(krv, h.s_window);
                f.strata_rv[krv].add(yv);
            }
            f.window_law_r[r].add(static_cast<int>(wcode), static_cast<int>(f.n_window_codes()));
            f.window_law_rv[rv].add(static_cast<int>(wcode), static_cast<int>(f.n_window_codes()));
        }
    }
    return f;
}

// "structure": {"y": [["z",2],["x1",1]], "x1": [["z",1]]}; omitted covariate
// entries mean "no declared parents" for that covariate.
inline WindowStructure structure_from_json(const json& j, const Schema& sc) {
    WindowStructure st;
    if (j.is_null()) return st;
    st.maximal = false;
    auto parse_refs = [&](const json& arr) {
        std::vector<VarRef> refs;
        for (const auto& pr : arr) {
            if (!pr.is_array() || pr.size() != 2)
                throw ConfigError("structure: parent must be [name, lag]");
            refs.push_back({var_code_from_schema(sc, pr[0].get<std::string>()), pr[1].get<int>()});
        }
        return refs;
    };
    if (!j.contains("y")) throw ConfigError("structure: outcome parents 'y' are required");
    st.y_parents = parse_refs(j["y"]);
    st.x_parents.assign(static_cast<size_t>(sc.n_covariates()), {});
    for (int p = 0; p < sc.n_covariates(); ++p) {
        const std::string k1 = sc.x[static_cast<size_t>(p)].name;
        const std::string k2 = "x" + std::to_string(p + 1);
        if (j.contains(k1))
            st.x_parents[static_cast<size_t>(p)] = parse_refs(j[k1]);
        else if (j.contains(k2))
            st.x_parents[static_cast<size_t>(p)] = parse_refs(j[k2]);
    }
    return st;
}

// ---- one-step transition kernels (imputation / forecasting) -----------------

struct KernelSpec {
    std::vector<VarRef> parents;
};

struct Kernel {
    KernelSpec spec;
    int card = 0;
    std::unordered_map<Key, FreqRow, KeyHash> rows;

    // Source must expose z/s/y/x accessors like Panel (see window.hpp).
    template <typename Source>
    Key key_at(const Source& src, int i, int t) const {
        Key k;
        for (const auto& pr : spec.parents) {
            const int u = t - pr.lag;
            int v = 0;
            if (u < 1) {
                v = 0; // pre-sample constant; fitting skips these rows
            } else if (pr.var == var::kZ) {
                v = src.z(i, u);
            } else if (pr.var == var::kS) {
                v = src.s(i, u);
            } else if (pr.var == var::kY) {
                v = src.y(i, u);
            } else {
                v = src.x(i, u, pr.var);
            }
            k.push_back(static_cast<int16_t>(v));
        }
        return k;
    }

    Key key_for(const Panel& p, int i, int t) const { return key_at(p, i, t); }

    // Draw from the fitted row; unestimable cells abort with the cell named.
    template <typename Source>
    int draw(const Source& src, int i, int t, int min_cell, double u,
             const std::string& what) const {
        const Key k = key_at(src, i, t);
        auto it = rows.find(k);
        if (it == rows.end() || it->second.total < min_cell)
            throw EstimationError("unestimable " + what + " transition cell " + key_to_string(k) +
                                  " reached while imputing t=" + std::to_string(t));
        return rng::categorical(it->second.counts, u);
    }

    int max_lag() const {
        int m = 0;
        for (const auto& pr : spec.parents) m = std::max(m, pr.lag);
        return m;
    }
};

struct TransitionKernels {
    std::vector<Kernel> x; // one per covariate
    Kernel y, s;
    long rows_used = 0;

    // Flags every cell unestimable when the declared lags exceed the panel
    // depth (rows_used == 0).
    bool empty() const { return rows_used == 0; }
};

// Default parent sets derived from the window spec's imputation lags:
//   x_p | z lags 1..L_z,  x_q lags 1..L_xx
//   y   | z lags 1..L_z,  x_q lags 1..L_xx, y lags 1..L_ys
//   s   | s lags 1..L_ss-1, x_q lags 0..L_xs-1, y lags 1..L_ys
// Shipped analysis configs normally declare parents explicitly.
inline TransitionKernels default_kernel_specs(const Panel& panel, const WindowSpec& spec,
                                              bool with_z) {
    TransitionKernels k;
    const int P = panel.n_covariates();
    for (int p = 0; p < P; ++p) {
        Kernel kx;
        if (with_z)
            for (int lag = 1; lag <= spec.l_z; ++lag) kx.spec.parents.push_back({var::kZ, lag});
        for (int q = 0; q < P; ++q)
            for (int lag = 1; lag <= spec.l_xx; ++lag) kx.spec.parents.push_back({q, lag});
        kx.card = panel.schema().x[static_cast<size_t>(p)].grid.size();
        k.x.push_back(std::move(kx));
    }
    if (with_z)
        for (int lag = 1; lag <= spec.l_z; ++lag) k.y.spec.parents.push_back({var::kZ, lag});
    for (int q = 0; q < P; ++q)
        for (int lag = 1; lag <= spec.l_xx; ++lag) k.y.spec.parents.push_back({q, lag});
    for (int lag = 1; lag <= spec.l_ys; ++lag) k.y.spec.parents.push_back({var::kY, lag});
    k.y.card = panel.schema().y.size();

    for (int lag = 1; lag <= spec.l_ss - 1; ++lag) k.s.spec.parents.push_back({var::kS, lag});
    for (int q = 0; q < P; ++q)
        for (int lag = 0; lag <= spec.l_xs - 1; ++lag) k.s.spec.parents.push_back({q, lag});
    for (int lag = 1; lag <= spec.l_ys; ++lag) k.s.spec.parents.push_back({var::kY, lag});
    k.s.card = panel.schema().s.size();
    return k;
}

inline void fit_kernels(TransitionKernels& k, const Panel& panel, int anchor_time = -1) {
    // cardinalities always come from the panel's declared grids
    for (int p = 0; p < panel.n_covariates(); ++p)
        k.x[static_cast<size_t>(p)].card = panel.schema().x[static_cast<size_t>(p)].grid.size();
    k.y.card = panel.schema().y.size();
    k.s.card = panel.schema().s.size();

    const int T = anchor_time > 0 ? std::min(anchor_time, panel.horizon()) : panel.horizon();
    int deepest = 1;
    for (const auto& kx : k.x) deepest = std::max(deepest, kx.max_lag());
    deepest = std::max({deepest, k.y.max_lag(), k.s.max_lag()});

    for (int i = 0; i < panel.n_units(); ++i) {
        for (int t = deepest + 1; t <= T; ++t) {
            ++k.rows_used;
            for (int p = 0; p < panel.n_covariates(); ++p) {
                auto& kx = k.x[static_cast<size_t>(p)];
                kx.rows[kx.key_for(panel, i, t)].add(panel.x(i, t, p), kx.card);
            }
            k.y.rows[k.y.key_for(panel, i, t)].add(panel.y(i, t), k.y.card);
            if (panel.schema().s.size() > 1)
                k.s.rows[k.s.key_for(panel, i, t)].add(panel.s(i, t), k.s.card);
        }
    }
}

// Structural diagnostic: do fitted covariate transitions depend on the
// treatment/exposure history? Compares rows that differ only in the driver
// parents; reports the largest total-variation gap among well-populated
// pairs.
inline double covariate_driver_dependence(const TransitionKernels& k, int driver_var,
                                          int min_rows = 30) {
    double max_tv = 0.0;
    for (const auto& kx : k.x) {
        std::vector<size_t> driver_slots;
        for (size_t j = 0; j < kx.spec.parents.size(); ++j)
            if (kx.spec.parents[j].var == driver_var) driver_slots.push_back(j);
        if (driver_slots.empty()) continue;
        // group keys by their non-driver part
        std::unordered_map<Key, std::vector<const FreqRow*>, KeyHash> groups;
        for (const auto& [key, row] : kx.rows) {
            if (row.total < min_rows) continue;
            Key rest;
            for (size_t j = 0; j < key.size(); ++j) {
                bool is_driver = false;
                for (size_t s : driver_slots) is_driver = is_driver || s == j;
                if (!is_driver) rest.push_back(key[j]);
            }
            groups[rest].push_back(&row);
        }
        for (const auto& [rest, rows] : groups) {
            for (size_t a = 0; a < rows.size(); ++a)
                for (size_t b = a + 1; b < rows.size(); ++b) {
                    double tv = 0.0;
                    for (size_t c = 0; c < rows[a]->counts.size(); ++c)
                        tv += std::abs(rows[a]->prob(static_cast<int>(c)) -
                                       rows[b]->prob(static_cast<int>(c)));
                    max_tv = std::max(max_tv, 0.5 * tv);
                }
        }
    }
    return max_tv;
}

} // namespace gfc
