#pragma once

#include <algorithm>
#include <string>

#include <nlohmann/json.hpp>

#include "gfc/error.hpp"
#include "gfc/key.hpp"
#include "gfc/panel.hpp"

namespace gfc {

struct TimeRange {
    int first, last; // inclusive; empty when first > last
    int length() const { return std::max(0, last - first + 1); }
    bool empty() const { return first > last; }
};

// Lag geometry around a query time t. The treatment window covers
// [t-B-K, t-B]; pre-treatment history R covers covariates [t-B-L_x, t-B-K]
// and outcomes [t-B-L_y, t-B-K-1]; the within-window history V covers
// covariates [t-B-K+1, t-B] and outcomes [t-B-K, t-B-1] (the adjustment
// key may extend outcomes through t-B, see estimate.hpp).
struct WindowSpec {
    int b = 0;  // latency
    int k = 0;  // carry-over
    int l = 0;  // effect lag, B <= L <= B+K
    int q = 1;  // duration, multi-day mappers
    int l_x = 0; // pre-treatment covariate depth, >= K
    int l_y = 1; // pre-treatment outcome depth, > K
    // One-step imputation lags (forecasting): z into x/y models, x into x,
    // s into s, x into s, y into s/y models.
    int l_z = 1;
    int l_xx = 1;
    int l_ss = 1;
    int l_xs = 1;
    int l_ys = 1;

    void validate() const {
        if (b < 0 || k < 0) throw ConfigError("window: B and K must be >= 0");
        if (!(b <= l && l <= b + k)) throw ConfigError("window: need B <= L <= B+K");
        if (q < 1) throw ConfigError("window: Q must be >= 1");
        if (l_x < k) throw ConfigError("window: need L_x >= K");
        if (l_y <= k) throw ConfigError("window: need L_y > K");
        if (l_z < 1 || l_xx < 1 || l_ss < 1 || l_xs < 1 || l_ys < 1)
            throw ConfigError("window: imputation lags must be >= 1");
    }

    int window_start(int t) const { return t - b - k; } // H
    TimeRange window_range(int t) const { return {t - b - k, t - b}; }
    TimeRange r_x_range(int t) const { return {t - b - l_x, t - b - k}; }
    TimeRange r_y_range(int t) const { return {t - b - l_y, t - b - k - 1}; }
    TimeRange v_x_range(int t) const { return {t - b - k + 1, t - b}; }
    TimeRange v_y_range(int t) const { return {t - b - k, t - b - 1}; }

    int history_min_time(int t) const { return t - b - std::max(l_x, l_y); }

    // Earliest query time whose full history geometry fits a 1-based panel.
    int min_query_time() const { return 1 + b + std::max(l_x, l_y); }
    // Earliest query time whose treatment window alone fits.
    int min_window_time() const { return 1 + b + k; }
};

inline WindowSpec window_from_json(const json& j) {
    WindowSpec w;
    if (!j.contains("b") || !j.contains("k")) throw ConfigError("window: 'b' and 'k' are required");
    w.b = j["b"].get<int>();
    w.k = j["k"].get<int>();
    w.l = j.contains("l") ? j["l"].get<int>() : w.b;
    w.q = j.contains("q") ? j["q"].get<int>() : 1;
    w.l_x = j.contains("l_x") ? j["l_x"].get<int>() : w.k;
    w.l_y = j.contains("l_y") ? j["l_y"].get<int>() : w.k + 1;
    w.l_z = j.contains("l_z") ? j["l_z"].get<int>() : w.k + 1;
    w.l_xx = j.contains("l_xx") ? j["l_xx"].get<int>() : std::max(1, w.l_x);
    w.l_ss = j.contains("l_ss") ? j["l_ss"].get<int>() : w.k + 1;
    w.l_xs = j.contains("l_xs") ? j["l_xs"].get<int>() : std::max(1, w.l_x);
    w.l_ys = j.contains("l_ys") ? j["l_ys"].get<int>() : w.l_y;
    w.validate();
    return w;
}

inline json window_to_json(const WindowSpec& w) {
    json j;
    j["b"] = w.b;
    j["k"] = w.k;
    j["l"] = w.l;
    j["q"] = w.q;
    j["l_x"] = w.l_x;
    j["l_y"] = w.l_y;
    j["l_z"] = w.l_z;
    j["l_xx"] = w.l_xx;
    j["l_ss"] = w.l_ss;
    j["l_xs"] = w.l_xs;
    j["l_ys"] = w.l_ys;
    return j;
}

// Future-window geometry: a gap of F times after the observed horizon, a
// treatment window of length T_Z^F, and an outcome window ending at T^F
// (both offsets from T+F).
struct FutureWindow {
    int gap = 1;        // F >= 1
    int t_z_len = 0;    // treatment window length T_Z^F >= 0
    int t_out_end = 0;  // outcome window end T^F

    void validate(const WindowSpec& spec) const {
        if (gap < 1) throw ConfigError("future window: F must be >= 1");
        if (t_z_len < 0) throw ConfigError("future window: T_Z^F must be >= 0");
        if (!(spec.l <= t_out_end && t_out_end <= t_z_len + spec.k))
            throw ConfigError("future window: need L <= T^F <= T_Z^F + K");
    }
    // First (and for fixed-time selection, the only) future outcome time.
    int first_outcome_time(int T, const WindowSpec& spec) const { return T + gap + spec.l; }
    int last_outcome_time(int T) const { return T + gap + t_out_end; }
};

// Window slices for one (i, t). Values are level codes; vectors run oldest
// first. r_x flattens [time][covariate].
struct HistoryView {
    int unit = 0;
    int time = 0;
    TimeRange r_x_times{1, 0}, r_y_times{1, 0};
    TimeRange v_x_times{1, 0}, v_y_times{1, 0};
    TimeRange window_times{1, 0};
    Key r_x, r_y;
    Key v_x, v_y;
    Key z_window;
    Key s_window;
    int16_t y_at_window_end = -1; // y_{t-B}, the "through t-B" context

    Key r_key() const {
        Key k = r_x;
        key_append(k, r_y);
        return k;
    }
    // include_window_end_outcome appends y_{t-B} (degenerate when B = 0:
    // that value is the outcome itself, so callers must leave it off).
    Key rv_key(bool include_window_end_outcome) const {
        Key k = r_key();
        key_append(k, v_x);
        key_append(k, v_y);
        if (include_window_end_outcome) k.push_back(y_at_window_end);
        return k;
    }
};

// Source must expose n_units/horizon-free access: z(i,t), s(i,t), y(i,t),
// x(i,t,p), n_covariates(), plus time_observable(t) saying whether t may be
// read. Panel and imputed trajectories both qualify.
template <typename Source>
HistoryView extract_history_from(const Source& src, const WindowSpec& spec, int i, int t) {
    const int lo = spec.history_min_time(t);
    if (lo < 1)
        throw EstimationError("history window underflows time 1: t=" + std::to_string(t) +
                              " needs t-B-max(L_x,L_y) = " + std::to_string(lo) + " >= 1");
    if (!src.time_observable(t))
        throw EstimationError("query time t=" + std::to_string(t) + " is outside the panel horizon");

    HistoryView h;
    h.unit = i;
    h.time = t;
    h.window_times = spec.window_range(t);
    h.r_x_times = spec.r_x_range(t);
    h.r_y_times = spec.r_y_range(t);
    h.v_x_times = spec.v_x_range(t);
    h.v_y_times = spec.v_y_range(t);

    const int P = src.n_covariates();
    for (int u = h.r_x_times.first; u <= h.r_x_times.last; ++u)
        for (int p = 0; p < P; ++p) h.r_x.push_back(static_cast<int16_t>(src.x(i, u, p)));
    for (int u = h.r_y_times.first; u <= h.r_y_times.last; ++u)
        h.r_y.push_back(static_cast<int16_t>(src.y(i, u)));
    for (int u = h.v_x_times.first; u <= h.v_x_times.last; ++u)
        for (int p = 0; p < P; ++p) h.v_x.push_back(static_cast<int16_t>(src.x(i, u, p)));
    for (int u = h.v_y_times.first; u <= h.v_y_times.last; ++u)
        h.v_y.push_back(static_cast<int16_t>(src.y(i, u)));
    for (int u = h.window_times.first; u <= h.window_times.last; ++u) {
        h.z_window.push_back(static_cast<int16_t>(src.z(i, u)));
        h.s_window.push_back(static_cast<int16_t>(src.s(i, u)));
    }
    h.y_at_window_end = static_cast<int16_t>(src.y(i, t - spec.b));
    return h;
}

// Pre-treatment profile only (covariate block then outcome block); used on
// future times where the treatment window itself is not defined yet.
template <typename Source>
Key extract_r_key_from(const Source& src, const WindowSpec& spec, int i, int t) {
    const int lo = spec.history_min_time(t);
    if (lo < 1)
        throw EstimationError("history window underflows time 1: t=" + std::to_string(t));
    const TimeRange rx = spec.r_x_range(t);
    const TimeRange ry = spec.r_y_range(t);
    if (!src.time_observable(std::max(rx.last, ry.last)))
        throw EstimationError("pre-treatment history for t=" + std::to_string(t) +
                              " reaches beyond the available horizon");
    Key r;
    for (int u = rx.first; u <= rx.last; ++u)
        for (int p = 0; p < src.n_covariates(); ++p) r.push_back(static_cast<int16_t>(src.x(i, u, p)));
    for (int u = ry.first; u <= ry.last; ++u) r.push_back(static_cast<int16_t>(src.y(i, u)));
    return r;
}

// Adapter so Panel satisfies the Source concept above.
struct PanelSource {
    const Panel& panel;
    int n_covariates() const { return panel.n_covariates(); }
    bool time_observable(int t) const { return panel.in_range(t); }
    int z(int i, int t) const { return panel.z(i, t); }
    int s(int i, int t) const { return panel.s(i, t); }
    int y(int i, int t) const { return panel.y(i, t); }
    int x(int i, int t, int p) const { return panel.x(i, t, p); }
};

inline HistoryView extract_history(const Panel& panel, const WindowSpec& spec, int i, int t) {
    return extract_history_from(PanelSource{panel}, spec, i, t);
}

} // namespace gfc
