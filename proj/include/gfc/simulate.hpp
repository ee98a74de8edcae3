#pragma once

#include <functional>
#include <optional>
#include <unordered_map>
#include <vector>

#include "gfc/dgp.hpp"
#include "gfc/panel.hpp"
#include "gfc/rng.hpp"

namespace gfc {

// Forced values and kernel substitutions used by counterfactual rollouts.
// force_z_from fills z with fill_value from that time on (natural-course
// futures); point forces win over the fill.
struct Intervention {
    std::unordered_map<int, int> force_z; // time -> level code
    std::unordered_map<int, int> force_s;
    int force_z_from = 0; // 0 = disabled
    int fill_value = 0;
    const Equation* s_kernel = nullptr; // replaces the exposure equation ...
    int s_kernel_from = 1, s_kernel_to = 0; // ... for times in this range

    std::optional<int> forced_z(int t) const {
        auto it = force_z.find(t);
        if (it != force_z.end()) return it->second;
        if (force_z_from > 0 && t >= force_z_from) return fill_value;
        return std::nullopt;
    }
    std::optional<int> forced_s(int t) const {
        auto it = force_s.find(t);
        if (it != force_s.end()) return it->second;
        return std::nullopt;
    }
    const Equation* s_equation_at(int t, const Equation& natural) const {
        if (s_kernel && t >= s_kernel_from && t <= s_kernel_to) return s_kernel;
        return &natural;
    }
};

// One simulated unit trajectory, including latent draws.
struct Trajectory {
    std::vector<std::vector<int>> x; // [time-1][covariate]
    std::vector<int> z, s, y;        // [time-1]
    std::vector<int> latent;         // unit-static latent values

    int value(int v, int t, const Dgp& d) const {
        if (var::is_latent(v)) {
            const auto& l = d.latents[static_cast<size_t>(v - var::kLatentBase)];
            if (l.kind == LatentSpec::Kind::Drift) return t >= l.tau ? l.high : l.low;
            return latent[static_cast<size_t>(v - var::kLatentBase)];
        }
        if (t < 1) return d.initial_value(v);
        const size_t idx = static_cast<size_t>(t - 1);
        if (v == var::kZ) return z[idx];
        if (v == var::kS) return s[idx];
        if (v == var::kY) return y[idx];
        return x[idx][static_cast<size_t>(v)];
    }
};

namespace detail {

inline int rng_var_id(const Dgp& d, int v) {
    if (var::is_latent(v)) return d.n_covariates() + 3 + (v - var::kLatentBase);
    if (v == var::kZ) return d.n_covariates();
    if (v == var::kS) return d.n_covariates() + 1;
    if (v == var::kY) return d.n_covariates() + 2;
    return v;
}

inline const std::vector<double>& row_for(const Dgp& d, const Equation& eq, const Trajectory& tr,
                                          int t) {
    static const std::vector<double> unit_row{1.0};
    if (eq.parents.empty()) return eq.table.empty() ? unit_row : eq.table[0];
    size_t idx = 0;
    for (const auto& pr : eq.parents)
        idx = idx * static_cast<size_t>(d.cardinality(pr.var)) +
              static_cast<size_t>(tr.value(pr.var, t - pr.lag, d));
    return eq.table[idx];
}

} // namespace detail

// Samples one unit forward through time 1..T. Every variate is a pure
// function of (seed, replication, unit, time, variable), so trajectories are
// reproducible under any parallel schedule.
inline Trajectory simulate_unit(const Dgp& d, int T, uint64_t seed, uint64_t replication,
                                uint64_t unit, const Intervention& iv = {}) {
    Trajectory tr;
    const int P = d.n_covariates();
    tr.x.assign(static_cast<size_t>(T), std::vector<int>(static_cast<size_t>(P), 0));
    tr.z.assign(static_cast<size_t>(T), 0);
    tr.s.assign(static_cast<size_t>(T), 0);
    tr.y.assign(static_cast<size_t>(T), 0);

    for (size_t j = 0; j < d.latents.size(); ++j) {
        const auto& l = d.latents[j];
        if (l.kind == LatentSpec::Kind::UnitStatic) {
            const double u = rng::uniform_at(seed, replication, unit, 0,
                                             static_cast<uint64_t>(detail::rng_var_id(
                                                 d, var::kLatentBase + static_cast<int>(j))));
            tr.latent.push_back(rng::categorical(l.probs, u));
        } else {
            tr.latent.push_back(0); // drift latents are deterministic in t
        }
    }

    for (int t = 1; t <= T; ++t) {
        const size_t ti = static_cast<size_t>(t - 1);
        for (int p = 0; p < P; ++p) {
            const auto& row = detail::row_for(d, d.x_eq[static_cast<size_t>(p)], tr, t);
            const double u = rng::uniform_at(seed, replication, unit, static_cast<uint64_t>(t),
                                             static_cast<uint64_t>(detail::rng_var_id(d, p)));
            tr.x[ti][static_cast<size_t>(p)] = rng::categorical(row, u);
        }
        if (auto fz = iv.forced_z(t)) {
            tr.z[ti] = *fz;
        } else if (d.models_z) {
            const auto& row = detail::row_for(d, d.z_eq, tr, t);
            const double u = rng::uniform_at(seed, replication, unit, static_cast<uint64_t>(t),
                                             static_cast<uint64_t>(detail::rng_var_id(d, var::kZ)));
            tr.z[ti] = rng::categorical(row, u);
        }
        if (auto fs = iv.forced_s(t)) {
            tr.s[ti] = *fs;
        } else if (d.models_s) {
            const Equation* eq = iv.s_equation_at(t, d.s_eq);
            const auto& row = detail::row_for(d, *eq, tr, t);
            const double u = rng::uniform_at(seed, replication, unit, static_cast<uint64_t>(t),
                                             static_cast<uint64_t>(detail::rng_var_id(d, var::kS)));
            tr.s[ti] = rng::categorical(row, u);
        }
        {
            const auto& row = detail::row_for(d, d.y_eq, tr, t);
            const double u = rng::uniform_at(seed, replication, unit, static_cast<uint64_t>(t),
                                             static_cast<uint64_t>(detail::rng_var_id(d, var::kY)));
            tr.y[ti] = rng::categorical(row, u);
        }
    }
    return tr;
}

// Forward-samples a full panel. Lags deeper than the horizon are rejected.
inline Panel simulate(const Dgp& d, int n_units, int T, uint64_t seed) {
    int deepest = 0;
    for (int p = 0; p < d.n_covariates(); ++p) deepest = std::max(deepest, d.max_parent_lag(p));
    if (d.models_z) deepest = std::max(deepest, d.max_parent_lag(var::kZ));
    if (d.models_s) deepest = std::max(deepest, d.max_parent_lag(var::kS));
    deepest = std::max(deepest, d.max_parent_lag(var::kY));
    if (deepest >= T)
        throw ConfigError("simulate: table lag " + std::to_string(deepest) +
                          " does not fit inside horizon " + std::to_string(T));

    std::vector<std::string> units;
    units.reserve(static_cast<size_t>(n_units));
    for (int i = 1; i <= n_units; ++i) units.push_back("u" + std::to_string(i));
    Panel panel(d.schema, units, T);
    for (int i = 0; i < n_units; ++i) {
        const Trajectory tr = simulate_unit(d, T, seed, 0, static_cast<uint64_t>(i));
        for (int t = 1; t <= T; ++t) {
            panel.set_z(i, t, tr.z[static_cast<size_t>(t - 1)]);
            panel.set_s(i, t, tr.s[static_cast<size_t>(t - 1)]);
            panel.set_y(i, t, tr.y[static_cast<size_t>(t - 1)]);
            for (int p = 0; p < d.n_covariates(); ++p)
                panel.set_x(i, t, p, tr.x[static_cast<size_t>(t - 1)][static_cast<size_t>(p)]);
        }
    }
    return panel;
}

} // namespace gfc
