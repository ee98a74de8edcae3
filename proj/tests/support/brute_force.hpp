#pragma once

// Test-only reference oracle: exhaustive enumeration over every raw value
// path of a Dgp, with no dynamic-programming shortcuts. Exponential in
// T x variables, so only for tiny models; it exists to validate the DP
// engine independently.

#include <functional>
#include <vector>

#include "gfc/dgp.hpp"
#include "gfc/oracle.hpp"
#include "gfc/simulate.hpp"

namespace gfc::test {

inline DpResult brute_joint(const Dgp& d, int t_end, std::vector<RetainSpec> retain,
                            const Intervention& iv) {
    std::stable_sort(retain.begin(), retain.end(), [&](const RetainSpec& a, const RetainSpec& b) {
        if (a.time != b.time) return a.time < b.time;
        return d.order_rank(a.var) < d.order_rank(b.var);
    });

    const int P = d.n_covariates();
    std::vector<std::vector<int>> x(static_cast<size_t>(t_end) + 1,
                                    std::vector<int>(static_cast<size_t>(P), 0));
    std::vector<int> z(static_cast<size_t>(t_end) + 1, 0);
    std::vector<int> s(static_cast<size_t>(t_end) + 1, 0);
    std::vector<int> y(static_cast<size_t>(t_end) + 1, 0);
    std::vector<int> latent(d.latents.size(), 0);

    auto value_at = [&](int v, int t) -> int {
        if (var::is_latent(v)) {
            const auto& l = d.latents[static_cast<size_t>(v - var::kLatentBase)];
            if (l.kind == LatentSpec::Kind::Drift) return t >= l.tau ? l.high : l.low;
            return latent[static_cast<size_t>(v - var::kLatentBase)];
        }
        if (t < 1) return d.initial_value(v);
        if (v == var::kZ) return z[static_cast<size_t>(t)];
        if (v == var::kS) return s[static_cast<size_t>(t)];
        if (v == var::kY) return y[static_cast<size_t>(t)];
        return x[static_cast<size_t>(t)][static_cast<size_t>(v)];
    };

    auto row_of = [&](const Equation& eq, int t) -> const std::vector<double>& {
        static const std::vector<double> unit_row{1.0};
        if (eq.parents.empty()) return eq.table.empty() ? unit_row : eq.table[0];
        size_t idx = 0;
        for (const auto& pr : eq.parents)
            idx = idx * static_cast<size_t>(d.cardinality(pr.var)) +
                  static_cast<size_t>(value_at(pr.var, t - pr.lag));
        return eq.table[idx];
    };

    DpResult res;
    res.order = retain;

    std::function<void(int, int, double)> walk = [&](int t, int stage, double p) {
        if (p == 0.0) return;
        if (t > t_end) {
            Key k;
            for (const auto& r : retain) k.push_back(static_cast<int16_t>(value_at(r.var, r.time)));
            res.joint[k] += p;
            return;
        }
        // stage: 0..P-1 covariates, P z, P+1 s, P+2 y
        if (stage < P) {
            const auto& row = row_of(d.x_eq[static_cast<size_t>(stage)], t);
            for (int c = 0; c < static_cast<int>(row.size()); ++c) {
                x[static_cast<size_t>(t)][static_cast<size_t>(stage)] = c;
                walk(t, stage + 1, p * row[static_cast<size_t>(c)]);
            }
            return;
        }
        if (stage == P) {
            if (auto f = iv.forced_z(t)) {
                z[static_cast<size_t>(t)] = *f;
                walk(t, stage + 1, p);
            } else if (!d.models_z) {
                z[static_cast<size_t>(t)] = 0;
                walk(t, stage + 1, p);
            } else {
                const auto& row = row_of(d.z_eq, t);
                for (int c = 0; c < 2; ++c) {
                    z[static_cast<size_t>(t)] = c;
                    walk(t, stage + 1, p * row[static_cast<size_t>(c)]);
                }
            }
            return;
        }
        if (stage == P + 1) {
            if (auto f = iv.forced_s(t)) {
                s[static_cast<size_t>(t)] = *f;
                walk(t, stage + 2, p);
            } else if (!d.models_s) {
                s[static_cast<size_t>(t)] = 0;
                walk(t, stage + 2, p);
            } else {
                const auto& row = row_of(*iv.s_equation_at(t, d.s_eq), t);
                for (int c = 0; c < static_cast<int>(row.size()); ++c) {
                    s[static_cast<size_t>(t)] = c;
                    walk(t, stage + 2, p * row[static_cast<size_t>(c)]);
                }
            }
            return;
        }
        // y, then advance time
        const auto& row = row_of(d.y_eq, t);
        for (int c = 0; c < static_cast<int>(row.size()); ++c) {
            y[static_cast<size_t>(t)] = c;
            walk(t + 1, 0, p * row[static_cast<size_t>(c)]);
        }
    };

    std::function<void(size_t, double)> latents = [&](size_t j, double p) {
        if (j == d.latents.size()) {
            walk(1, 0, p);
            return;
        }
        const auto& l = d.latents[j];
        if (l.kind == LatentSpec::Kind::Drift) {
            latents(j + 1, p);
            return;
        }
        for (int v = 0; v < static_cast<int>(l.probs.size()); ++v) {
            latent[j] = v;
            latents(j + 1, p * l.probs[static_cast<size_t>(v)]);
        }
    };
    latents(0, 1.0);
    return res;
}

} // namespace gfc::test
