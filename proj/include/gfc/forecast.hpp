#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "gfc/estimate.hpp"
#include "gfc/parallel.hpp"
#include "gfc/tables.hpp"

namespace gfc {

// How the future unit set is chosen: every unit at the first outcome time,
// unit-times whose imputed pre-treatment profile matches one seen among past
// treated units, or an explicit list of profiles.
struct ScenarioSpec {
    enum class Rule { FixedTime, MatchPastR, ExplicitR };
    Rule rule = Rule::FixedTime;
    std::vector<Key> r_values; // explicit profiles
    FutureWindow future;
    int n_draws = 1000;
    double overlap_threshold = 0.0; // strict by default
    bool force = false;             // waive a refusal explicitly
    std::map<int, int> gap_schedule; // optional planned treatments, time -> z
    int anchor_time = -1;           // < 0: the panel horizon
};

inline ScenarioSpec scenario_from_json(const json& j, const Schema& schema,
                                       const WindowSpec& spec) {
    ScenarioSpec sc;
    if (!j.contains("future")) throw ConfigError("scenario: missing 'future'");
    sc.future.gap = j["future"].value("f", 1);
    sc.future.t_z_len = j["future"].value("t_z_len", 0);
    sc.future.t_out_end = j["future"].value("t_out_end", spec.l);
    sc.future.validate(spec);
    const std::string rule = j.value("selection", std::string("fixed-time"));
    if (rule == "fixed-time") {
        sc.rule = ScenarioSpec::Rule::FixedTime;
    } else if (rule == "match-past-r") {
        sc.rule = ScenarioSpec::Rule::MatchPastR;
    } else if (rule == "explicit-r") {
        sc.rule = ScenarioSpec::Rule::ExplicitR;
        if (!j.contains("r_values")) throw ConfigError("scenario: explicit-r needs 'r_values'");
        for (const auto& rv : j["r_values"]) {
            Key r;
            // profile layout: covariate block (time-major) then outcome block,
            // values as grid labels
            const auto& xs = rv.at("x");
            for (const auto& row : xs)
                for (size_t p = 0; p < row.size(); ++p) {
                    const auto c = schema.x.at(p).grid.code_of(row[p].get<double>());
                    if (!c) throw ConfigError("scenario: r_values x entry off the grid");
                    r.push_back(static_cast<int16_t>(*c));
                }
            for (const auto& yv : rv.at("y")) {
                const auto c = schema.y.code_of(yv.get<double>());
                if (!c) throw ConfigError("scenario: r_values y entry off the grid");
                r.push_back(static_cast<int16_t>(*c));
            }
            sc.r_values.push_back(std::move(r));
        }
    } else {
        throw ConfigError("scenario: unknown selection rule '" + rule + "'");
    }
    sc.n_draws = j.value("n_draws", 1000);
    sc.overlap_threshold = j.value("overlap_threshold", 0.0);
    sc.force = j.value("force", false);
    sc.anchor_time = j.value("anchor_time", -1);
    if (j.contains("gap_schedule"))
        for (auto it = j["gap_schedule"].begin(); it != j["gap_schedule"].end(); ++it)
            sc.gap_schedule[std::stoi(it.key())] = it.value().get<int>();
    if (sc.n_draws < 1) throw ConfigError("scenario: n_draws must be >= 1");
    return sc;
}

// One unit's trajectory extended past the panel horizon for one draw.
// Observed cells always come from the panel; only times beyond it are
// sampled, so imputation can never overwrite data.
struct ImputedSeries {
    const Panel* panel = nullptr;
    int unit = 0;
    int observed_through = 0; // = panel horizon
    int horizon = 0;
    std::vector<std::vector<int>> x_ext; // [t - observed_through - 1][covariate]
    std::vector<int> z_ext, s_ext, y_ext;

    int n_covariates() const { return panel->n_covariates(); }
    bool time_observable(int t) const { return t >= 1 && t <= horizon; }
    bool observed(int t) const { return t <= observed_through; }

    int z(int, int t) const {
        return t <= observed_through ? panel->z(unit, t)
                                     : z_ext[static_cast<size_t>(t - observed_through - 1)];
    }
    int s(int, int t) const {
        return t <= observed_through ? panel->s(unit, t)
                                     : s_ext[static_cast<size_t>(t - observed_through - 1)];
    }
    int y(int, int t) const {
        return t <= observed_through ? panel->y(unit, t)
                                     : y_ext[static_cast<size_t>(t - observed_through - 1)];
    }
    int x(int, int t, int p) const {
        return t <= observed_through
                   ? panel->x(unit, t, p)
                   : x_ext[static_cast<size_t>(t - observed_through - 1)][static_cast<size_t>(p)];
    }
};

// Sequential forward imputation of the time-varying modifiers under the
// natural course: treatments stay at zero beyond the anchor unless a
// schedule overrides them, covariates and outcomes (and the exposure when
// modeled) are drawn from the fitted one-step kernels. One draw per call;
// variates are keyed by (seed, draw, unit, time, variable).
inline ImputedSeries impute_series(const Panel& panel, const TransitionKernels& kernels,
                                   int horizon, int draw, uint64_t seed, int unit, int min_cell,
                                   const std::map<int, int>& gap_schedule, bool impute_s) {
    ImputedSeries s;
    s.panel = &panel;
    s.unit = unit;
    s.observed_through = panel.horizon();
    s.horizon = std::max(horizon, panel.horizon());
    const int P = panel.n_covariates();
    for (int t = panel.horizon() + 1; t <= s.horizon; ++t) {
        std::vector<int> xrow(static_cast<size_t>(P), 0);
        s.x_ext.push_back(xrow);
        auto sched = gap_schedule.find(t);
        s.z_ext.push_back(sched == gap_schedule.end() ? 0 : sched->second);
        s.s_ext.push_back(0);
        s.y_ext.push_back(0);
        for (int p = 0; p < P; ++p) {
            const double u = rng::uniform_at(seed, static_cast<uint64_t>(draw),
                                             static_cast<uint64_t>(unit), static_cast<uint64_t>(t),
                                             static_cast<uint64_t>(p));
            s.x_ext.back()[static_cast<size_t>(p)] =
                kernels.x[static_cast<size_t>(p)].draw(s, unit, t, min_cell, u, "covariate");
        }
        if (impute_s) {
            const double u = rng::uniform_at(seed, static_cast<uint64_t>(draw),
                                             static_cast<uint64_t>(unit), static_cast<uint64_t>(t),
                                             static_cast<uint64_t>(P + 1));
            s.s_ext.back() = kernels.s.draw(s, unit, t, min_cell, u, "exposure");
        }
        {
            const double u = rng::uniform_at(seed, static_cast<uint64_t>(draw),
                                             static_cast<uint64_t>(unit), static_cast<uint64_t>(t),
                                             static_cast<uint64_t>(P + 2));
            s.y_ext.back() = kernels.y.draw(s, unit, t, min_cell, u, "outcome");
        }
    }
    return s;
}

// Modifier horizon required to evaluate every outcome time of the scenario.
inline int modifier_horizon(const ScenarioSpec& sc, const WindowSpec& spec, int anchor) {
    const int last_outcome = anchor + sc.future.gap + sc.future.t_out_end;
    return last_outcome - spec.b - spec.k;
}

struct OverlapReport {
    double violation_fraction = 0.0;
    long n_checked = 0;
    long n_violations = 0;
    std::vector<Key> missing_profiles; // distinct unseen profiles
};

// Support check: every imputed pre-treatment profile must already appear
// in the observed support.
inline OverlapReport check_overlap(const std::vector<Key>& profiles,
                                   const std::unordered_set<Key, KeyHash>& support) {
    OverlapReport rep;
    std::set<Key> missing;
    for (const auto& r : profiles) {
        ++rep.n_checked;
        if (!support.count(r)) {
            ++rep.n_violations;
            missing.insert(r);
        }
    }
    rep.violation_fraction =
        rep.n_checked ? static_cast<double>(rep.n_violations) / static_cast<double>(rep.n_checked)
                      : 0.0;
    rep.missing_profiles.assign(missing.begin(), missing.end());
    return rep;
}

struct ForecastOptions {
    int min_cell = 5;
    uint64_t seed = 1;
    int threads = 1;
    TransitionKernels kernels; // specs; fitted inside
    bool kernels_declared = false;
};

inline void sc_validate(const ScenarioSpec& sc, const WindowSpec& spec) {
    sc.future.validate(spec);
    if (sc.n_draws < 1) throw ConfigError("scenario: n_draws must be >= 1");
}

struct SelectedUnit {
    int unit;
    int time;
    Key r;
};

// Future unit sets per draw, with the imputed profile attached.
inline std::vector<std::vector<SelectedUnit>> select_future_units(
    const Panel& panel, const WindowSpec& spec, const ScenarioSpec& sc,
    const std::vector<std::vector<ImputedSeries>>& draws,
    const std::unordered_set<Key, KeyHash>& match_set, int anchor) {
    std::vector<std::vector<SelectedUnit>> out(draws.size());
    const int t_first = anchor + sc.future.gap + spec.l;
    const int t_last = anchor + sc.future.gap + sc.future.t_out_end;
    for (size_t d = 0; d < draws.size(); ++d) {
        for (size_t i = 0; i < draws[d].size(); ++i) {
            const ImputedSeries& series = draws[d][i];
            if (sc.rule == ScenarioSpec::Rule::FixedTime) {
                out[d].push_back({static_cast<int>(i), t_first,
                                  extract_r_key_from(series, spec, static_cast<int>(i), t_first)});
                continue;
            }
            for (int t = t_first; t <= t_last; ++t) {
                const Key r = extract_r_key_from(series, spec, static_cast<int>(i), t);
                const bool take = sc.rule == ScenarioSpec::Rule::MatchPastR
                                      ? match_set.count(r) > 0
                                      : std::find(sc.r_values.begin(), sc.r_values.end(), r) !=
                                            sc.r_values.end();
                if (take) out[d].push_back({static_cast<int>(i), t, r});
            }
        }
    }
    return out;
}

struct ForecastReport {
    EstimateReport report;
    OverlapReport overlap;
    std::vector<std::vector<ImputedSeries>> draws; // kept for downstream audits
    std::vector<std::vector<SelectedUnit>> selected;
};

// Future-window treatment effect: impute pre-treatment modifiers forward,
// select the future unit set, and contrast the two arms' observed stratum
// means on the matched profiles, averaging over units and draws.
inline ForecastReport forecast_att_f(const Panel& panel, const WindowSpec& spec,
                                     const TreatmentMapper& mapper, const ScenarioSpec& sc,
                                     const ForecastOptions& opt) {
    mapper.validate(spec);
    sc_validate(sc, spec);
    const int anchor = sc.anchor_time > 0 ? std::min(sc.anchor_time, panel.horizon())
                                          : panel.horizon();

    const FittedWindow f = fit_window_tables(panel, spec, Driver::Treatment, mapper, {}, anchor);

    TransitionKernels kernels =
        opt.kernels_declared ? opt.kernels : default_kernel_specs(panel, spec, true);
    fit_kernels(kernels, panel, anchor);

    // match-past-R target set: profiles of past treated units
    std::unordered_set<Key, KeyHash> match_set;
    if (sc.rule == ScenarioSpec::Rule::MatchPastR) {
        const auto [all, treated] = build_unit_sets(panel, spec, mapper);
        (void)all;
        for (const auto& [i, t] : treated.members) {
            if (t < spec.min_query_time() || t > anchor) continue;
            match_set.insert(extract_history(panel, spec, i, t).r_key());
        }
    }

    const int horizon = modifier_horizon(sc, spec, anchor);
    std::vector<std::vector<ImputedSeries>> draws(static_cast<size_t>(sc.n_draws));
    {
        std::vector<std::exception_ptr> errors(static_cast<size_t>(sc.n_draws));
        parallel_for(static_cast<size_t>(sc.n_draws), opt.threads, [&](size_t d) {
            try {
                auto& per_unit = draws[d];
                per_unit.reserve(static_cast<size_t>(panel.n_units()));
                for (int i = 0; i < panel.n_units(); ++i)
                    per_unit.push_back(impute_series(panel, kernels, horizon, static_cast<int>(d),
                                                     opt.seed, i, opt.min_cell, sc.gap_schedule,
                                                     panel.schema().s.size() > 1));
            } catch (...) {
                errors[d] = std::current_exception();
            }
        });
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    auto selected = select_future_units(panel, spec, sc, draws, match_set, anchor);

    // overlap on the imputed profiles
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
    if (overlap.violation_fraction > sc.overlap_threshold && !sc.force) {
        std::string names;
        for (size_t k = 0; k < overlap.missing_profiles.size() && k < 4; ++k)
            names += (k ? ", " : "") + key_to_string(overlap.missing_profiles[k]);
        throw OverlapRefusal("future profiles outside the observed support (fraction " +
                                 std::to_string(overlap.violation_fraction) + "): " + names,
                             overlap.violation_fraction);
    }

    ForecastReport out;
    out.overlap = overlap;
    EstimateReport& rep = out.report;
    rep.estimand = "ATT_F";
    rep.mode_flags["selection"] = sc.rule == ScenarioSpec::Rule::FixedTime
                                      ? "fixed-time"
                                      : (sc.rule == ScenarioSpec::Rule::MatchPastR ? "match-past-r"
                                                                                   : "explicit-r");
    rep.mode_flags["n_draws"] = sc.n_draws;
    rep.mode_flags["anchor_time"] = anchor;
    rep.mode_flags["min_cell"] = opt.min_cell;

    std::vector<double> draw_means;
    double within_var_sum = 0.0;
    long empty_draws = 0;
    json trace = json::array();
    for (size_t d = 0; d < selected.size(); ++d) {
        double sum = 0.0;
        long n = 0, dropped = 0;
        // matching errors are shared within a stratum, so variance is
        // accumulated per distinct profile, weighted by its share
        std::unordered_map<Key, long, KeyHash> stratum_n;
        for (const auto& su : selected[d]) {
            rep.n_treated++;
            const auto cell1 = stratum_cell(f, Conditioning::R, su.r, Key{1}, opt.min_cell);
            const auto cell0 = stratum_cell(f, Conditioning::R, su.r, Key{0}, opt.min_cell);
            if (!cell1 || !cell0) {
                rep.add_drop(su.unit, su.time, !cell1 ? "no-treated-match" : "no-control-match");
                ++dropped;
                continue;
            }
            sum += cell1->mean() - cell0->mean();
            ++stratum_n[su.r];
            ++n;
        }
        if (n == 0) {
            ++empty_draws;
            trace.push_back({{"draw", d}, {"n", 0}, {"dropped", dropped}});
            continue;
        }
        double var_d = 0.0;
        for (const auto& [r, nr] : stratum_n) {
            const double w = static_cast<double>(nr) / static_cast<double>(n);
            const auto cell1 = stratum_cell(f, Conditioning::R, r, Key{1}, opt.min_cell);
            const auto cell0 = stratum_cell(f, Conditioning::R, r, Key{0}, opt.min_cell);
            var_d += w * w * (cell1->mean_var() + cell0->mean_var());
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

    if (draw_means.empty())
        throw EstimationError("forecast: every draw was empty or fully dropped; dominant reason: " +
                              rep.dominant_drop_reason());

    const double nd = static_cast<double>(draw_means.size());
    rep.value = rng::pairwise_sum(draw_means) / nd;
    double across = 0.0;
    for (double v : draw_means) across += (v - rep.value) * (v - rep.value);
    across = draw_means.size() > 1 ? across / (nd - 1.0) / nd : 0.0;
    // matching error is shared across draws (same fitted strata), so it is
    // averaged, not divided by the draw count
    const double within = within_var_sum / nd;
    rep.se_imputation = std::sqrt(within);
    rep.se = std::sqrt(across + within);
    rep.mc_se = std::sqrt(across);

    out.selected = std::move(selected);
    out.draws = std::move(draws);
    return out;
}

} // namespace gfc
