#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfc/error.hpp"
#include "gfc/grid.hpp"

namespace gfc {

// Variable codes inside a structural model. Covariates are 0..P-1; the
// special columns and latents get reserved ranges.
namespace var {
inline constexpr int kZ = 1000;
inline constexpr int kS = 1001;
inline constexpr int kY = 1002;
inline constexpr int kLatentBase = 2000;
inline bool is_latent(int v) { return v >= kLatentBase; }
inline bool is_covariate(int v) { return v >= 0 && v < kZ; }
} // namespace var

struct VarRef {
    int var = 0;
    int lag = 0; // 0 = same time step (must respect within-step order)
};

// One conditional table: rows indexed by the odometer over parent values
// (first parent most significant), each row a distribution over the child's
// levels.
struct Equation {
    std::vector<VarRef> parents;
    std::vector<std::vector<double>> table;

    size_t row_index(const std::vector<int>& parent_values,
                     const std::vector<int>& parent_cards) const {
        size_t idx = 0;
        for (size_t j = 0; j < parent_values.size(); ++j)
            idx = idx * static_cast<size_t>(parent_cards[j]) + static_cast<size_t>(parent_values[j]);
        return idx;
    }
};

struct LatentSpec {
    enum class Kind { UnitStatic, Drift };
    std::string name;
    Kind kind = Kind::UnitStatic;
    std::vector<double> probs; // UnitStatic: distribution over levels
    int tau = 0;               // Drift: value = low for t < tau, high for t >= tau
    int low = 0, high = 1;

    int levels() const {
        if (kind == Kind::UnitStatic) return static_cast<int>(probs.size());
        return std::max(low, high) + 1;
    }
};

// Structural data-generating process on the declared grids. Within a time
// step variables resolve in causal order x_1..x_P, z, s, y; covariates for
// time t are realized before the treatment/exposure at t, and the outcome
// last.
struct Dgp {
    std::string name;
    Schema schema;
    bool models_z = false; // otherwise z stays 0
    bool models_s = false; // otherwise s stays at level 0
    std::vector<Equation> x_eq; // one per covariate
    Equation z_eq, s_eq, y_eq;
    std::vector<LatentSpec> latents;
    std::map<int, int> initial; // pre-sample constant per var code
    std::string tdc_flag = "off";
    json drift_flag; // "none" or {"shift_at": tau, ...}

    int n_covariates() const { return schema.n_covariates(); }

    int cardinality(int v) const {
        if (var::is_latent(v)) return latents.at(static_cast<size_t>(v - var::kLatentBase)).levels();
        if (v == var::kZ) return 2;
        if (v == var::kS) return schema.s.size();
        if (v == var::kY) return schema.y.size();
        return schema.x.at(static_cast<size_t>(v)).grid.size();
    }

    // Rank in the within-step causal order; latents resolve before everything.
    int order_rank(int v) const {
        if (var::is_latent(v)) return -1;
        if (var::is_covariate(v)) return v;
        const int p = n_covariates();
        if (v == var::kZ) return p;
        if (v == var::kS) return p + 1;
        return p + 2; // y
    }

    const Equation& equation_for(int v) const {
        if (var::is_covariate(v)) return x_eq.at(static_cast<size_t>(v));
        if (v == var::kZ) return z_eq;
        if (v == var::kS) return s_eq;
        if (v == var::kY) return y_eq;
        throw ConfigError("no equation for latent variables");
    }

    int initial_value(int v) const {
        auto it = initial.find(v);
        return it == initial.end() ? 0 : it->second;
    }

    int max_parent_lag(int v) const {
        int m = 0;
        for (const auto& pr : equation_for(v).parents) m = std::max(m, pr.lag);
        return m;
    }

    // Deepest lag at which `v` appears as a parent anywhere in the model.
    int max_lag_as_parent(int v) const {
        int m = 0;
        auto scan = [&](const Equation& eq) {
            for (const auto& pr : eq.parents)
                if (pr.var == v) m = std::max(m, pr.lag);
        };
        for (const auto& eq : x_eq) scan(eq);
        if (models_z) scan(z_eq);
        if (models_s) scan(s_eq);
        scan(y_eq);
        return m;
    }

    void validate() const {
        auto check_eq = [&](int v, const Equation& eq, const std::string& label) {
            size_t rows = 1;
            std::vector<int> cards;
            for (const auto& pr : eq.parents) {
                if (!var::is_latent(pr.var) && pr.lag == 0 && order_rank(pr.var) >= order_rank(v))
                    throw ConfigError("dgp '" + name + "': equation " + label +
                                      " has a lag-0 parent that is not earlier in the causal order");
                if (pr.lag < 0) throw ConfigError("dgp: negative lag in " + label);
                cards.push_back(cardinality(pr.var));
                rows *= static_cast<size_t>(cards.back());
            }
            if (eq.table.size() != rows)
                throw ConfigError("dgp '" + name + "': equation " + label + " needs " +
                                  std::to_string(rows) + " rows, has " + std::to_string(eq.table.size()));
            for (const auto& row : eq.table) {
                if (static_cast<int>(row.size()) != cardinality(v))
                    throw ConfigError("dgp '" + name + "': equation " + label + " row width mismatch");
                double sum = 0.0;
                for (double p : row) {
                    if (p < 0.0) throw ConfigError("dgp: negative probability in " + label);
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw ConfigError("dgp '" + name + "': a row of " + label +
                                      " sums to " + std::to_string(sum) + ", not 1");
            }
        };
        for (int p = 0; p < n_covariates(); ++p)
            check_eq(p, x_eq.at(static_cast<size_t>(p)), "x" + std::to_string(p + 1));
        if (models_z) check_eq(var::kZ, z_eq, "z");
        if (models_s) check_eq(var::kS, s_eq, "s");
        check_eq(var::kY, y_eq, "y");

        for (const auto& l : latents) {
            if (l.kind == LatentSpec::Kind::UnitStatic) {
                double sum = 0.0;
                for (double p : l.probs) sum += p;
                if (l.probs.empty() || std::abs(sum - 1.0) > 1e-12)
                    throw ConfigError("dgp: latent '" + l.name + "' needs probs summing to 1");
            }
        }

        if (tdc_flag == "off") {
            // Structural meaning of the flag: covariate transitions ignore
            // treatment/exposure history and the assignment model ignores
            // outcome history.
            for (int p = 0; p < n_covariates(); ++p)
                for (const auto& pr : x_eq[static_cast<size_t>(p)].parents)
                    if (pr.var == var::kZ || pr.var == var::kS)
                        throw ConfigError("dgp '" + name +
                                          "': tdc flag is off but a covariate equation reads treatment/exposure");
            if (models_z)
                for (const auto& pr : z_eq.parents)
                    if (pr.var == var::kY)
                        throw ConfigError("dgp '" + name +
                                          "': tdc flag is off but the assignment model reads outcomes");
            if (models_s)
                for (const auto& pr : s_eq.parents)
                    if (pr.var == var::kY)
                        throw ConfigError("dgp '" + name +
                                          "': tdc flag is off but the exposure model reads outcomes");
        } else if (tdc_flag != "on") {
            throw ConfigError("dgp: time_dependent_confounding must be 'on' or 'off'");
        }

        const bool wants_drift = drift_flag.is_object();
        bool has_drift = false;
        for (const auto& l : latents) has_drift = has_drift || l.kind == LatentSpec::Kind::Drift;
        if (wants_drift != has_drift)
            throw ConfigError("dgp '" + name + "': modifier_drift flag and drift latents disagree");
    }
};

namespace detail {

inline int var_code_from_name(const Dgp& d, const std::string& nm) {
    if (nm == "z") return var::kZ;
    if (nm == "s") return var::kS;
    if (nm == "y") return var::kY;
    for (int p = 0; p < d.n_covariates(); ++p) {
        if (d.schema.x[static_cast<size_t>(p)].name == nm || nm == "x" + std::to_string(p + 1))
            return p;
    }
    for (size_t j = 0; j < d.latents.size(); ++j)
        if (d.latents[j].name == nm) return var::kLatentBase + static_cast<int>(j);
    throw ConfigError("dgp: unknown variable '" + nm + "' in a parent reference");
}

inline Equation equation_from_json(const Dgp& d, const json& j, const std::string& label) {
    Equation eq;
    if (j.contains("parents"))
        for (const auto& pr : j["parents"]) {
            if (!pr.is_array() || pr.size() != 2)
                throw ConfigError("dgp: parent of " + label + " must be [name, lag]");
            eq.parents.push_back({var_code_from_name(d, pr[0].get<std::string>()), pr[1].get<int>()});
        }
    if (!j.contains("table")) throw ConfigError("dgp: equation " + label + " missing 'table'");
    for (const auto& row : j["table"]) {
        std::vector<double> r;
        for (const auto& v : row) r.push_back(v.get<double>());
        eq.table.push_back(std::move(r));
    }
    return eq;
}

} // namespace detail

inline Dgp dgp_from_json(const json& j) {
    Dgp d;
    d.name = j.contains("name") ? j["name"].get<std::string>() : "unnamed";
    if (!j.contains("grids")) throw ConfigError("dgp: missing 'grids'");
    const auto& g = j["grids"];
    d.schema.s = g.contains("s") ? grid_from_json(g["s"], "dgp.s") : ValueGrid::indexed(1);
    if (!g.contains("y")) throw ConfigError("dgp: grids.y is required");
    d.schema.y = grid_from_json(g["y"], "dgp.y");
    if (g.contains("x")) {
        int p = 1;
        for (const auto& cj : g["x"]) {
            CovariateSpec c;
            c.name = cj.contains("name") ? cj["name"].get<std::string>() : ("x_" + std::to_string(p));
            c.grid = grid_from_json(cj, "dgp.x[" + std::to_string(p) + "]");
            d.schema.x.push_back(std::move(c));
            ++p;
        }
    }

    if (j.contains("latents"))
        for (const auto& lj : j["latents"]) {
            LatentSpec l;
            l.name = lj.at("name").get<std::string>();
            const std::string kind = lj.at("kind").get<std::string>();
            if (kind == "unit-static") {
                l.kind = LatentSpec::Kind::UnitStatic;
                for (const auto& p : lj.at("probs")) l.probs.push_back(p.get<double>());
            } else if (kind == "drift") {
                l.kind = LatentSpec::Kind::Drift;
                l.tau = lj.at("tau").get<int>();
                l.low = lj.contains("low") ? lj["low"].get<int>() : 0;
                l.high = lj.contains("high") ? lj["high"].get<int>() : 1;
            } else {
                throw ConfigError("dgp: latent kind must be 'unit-static' or 'drift'");
            }
            d.latents.push_back(std::move(l));
        }

    if (!j.contains("equations")) throw ConfigError("dgp: missing 'equations'");
    const auto& eqs = j["equations"];
    for (int p = 0; p < d.n_covariates(); ++p) {
        const std::string key1 = d.schema.x[static_cast<size_t>(p)].name;
        const std::string key2 = "x" + std::to_string(p + 1);
        const json* ej = eqs.contains(key1) ? &eqs[key1] : (eqs.contains(key2) ? &eqs[key2] : nullptr);
        if (!ej) throw ConfigError("dgp: missing equation for covariate '" + key1 + "'");
        d.x_eq.push_back(detail::equation_from_json(d, *ej, key1));
    }
    d.models_z = eqs.contains("z");
    if (d.models_z) d.z_eq = detail::equation_from_json(d, eqs["z"], "z");
    d.models_s = eqs.contains("s");
    if (d.models_s) d.s_eq = detail::equation_from_json(d, eqs["s"], "s");
    if (!eqs.contains("y")) throw ConfigError("dgp: missing outcome equation 'y'");
    d.y_eq = detail::equation_from_json(d, eqs["y"], "y");

    if (j.contains("initial"))
        for (auto it = j["initial"].begin(); it != j["initial"].end(); ++it)
            d.initial[detail::var_code_from_name(d, it.key())] = it.value().get<int>();

    if (j.contains("flags")) {
        const auto& f = j["flags"];
        if (f.contains("time_dependent_confounding"))
            d.tdc_flag = f["time_dependent_confounding"].get<std::string>();
        if (f.contains("modifier_drift") && !f["modifier_drift"].is_string())
            d.drift_flag = f["modifier_drift"];
    }

    d.validate();
    return d;
}

inline Dgp dgp_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dgp config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("dgp config " + path + ": " + e.what());
    }
    return dgp_from_json(j);
}

} // namespace gfc
