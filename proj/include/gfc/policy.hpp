#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfc/dgp.hpp"
#include "gfc/error.hpp"
#include "gfc/grid.hpp"
#include "gfc/key.hpp"
#include "gfc/window.hpp"

namespace gfc {

// Hypothetical exposure interventions. Grid exposures make every integral
// an exact sum over window vectors.
//   point-mass       : all window exposures pinned to s*
//   truncate-below   : natural law conditioned on s < s* (componentwise),
//                      renormalized per stratum
//   explicit-table   : a supplied law over window vectors
//   natural          : the status-quo law itself (null intervention)
//   dynamic-conditional : one-step kernel p*(s_l | lagged s, x, y)
struct ExposurePolicy {
    enum class Kind { PointMass, TruncateBelow, ExplicitTable, Natural, DynamicConditional };
    Kind kind = Kind::Natural;
    std::vector<int> s_star;  // point-mass pattern, oldest first, level codes
    int threshold_code = 0;   // truncate-below: keep windows with every entry < this code
    std::unordered_map<Key, double, KeyHash> table; // explicit law
    Equation dynamic;         // dynamic-conditional kernel (parents reference s/x/y)

    bool window_below_threshold(const Key& w) const {
        for (auto v : w)
            if (v >= threshold_code) return false;
        return true;
    }

    std::string kind_name() const {
        switch (kind) {
            case Kind::PointMass: return "point-mass";
            case Kind::TruncateBelow: return "truncate-below";
            case Kind::ExplicitTable: return "explicit-table";
            case Kind::Natural: return "natural";
            case Kind::DynamicConditional: return "dynamic-conditional";
        }
        return "?";
    }
};

// Which observed unit-times the exposure effect averages over.
struct ExposedSelection {
    enum class Rule { All, AnyAtOrAbove, AllBelow };
    Rule rule = Rule::All;
    int threshold_code = 0;

    bool selects(const Key& s_window) const {
        switch (rule) {
            case Rule::All: return true;
            case Rule::AnyAtOrAbove:
                for (auto v : s_window)
                    if (v >= threshold_code) return true;
                return false;
            case Rule::AllBelow:
                for (auto v : s_window)
                    if (v >= threshold_code) return false;
                return true;
        }
        return true;
    }
};


// `context` supplies variable name resolution for dynamic kernels.
inline ExposurePolicy policy_from_json(const json& j, const Schema& schema, const WindowSpec& spec,
                                       const Dgp* context = nullptr) {
    ExposurePolicy p;
    if (!j.contains("kind")) throw ConfigError("policy: missing 'kind'");
    const std::string kind = j["kind"].get<std::string>();
    const int wlen = spec.k + 1;

    auto code_for = [&](double raw, const std::string& where) {
        const auto c = schema.s.code_of(raw);
        if (!c) throw ConfigError("policy." + where + ": value off the exposure grid");
        return *c;
    };

    if (kind == "point-mass") {
        p.kind = ExposurePolicy::Kind::PointMass;
        if (!j.contains("s_star")) throw ConfigError("policy: point-mass needs 's_star'");
        if (j["s_star"].is_array()) {
            for (const auto& v : j["s_star"]) p.s_star.push_back(code_for(v.get<double>(), "s_star"));
            if (static_cast<int>(p.s_star.size()) != wlen)
                throw ConfigError("policy: s_star must have K+1 entries");
        } else {
            p.s_star.assign(static_cast<size_t>(wlen), code_for(j["s_star"].get<double>(), "s_star"));
        }
    } else if (kind == "truncate-below") {
        p.kind = ExposurePolicy::Kind::TruncateBelow;
        if (!j.contains("s_star")) throw ConfigError("policy: truncate-below needs 's_star'");
        const double raw = j["s_star"].get<double>();
        // threshold itself need not be a grid level; count levels strictly below
        int code = 0;
        while (code < schema.s.size() && schema.s.value(code) < raw) ++code;
        if (code == 0) throw ConfigError("policy: no exposure level lies below the threshold");
        p.threshold_code = code;
    } else if (kind == "explicit-table") {
        p.kind = ExposurePolicy::Kind::ExplicitTable;
        if (!j.contains("table")) throw ConfigError("policy: explicit-table needs 'table'");
        double total = 0.0;
        for (const auto& entry : j["table"]) {
            Key w;
            for (const auto& v : entry.at("s")) w.push_back(static_cast<int16_t>(code_for(v.get<double>(), "table.s")));
            if (static_cast<int>(w.size()) != wlen)
                throw ConfigError("policy: table entries must have K+1 exposures");
            const double prob = entry.at("p").get<double>();
            if (prob < 0) throw ConfigError("policy: negative table probability");
            p.table[w] += prob;
            total += prob;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ConfigError("policy: explicit table must sum to 1");
    } else if (kind == "natural") {
        p.kind = ExposurePolicy::Kind::Natural;
    } else if (kind == "dynamic-conditional") {
        p.kind = ExposurePolicy::Kind::DynamicConditional;
        if (!context)
            throw ConfigError("policy: dynamic-conditional needs a dgp context for parent names");
        p.dynamic = detail::equation_from_json(*context, j.at("dynamic"), "policy.dynamic");
        for (const auto& pr : p.dynamic.parents)
            if (pr.lag == 0 && pr.var != var::kS && !var::is_covariate(pr.var))
                throw ConfigError("policy: dynamic kernel lag-0 parents must be covariates");
        for (const auto& row : p.dynamic.table)
            if (static_cast<int>(row.size()) != schema.s.size())
                throw ConfigError("policy: dynamic kernel rows must match the exposure grid");
    } else {
        throw ConfigError("policy: unknown kind '" + kind + "'");
    }
    return p;
}

} // namespace gfc
