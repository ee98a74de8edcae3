#pragma once

#include <cstdio>
#include <sstream>
#include <string>

#include "gfc/estimate.hpp"
#include "gfc/forecast.hpp"

namespace gfc {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline json report_to_json(const EstimateReport& rep) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["estimand"] = rep.estimand;
    j["value"] = rep.value;
    j["mc_se"] = rep.se; // total sampling/Monte-Carlo SE of the estimate
    j["se_components"] = {{"imputation", rep.se_imputation}, {"draws", rep.mc_se}};
    j["attributable"] = rep.attributable;
    j["n_candidates"] = rep.n_treated;
    j["n_used"] = rep.n_used;
    j["n_dropped"] = rep.n_treated - rep.n_used;
    j["drop_reasons"] = rep.drop_counts;
    j["mode"] = rep.mode_flags;
    if (rep.tdc_dependence > 0 || rep.tdc_suspected) {
        j["tdc_suspected"] = rep.tdc_suspected;
        j["tdc_dependence"] = rep.tdc_dependence;
    }
    if (!rep.extra.is_null()) j["detail"] = rep.extra;
    return j;
}

// Flat per-unit contributions, one row per retained unit-time.
inline std::string per_unit_csv(const EstimateReport& rep) {
    std::ostringstream oss;
    oss << "unit,time,stratum,y_obs,imputed,contrast\n";
    for (const auto& u : rep.per_unit) {
        oss << u.unit << "," << u.time << "," << key_to_string(u.stratum) << ","
            << format_double(u.y_obs) << "," << format_double(u.imputed0) << ","
            << format_double(u.contrast) << "\n";
    }
    return oss.str();
}

// Plot-friendly series: estimate against the oracle when one is available.
inline std::string plot_data_csv(const EstimateReport& rep,
                                 const std::vector<std::pair<std::string, double>>& oracle_rows) {
    std::ostringstream oss;
    oss << "series,label,value\n";
    oss << "estimate," << rep.estimand << "," << format_double(rep.value) << "\n";
    oss << "se," << rep.estimand << "," << format_double(rep.se) << "\n";
    for (const auto& [label, v] : oracle_rows)
        oss << "oracle," << label << "," << format_double(v) << "\n";
    return oss.str();
}

} // namespace gfc
