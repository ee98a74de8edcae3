#pragma once

// Small structural models shared across the test suites.

#include <nlohmann/json.hpp>

#include "gfc/dgp.hpp"
#include "gfc/tables.hpp"

namespace gfc::test {

using nlohmann::ordered_json;

// Everything deterministic; the panel must equal the table constants.
inline Dgp point_mass_dgp() {
    ordered_json j = ordered_json::parse(R"({
      "name": "point-mass",
      "grids": {
        "s": {"levels": [0, 1]},
        "y": {"levels": [0, 1]},
        "x": [{"name": "x1", "levels": [0, 1]}]
      },
      "equations": {
        "x1": {"parents": [], "table": [[0, 1]]},
        "z":  {"parents": [], "table": [[0, 1]]},
        "s":  {"parents": [], "table": [[1, 0]]},
        "y":  {"parents": [["x1", 0]], "table": [[1, 0], [0, 1]]}
      },
      "initial": {},
      "flags": {"time_dependent_confounding": "on"}
    })");
    return dgp_from_json(j);
}

// Binary x/y with policy responding to outcomes and covariates mediating the
// policy effect: x_t <- z_{t-1}, z_t <- (x_t, y_{t-1}), y_t <- (z_{t-1}, x_t).
// One-day rule at L=1 with B=0, K=1 keeps the outcome's treatment ancestry
// inside the window.
inline Dgp tiny_tdc_dgp() {
    ordered_json j = ordered_json::parse(R"({
      "name": "tiny-tdc",
      "grids": {
        "s": {"levels": [0]},
        "y": {"levels": [0, 1]},
        "x": [{"name": "x1", "levels": [0, 1]}]
      },
      "equations": {
        "x1": {"parents": [["z", 1]], "table": [[0.3, 0.7], [0.8, 0.2]]},
        "z":  {"parents": [["x1", 0], ["y", 1]],
               "table": [[0.85, 0.15], [0.6, 0.4], [0.65, 0.35], [0.35, 0.65]]},
        "y":  {"parents": [["z", 1], ["x1", 0]],
               "table": [[0.75, 0.25], [0.45, 0.55], [0.85, 0.15], [0.6, 0.4]]}
      },
      "initial": {"z": 0, "y": 0},
      "flags": {"time_dependent_confounding": "on"}
    })");
    return dgp_from_json(j);
}

// Outcome ignores z entirely; assignment still responds to covariates.
inline Dgp null_effect_small_dgp() {
    ordered_json j = ordered_json::parse(R"({
      "name": "null-small",
      "grids": {
        "s": {"levels": [0]},
        "y": {"levels": [0, 1]},
        "x": [{"name": "x1", "levels": [0, 1]}]
      },
      "equations": {
        "x1": {"parents": [["x1", 1]], "table": [[0.7, 0.3], [0.4, 0.6]]},
        "z":  {"parents": [["x1", 0]], "table": [[0.8, 0.2], [0.5, 0.5]]},
        "y":  {"parents": [["x1", 0]], "table": [[0.8, 0.2], [0.5, 0.5]]}
      },
      "initial": {"x1": 0},
      "flags": {"time_dependent_confounding": "off"}
    })");
    return dgp_from_json(j);
}

// Ternary exposure with a monotone outcome table in both window coordinates.
// x is autonomous so exposure-response laws given R are exact.
inline Dgp monotone_exposure_dgp() {
    ordered_json j = ordered_json::parse(R"({
      "name": "monotone-exposure",
      "grids": {
        "s": {"levels": [0, 1, 2]},
        "y": {"levels": [0, 1]},
        "x": [{"name": "x1", "levels": [0, 1]}]
      },
      "equations": {
        "x1": {"parents": [["x1", 1]], "table": [[0.7, 0.3], [0.3, 0.7]]},
        "s":  {"parents": [["x1", 0], ["y", 1]],
               "table": [[0.5, 0.3, 0.2], [0.3, 0.4, 0.3], [0.4, 0.4, 0.2], [0.2, 0.4, 0.4]]},
        "y":  {"parents": [["s", 0], ["s", 1], ["x1", 0]], "table": []}
      },
      "initial": {"y": 0, "s": 0, "x1": 0},
      "flags": {"time_dependent_confounding": "on"}
    })");
    // y | s_t, s_{t-1}, x_t : P(y=1) = 0.05 + 0.15 s_t + 0.10 s_{t-1} + 0.15 x
    ordered_json rows = ordered_json::array();
    for (int st = 0; st < 3; ++st)
        for (int sl = 0; sl < 3; ++sl)
            for (int x = 0; x < 2; ++x) {
                const double p1 = 0.05 + 0.15 * st + 0.10 * sl + 0.15 * x;
                rows.push_back(ordered_json::array({1.0 - p1, p1}));
            }
    j["equations"]["y"]["table"] = rows;
    return dgp_from_json(j);
}

// Real treatment effect mediated by nothing treatment-driven: covariates are
// autonomous and assignment ignores outcomes, so both the [R,V]-adjustment
// and the nested-sum route identify the same contrast. Geometry B=1, K=2,
// one-day rule at L=2.
inline Dgp no_tdc_effect_dgp() {
    ordered_json j = ordered_json::parse(R"({
      "name": "no-tdc-effect",
      "grids": {
        "s": {"levels": [0]},
        "y": {"levels": [0, 1]},
        "x": [{"name": "x1", "levels": [0, 1]}]
      },
      "equations": {
        "x1": {"parents": [["x1", 1]], "table": [[0.7, 0.3], [0.35, 0.65]]},
        "z":  {"parents": [["x1", 0]], "table": [[0.85, 0.15], [0.55, 0.45]]},
        "y":  {"parents": [["z", 2], ["x1", 1]],
               "table": [[0.8, 0.2], [0.55, 0.45], [0.9, 0.1], [0.7, 0.3]]}
      },
      "initial": {"x1": 0, "z": 0, "y": 0},
      "flags": {"time_dependent_confounding": "off"}
    })");
    return dgp_from_json(j);
}

// Declared factor conditioning for a single-covariate model.
inline WindowStructure make_structure(std::vector<VarRef> y_parents,
                                      std::vector<VarRef> x1_parents) {
    WindowStructure st;
    st.maximal = false;
    st.y_parents = std::move(y_parents);
    st.x_parents = {std::move(x1_parents)};
    return st;
}

} // namespace gfc::test
