#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfc/error.hpp"
#include "gfc/version.hpp"

namespace gfc {

using json = nlohmann::ordered_json;

// Finite declared grid for one variable. Values are stored internally as
// level codes 0..size-1; `levels` carries the external numeric labels.
// When `bin_edges` is present (size levels+1, increasing), raw continuous
// inputs are binned at ingestion and the edges stay recorded in the schema.
struct ValueGrid {
    std::vector<double> levels;
    std::vector<double> bin_edges;

    int size() const { return static_cast<int>(levels.size()); }
    double value(int code) const { return levels.at(static_cast<size_t>(code)); }

    // Exact label match first so written panels re-ingest to the same codes;
    // binning only catches raw continuous inputs.
    std::optional<int> code_of(double raw) const {
        for (size_t k = 0; k < levels.size(); ++k) {
            if (raw == levels[k]) return static_cast<int>(k);
        }
        if (!bin_edges.empty()) {
            if (raw < bin_edges.front() || raw > bin_edges.back()) return std::nullopt;
            for (size_t k = 0; k + 1 < bin_edges.size(); ++k) {
                if (raw < bin_edges[k + 1] || k + 2 == bin_edges.size()) return static_cast<int>(k);
            }
        }
        return std::nullopt;
    }

    static ValueGrid binary() { return ValueGrid{{0.0, 1.0}, {}}; }
    static ValueGrid indexed(int n) {
        ValueGrid g;
        for (int k = 0; k < n; ++k) g.levels.push_back(static_cast<double>(k));
        return g;
    }
};

struct CovariateSpec {
    std::string name;
    ValueGrid grid;
};

// Declared grids for every panel column. z is always binary.
struct Schema {
    ValueGrid z = ValueGrid::binary();
    ValueGrid s;
    ValueGrid y;
    std::vector<CovariateSpec> x;

    int n_covariates() const { return static_cast<int>(x.size()); }

    const ValueGrid& grid_for(char col, int p = 0) const {
        switch (col) {
            case 'z': return z;
            case 's': return s;
            case 'y': return y;
            case 'x': return x.at(static_cast<size_t>(p)).grid;
        }
        throw ConfigError("unknown column kind");
    }
};

inline json grid_to_json(const ValueGrid& g) {
    json j;
    j["levels"] = g.levels;
    if (!g.bin_edges.empty()) j["bin_edges"] = g.bin_edges;
    return j;
}

inline ValueGrid grid_from_json(const json& j, const std::string& where) {
    ValueGrid g;
    if (!j.contains("levels") || !j["levels"].is_array() || j["levels"].empty())
        throw ConfigError(where + ": grid needs a non-empty 'levels' array");
    for (const auto& v : j["levels"]) g.levels.push_back(v.get<double>());
    if (j.contains("bin_edges")) {
        for (const auto& v : j["bin_edges"]) g.bin_edges.push_back(v.get<double>());
        if (g.bin_edges.size() != g.levels.size() + 1)
            throw ConfigError(where + ": bin_edges must have levels+1 entries");
        for (size_t k = 0; k + 1 < g.bin_edges.size(); ++k)
            if (!(g.bin_edges[k] < g.bin_edges[k + 1]))
                throw ConfigError(where + ": bin_edges must be strictly increasing");
    }
    return g;
}

inline json schema_to_json(const Schema& sc) {
    json j;
    j["schema_version"] = kSchemaVersion;
    j["columns"]["z"] = grid_to_json(sc.z);
    j["columns"]["s"] = grid_to_json(sc.s);
    j["columns"]["y"] = grid_to_json(sc.y);
    j["columns"]["x"] = json::array();
    for (const auto& c : sc.x) {
        json cj = grid_to_json(c.grid);
        cj["name"] = c.name;
        j["columns"]["x"].push_back(cj);
    }
    return j;
}

inline Schema schema_from_json(const json& j) {
    Schema sc;
    if (!j.contains("columns")) throw ConfigError("schema: missing 'columns'");
    const auto& cols = j["columns"];
    if (cols.contains("z")) {
        sc.z = grid_from_json(cols["z"], "schema.z");
        if (sc.z.levels != std::vector<double>{0.0, 1.0})
            throw ConfigError("schema.z: treatment grid must be {0,1}");
    }
    if (!cols.contains("s") || !cols.contains("y"))
        throw ConfigError("schema: 's' and 'y' grids are required");
    sc.s = grid_from_json(cols["s"], "schema.s");
    sc.y = grid_from_json(cols["y"], "schema.y");
    if (cols.contains("x")) {
        int p = 1;
        for (const auto& cj : cols["x"]) {
            CovariateSpec c;
            c.name = cj.contains("name") ? cj["name"].get<std::string>() : ("x_" + std::to_string(p));
            c.grid = grid_from_json(cj, "schema.x[" + std::to_string(p) + "]");
            sc.x.push_back(std::move(c));
            ++p;
        }
    }
    return sc;
}

} // namespace gfc
