#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gfc/error.hpp"
#include "gfc/grid.hpp"

namespace gfc {

// Rectangular unit x time panel on declared finite grids. All cells inside
// [1, T] are observed; values are stored as level codes. Immutable after
// construction, safe for concurrent reads.
class Panel {
public:
    Panel(Schema schema, std::vector<std::string> units, int horizon)
        : schema_(std::move(schema)),
          units_(std::move(units)),
          horizon_(horizon),
          z_(cells(), 0),
          s_(cells(), 0),
          y_(cells(), 0),
          x_(cells() * static_cast<size_t>(schema_.n_covariates()), 0) {
        if (horizon_ < 1) throw ConfigError("panel horizon must be >= 1");
        if (units_.empty()) throw ConfigError("panel needs at least one unit");
    }

    const Schema& schema() const { return schema_; }
    const std::vector<std::string>& units() const { return units_; }
    int n_units() const { return static_cast<int>(units_.size()); }
    int horizon() const { return horizon_; }
    int n_covariates() const { return schema_.n_covariates(); }

    bool in_range(int t) const { return t >= 1 && t <= horizon_; }
    // every in-range cell is observed by construction; imputed future
    // extensions carry their own provenance (see forecast machinery)
    bool observed(int /*i*/, int t) const { return in_range(t); }

    // t is 1-based throughout.
    int z(int i, int t) const { return z_[idx(i, t)]; }
    int s(int i, int t) const { return s_[idx(i, t)]; }
    int y(int i, int t) const { return y_[idx(i, t)]; }
    int x(int i, int t, int p) const { return x_[idx(i, t) * static_cast<size_t>(n_covariates()) + static_cast<size_t>(p)]; }

    double y_value(int i, int t) const { return schema_.y.value(y(i, t)); }
    double s_value(int i, int t) const { return schema_.s.value(s(i, t)); }

    void set_z(int i, int t, int code) { z_[idx(i, t)] = static_cast<int16_t>(code); }
    void set_s(int i, int t, int code) { s_[idx(i, t)] = static_cast<int16_t>(code); }
    void set_y(int i, int t, int code) { y_[idx(i, t)] = static_cast<int16_t>(code); }
    void set_x(int i, int t, int p, int code) {
        x_[idx(i, t) * static_cast<size_t>(n_covariates()) + static_cast<size_t>(p)] = static_cast<int16_t>(code);
    }

    bool operator==(const Panel& other) const {
        return units_ == other.units_ && horizon_ == other.horizon_ && z_ == other.z_ &&
               s_ == other.s_ && y_ == other.y_ && x_ == other.x_;
    }

private:
    size_t cells() const { return units_.size() * static_cast<size_t>(horizon_); }
    size_t idx(int i, int t) const {
        return static_cast<size_t>(i) * static_cast<size_t>(horizon_) + static_cast<size_t>(t - 1);
    }

    Schema schema_;
    std::vector<std::string> units_;
    int horizon_;
    std::vector<int16_t> z_, s_, y_;
    std::vector<int16_t> x_;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_number(const std::string& tok, int line_no, const std::string& col) {
    try {
        size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("csv line " + std::to_string(line_no) + ": column '" + col +
                          "' is not a number: '" + tok + "'");
    }
}

inline std::string format_value(double v) {
    char buf[40];
    if (v == static_cast<long long>(v) && std::abs(v) < 1e15) {
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(v));
    } else {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
    }
    return buf;
}

} // namespace detail

// Long format, one row per (unit, time):
//   unit,time,z,s,y,x_1,...,x_P
// Times must be exactly 1..T per unit; duplicates, gaps and off-grid values
// are rejected with the offending line named.
inline Panel ingest_csv(std::istream& in, const Schema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("csv: empty file");
    const auto header = detail::split_csv_line(line);
    const int P = schema.n_covariates();
    std::vector<std::string> expected = {"unit", "time", "z", "s", "y"};
    for (int p = 1; p <= P; ++p) expected.push_back("x_" + std::to_string(p));
    if (header != expected) {
        std::string want;
        for (size_t k = 0; k < expected.size(); ++k) want += (k ? "," : "") + expected[k];
        throw ConfigError("csv: bad header, expected '" + want + "'");
    }

    struct Row {
        int t;
        int z, s, y;
        std::vector<int> x;
    };
    std::vector<std::string> unit_order;
    std::map<std::string, std::map<int, Row>> rows;

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto tok = detail::split_csv_line(line);
        if (static_cast<int>(tok.size()) != 5 + P)
            throw ConfigError("csv line " + std::to_string(line_no) + ": expected " +
                              std::to_string(5 + P) + " fields, got " + std::to_string(tok.size()));
        const std::string& unit = tok[0];
        const double t_raw = detail::parse_number(tok[1], line_no, "time");
        const int t = static_cast<int>(t_raw);
        if (t_raw != t || t < 1)
            throw ConfigError("csv line " + std::to_string(line_no) + ": time must be a positive integer");

        auto code = [&](const ValueGrid& g, const std::string& tokv, const std::string& col) {
            const double raw = detail::parse_number(tokv, line_no, col);
            const auto c = g.code_of(raw);
            if (!c)
                throw ConfigError("csv line " + std::to_string(line_no) + ": value " + tokv +
                                  " for column '" + col + "' is off the declared grid");
            return *c;
        };
        Row r;
        r.t = t;
        r.z = code(schema.z, tok[2], "z");
        r.s = code(schema.s, tok[3], "s");
        r.y = code(schema.y, tok[4], "y");
        for (int p = 0; p < P; ++p)
            r.x.push_back(code(schema.x[static_cast<size_t>(p)].grid, tok[static_cast<size_t>(5 + p)],
                               "x_" + std::to_string(p + 1)));

        if (!rows.count(unit)) unit_order.push_back(unit);
        auto& per_unit = rows[unit];
        if (per_unit.count(t))
            throw ConfigError("csv line " + std::to_string(line_no) + ": duplicate (unit,time) = (" +
                              unit + "," + std::to_string(t) + ")");
        per_unit[t] = std::move(r);
    }
    if (rows.empty()) throw ConfigError("csv: no data rows");

    int T = -1;
    for (const auto& u : unit_order) {
        const auto& per_unit = rows[u];
        const int t_max = per_unit.rbegin()->first;
        if (static_cast<int>(per_unit.size()) != t_max || per_unit.begin()->first != 1)
            throw ConfigError("csv: unit '" + u + "' has gaps in time (needs contiguous 1..T)");
        if (T < 0) T = t_max;
        if (t_max != T)
            throw ConfigError("csv: unit '" + u + "' covers 1.." + std::to_string(t_max) +
                              " but horizon is " + std::to_string(T));
    }

    Panel panel(schema, unit_order, T);
    for (int i = 0; i < panel.n_units(); ++i) {
        const auto& per_unit = rows[unit_order[static_cast<size_t>(i)]];
        for (const auto& [t, r] : per_unit) {
            panel.set_z(i, t, r.z);
            panel.set_s(i, t, r.s);
            panel.set_y(i, t, r.y);
            for (int p = 0; p < P; ++p) panel.set_x(i, t, p, r.x[static_cast<size_t>(p)]);
        }
    }
    return panel;
}

inline Panel ingest_csv_file(const std::string& path, const Schema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open panel file: " + path);
    return ingest_csv(in, schema);
}

inline void write_csv(std::ostream& out, const Panel& panel) {
    const int P = panel.n_covariates();
    out << "unit,time,z,s,y";
    for (int p = 1; p <= P; ++p) out << ",x_" << p;
    out << "\n";
    for (int i = 0; i < panel.n_units(); ++i) {
        for (int t = 1; t <= panel.horizon(); ++t) {
            out << panel.units()[static_cast<size_t>(i)] << "," << t;
            out << "," << detail::format_value(panel.schema().z.value(panel.z(i, t)));
            out << "," << detail::format_value(panel.schema().s.value(panel.s(i, t)));
            out << "," << detail::format_value(panel.schema().y.value(panel.y(i, t)));
            for (int p = 0; p < P; ++p)
                out << "," << detail::format_value(panel.schema().x[static_cast<size_t>(p)].grid.value(panel.x(i, t, p)));
            out << "\n";
        }
    }
}

inline std::string write_csv_string(const Panel& panel) {
    std::ostringstream oss;
    write_csv(oss, panel);
    return oss.str();
}

} // namespace gfc
