#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gfc/error.hpp"
#include "gfc/key.hpp"
#include "gfc/window.hpp"

namespace gfc {

// Rules turning the lagged treatment vector over [t-B-K, t-B] into the
// binary indicator D. Windows are indexed oldest first, so the entry for
// time t-L sits at position B+K-L.
enum class MapperKind {
    OneDay,       // D = Z_{t-L}
    AnyDay,       // D = 1{sum over window >= 1}
    Initiation,   // D = 1{Z_{t-L} = 1 and no event earlier in the window}
    DurationQ,    // D = 1{Q consecutive events at t-L..t-L+Q-1, none after through t-B}
    IntermittentQ // D = 1{exactly Q events within [t-L, t-B]}
};

inline MapperKind mapper_kind_from_string(const std::string& s) {
    if (s == "one-day") return MapperKind::OneDay;
    if (s == "any-day") return MapperKind::AnyDay;
    if (s == "initiation") return MapperKind::Initiation;
    if (s == "duration-q") return MapperKind::DurationQ;
    if (s == "intermittent-q") return MapperKind::IntermittentQ;
    throw ConfigError("unknown mapper kind: '" + s + "'");
}

inline std::string to_string(MapperKind k) {
    switch (k) {
        case MapperKind::OneDay: return "one-day";
        case MapperKind::AnyDay: return "any-day";
        case MapperKind::Initiation: return "initiation";
        case MapperKind::DurationQ: return "duration-q";
        case MapperKind::IntermittentQ: return "intermittent-q";
    }
    return "?";
}

struct TreatmentMapper {
    MapperKind kind = MapperKind::OneDay;

    void validate(const WindowSpec& spec) const {
        // B <= L <= B+K is already enforced by WindowSpec.
        if (kind == MapperKind::DurationQ || kind == MapperKind::IntermittentQ) {
            if (!(spec.b + spec.q <= spec.l && spec.l <= spec.b + spec.k))
                throw ConfigError("mapper " + to_string(kind) + ": needs B+Q <= L <= B+K");
        }
    }

    // Position of time t-L inside the oldest-first window.
    static int lag_position(const WindowSpec& spec) { return spec.b + spec.k - spec.l; }

    int map(const Key& window, const WindowSpec& spec) const {
        if (static_cast<int>(window.size()) != spec.k + 1)
            throw ConfigError("mapper: window length " + std::to_string(window.size()) +
                              " does not match K+1 = " + std::to_string(spec.k + 1));
        validate(spec);
        const int pos = lag_position(spec);
        switch (kind) {
            case MapperKind::OneDay:
                return window[static_cast<size_t>(pos)] != 0;
            case MapperKind::AnyDay: {
                int sum = 0;
                for (auto v : window) sum += v;
                return sum >= 1;
            }
            case MapperKind::Initiation: {
                if (window[static_cast<size_t>(pos)] == 0) return 0;
                for (int j = 0; j < pos; ++j)
                    if (window[static_cast<size_t>(j)] != 0) return 0;
                return 1;
            }
            case MapperKind::DurationQ: {
                for (int j = pos; j < pos + spec.q; ++j)
                    if (window[static_cast<size_t>(j)] == 0) return 0;
                for (int j = pos + spec.q; j <= spec.k; ++j)
                    if (window[static_cast<size_t>(j)] != 0) return 0;
                return 1;
            }
            case MapperKind::IntermittentQ: {
                int sum = 0;
                for (int j = pos; j <= spec.k; ++j) sum += window[static_cast<size_t>(j)];
                return sum == spec.q;
            }
        }
        return 0;
    }

    // Every window with h = 0, enumerated over {0,1}^{K+1}.
    std::vector<Key> control_vectors(const WindowSpec& spec) const {
        return vectors_mapping_to(0, spec);
    }
    std::vector<Key> treated_vectors(const WindowSpec& spec) const {
        return vectors_mapping_to(1, spec);
    }

    // The pattern the estimand labels "treated": a single event at t-L for
    // the one-day and any-day rules, the event held from t-L through t-B for
    // initiation, and Q days from t-L for the duration rules.
    Key canonical_treated(const WindowSpec& spec) const {
        validate(spec);
        Key w(static_cast<size_t>(spec.k + 1), 0);
        const int pos = lag_position(spec);
        switch (kind) {
            case MapperKind::OneDay:
            case MapperKind::AnyDay:
                w[static_cast<size_t>(pos)] = 1;
                break;
            case MapperKind::Initiation:
                for (int j = pos; j <= spec.k; ++j) w[static_cast<size_t>(j)] = 1;
                break;
            case MapperKind::DurationQ:
            case MapperKind::IntermittentQ:
                for (int j = pos; j < pos + spec.q; ++j) w[static_cast<size_t>(j)] = 1;
                break;
        }
        return w;
    }

    static Key canonical_control(const WindowSpec& spec) {
        return Key(static_cast<size_t>(spec.k + 1), 0);
    }

private:
    std::vector<Key> vectors_mapping_to(int d, const WindowSpec& spec) const {
        validate(spec);
        const int n = spec.k + 1;
        std::vector<Key> out;
        for (uint32_t bits = 0; bits < (1u << n); ++bits) {
            Key w(static_cast<size_t>(n), 0);
            for (int j = 0; j < n; ++j) w[static_cast<size_t>(j)] = (bits >> j) & 1u;
            if (map(w, spec) == d) out.push_back(std::move(w));
        }
        return out;
    }
};

inline TreatmentMapper mapper_from_json(const json& j) {
    if (!j.contains("kind")) throw ConfigError("mapper: missing 'kind'");
    return TreatmentMapper{mapper_kind_from_string(j["kind"].get<std::string>())};
}

// Observation sets over the panel grid. kind=observed-* implies t <= T,
// future-* implies t > T (or beyond the scenario anchor).
enum class UnitSetKind { ObservedAll, ObservedTreated, FutureAll, FutureSelected };

struct UnitSet {
    UnitSetKind kind;
    std::vector<std::pair<int, int>> members; // (unit index, 1-based time)
};

// U1 keeps exactly the (i,t) whose treatment window fits the panel and maps
// to D=1; windows that exit the panel make D unobservable and the unit-time
// drops out.
inline std::pair<UnitSet, UnitSet> build_unit_sets(const Panel& panel, const WindowSpec& spec,
                                                   const TreatmentMapper& mapper) {
    mapper.validate(spec);
    UnitSet all{UnitSetKind::ObservedAll, {}};
    UnitSet treated{UnitSetKind::ObservedTreated, {}};
    for (int i = 0; i < panel.n_units(); ++i) {
        for (int t = 1; t <= panel.horizon(); ++t) {
            all.members.emplace_back(i, t);
            if (t < spec.min_window_time()) continue;
            Key w;
            const TimeRange r = spec.window_range(t);
            for (int u = r.first; u <= r.last; ++u) w.push_back(static_cast<int16_t>(panel.z(i, u)));
            if (mapper.map(w, spec) == 1) treated.members.emplace_back(i, t);
        }
    }
    return {std::move(all), std::move(treated)};
}

} // namespace gfc
