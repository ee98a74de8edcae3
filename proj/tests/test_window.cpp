#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "gfc/mapper.hpp"
#include "gfc/window.hpp"

using namespace gfc;

namespace {

// Panel with recognizable values: y = (i + t) mod |Y|, x = t mod 2, z = 1 at
// chosen event times.
Panel patterned_panel(int I, int T, std::vector<std::pair<int, int>> events = {}) {
    Schema sc;
    sc.s = ValueGrid{{0.0, 1.0}, {}};
    sc.y = ValueGrid{{0.0, 1.0, 2.0}, {}};
    sc.x.push_back({"x1", ValueGrid{{0.0, 1.0}, {}}});
    std::vector<std::string> units;
    for (int i = 0; i < I; ++i) units.push_back("u" + std::to_string(i + 1));
    Panel p(sc, units, T);
    for (int i = 0; i < I; ++i)
        for (int t = 1; t <= T; ++t) {
            p.set_y(i, t, (i + t) % 3);
            p.set_x(i, t, 0, t % 2);
            p.set_s(i, t, (i + t) % 2);
        }
    for (auto [i, t] : events) p.set_z(i, t, 1);
    return p;
}

} // namespace

TEST_CASE("extract_history index arithmetic: B=1, K=3, L_x=3, L_y=4 at t=9") {
    WindowSpec spec;
    spec.b = 1;
    spec.k = 3;
    spec.l = 1;
    spec.l_x = 3;
    spec.l_y = 4;
    spec.validate();
    const Panel p = patterned_panel(1, 10);
    const HistoryView h = extract_history(p, spec, 0, 9);

    REQUIRE(h.window_times.first == 5);
    REQUIRE(h.window_times.last == 8);
    REQUIRE(h.r_x_times.first == 5);
    REQUIRE(h.r_x_times.last == 5);
    REQUIRE(h.r_y_times.first == 4);
    REQUIRE(h.r_y_times.last == 4);
    // values follow the pattern
    REQUIRE(h.r_x == Key{static_cast<int16_t>(5 % 2)});
    REQUIRE(h.r_y == Key{static_cast<int16_t>((0 + 4) % 3)});
    // v ranges sit inside the carry-over window and are disjoint from r
    REQUIRE(h.v_x_times.first == 6);
    REQUIRE(h.v_x_times.last == 8);
    REQUIRE(h.v_y_times.first == 5);
    REQUIRE(h.v_y_times.last == 7);
    REQUIRE(h.r_y_times.last < h.v_y_times.first);
}

TEST_CASE("extract_history degenerate no-carry-over case") {
    WindowSpec spec;
    spec.b = 0;
    spec.k = 0;
    spec.l = 0;
    spec.l_x = 0;
    spec.l_y = 1;
    spec.validate();
    const Panel p = patterned_panel(1, 10, {{0, 5}});
    const HistoryView h = extract_history(p, spec, 0, 5);
    REQUIRE(h.z_window == Key{1});
    REQUIRE(h.v_x.empty());
    REQUIRE(h.v_y.empty());
}

TEST_CASE("extract_history rejects windows that underflow time 1") {
    WindowSpec spec;
    spec.b = 1;
    spec.k = 3;
    spec.l = 1;
    spec.l_x = 3;
    spec.l_y = 4;
    const Panel p = patterned_panel(1, 10);
    REQUIRE_THROWS_WITH(extract_history(p, spec, 0, 3),
                        Catch::Matchers::ContainsSubstring("underflows time 1"));
}

TEST_CASE("extract_history is pure: repeated calls identical") {
    WindowSpec spec;
    spec.b = 1;
    spec.k = 2;
    spec.l = 2;
    spec.l_x = 2;
    spec.l_y = 3;
    const Panel p = patterned_panel(3, 12, {{1, 4}, {2, 7}});
    const HistoryView a = extract_history(p, spec, 2, 10);
    const HistoryView b = extract_history(p, spec, 2, 10);
    REQUIRE(a.r_key() == b.r_key());
    REQUIRE(a.rv_key(true) == b.rv_key(true));
    REQUIRE(a.z_window == b.z_window);
}

TEST_CASE("unit sets: single event, boundary exclusion, empty set") {
    WindowSpec spec;
    spec.b = 0;
    spec.k = 2;
    spec.l = 2;
    spec.l_x = 2;
    spec.l_y = 3;
    spec.validate();
    TreatmentMapper mapper{MapperKind::OneDay};

    // unit 1 has a single event at t=4: D_t = Z_{t-2} puts (0-indexed unit) at t=6
    Panel p = patterned_panel(2, 10, {{0, 4}});
    const auto [all, treated] = build_unit_sets(p, spec, mapper);
    REQUIRE(all.members.size() == 20);
    REQUIRE(treated.members == std::vector<std::pair<int, int>>{{0, 6}});

    // all-zero treatments: empty treated set is legal
    const Panel none = patterned_panel(2, 10);
    REQUIRE(build_unit_sets(none, spec, mapper).second.members.empty());

    // event at t=1: (i,3) has a full window, (i,2) does not and drops out
    Panel early = patterned_panel(1, 10, {{0, 1}});
    const auto treated_early = build_unit_sets(early, spec, mapper).second;
    REQUIRE(treated_early.members == std::vector<std::pair<int, int>>{{0, 3}});
}

TEST_CASE("treated members with full geometry extract and map to 1") {
    WindowSpec spec;
    spec.b = 1;
    spec.k = 2;
    spec.l = 2;
    spec.l_x = 2;
    spec.l_y = 3;
    spec.validate();
    TreatmentMapper mapper{MapperKind::OneDay};
    const Panel p = patterned_panel(3, 15, {{0, 4}, {1, 7}, {2, 11}});
    const auto treated = build_unit_sets(p, spec, mapper).second;
    REQUIRE(!treated.members.empty());
    for (const auto& [i, t] : treated.members) {
        if (t < spec.min_query_time()) continue; // sliver reported as drops downstream
        const HistoryView h = extract_history(p, spec, i, t);
        REQUIRE(mapper.map(h.z_window, spec) == 1);
    }
}
