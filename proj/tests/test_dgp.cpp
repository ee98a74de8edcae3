#include <catch2/catch_amalgamated.hpp>

#include "gfc/simulate.hpp"
#include "support/fixtures.hpp"

using namespace gfc;

TEST_CASE("dgp validation: rows must sum to 1") {
    auto j = nlohmann::ordered_json::parse(R"({
      "name": "bad",
      "grids": {"s": {"levels": [0]}, "y": {"levels": [0, 1]}, "x": []},
      "equations": {"y": {"parents": [], "table": [[0.5, 0.4]]}},
      "flags": {"time_dependent_confounding": "off"}
    })");
    REQUIRE_THROWS_WITH(dgp_from_json(j), Catch::Matchers::ContainsSubstring("sums to"));
}

TEST_CASE("dgp validation: tdc=off forbids treatment parents in covariate tables") {
    auto j = nlohmann::ordered_json::parse(R"({
      "name": "bad-tdc",
      "grids": {"s": {"levels": [0]}, "y": {"levels": [0, 1]}, "x": [{"name": "x1", "levels": [0, 1]}]},
      "equations": {
        "x1": {"parents": [["z", 1]], "table": [[0.5, 0.5], [0.2, 0.8]]},
        "z":  {"parents": [], "table": [[0.5, 0.5]]},
        "y":  {"parents": [], "table": [[0.5, 0.5]]}
      },
      "flags": {"time_dependent_confounding": "off"}
    })");
    REQUIRE_THROWS_WITH(dgp_from_json(j),
                        Catch::Matchers::ContainsSubstring("covariate equation reads treatment"));
}

TEST_CASE("degenerate point-mass tables give a deterministic panel") {
    const Dgp d = test::point_mass_dgp();
    const Panel p = simulate(d, 3, 8, 123);
    for (int i = 0; i < 3; ++i)
        for (int t = 1; t <= 8; ++t) {
            REQUIRE(p.x(i, t, 0) == 1);
            REQUIRE(p.z(i, t) == 1);
            REQUIRE(p.s(i, t) == 0);
            REQUIRE(p.y(i, t) == 1); // y follows x deterministically
        }
}

TEST_CASE("null assignment model keeps z at zero") {
    auto j = nlohmann::ordered_json::parse(R"({
      "name": "null-pi",
      "grids": {"s": {"levels": [0]}, "y": {"levels": [0, 1]}, "x": []},
      "equations": {
        "z": {"parents": [], "table": [[1.0, 0.0]]},
        "y": {"parents": [], "table": [[0.6, 0.4]]}
      },
      "flags": {"time_dependent_confounding": "off"}
    })");
    const Dgp d = dgp_from_json(j);
    const Panel p = simulate(d, 4, 10, 7);
    for (int i = 0; i < 4; ++i)
        for (int t = 1; t <= 10; ++t) REQUIRE(p.z(i, t) == 0);
}

TEST_CASE("simulation is deterministic in the seed") {
    const Dgp d = test::tiny_tdc_dgp();
    const Panel a = simulate(d, 3, 8, 99);
    const Panel b = simulate(d, 3, 8, 99);
    REQUIRE(a == b);
    const Panel c = simulate(d, 3, 8, 100);
    REQUIRE(!(a == c));
}

TEST_CASE("lag overflow beyond the horizon is rejected") {
    auto j = nlohmann::ordered_json::parse(R"({
      "name": "deep-lag",
      "grids": {"s": {"levels": [0]}, "y": {"levels": [0, 1]}, "x": []},
      "equations": {"y": {"parents": [["y", 5]], "table": [[0.9, 0.1], [0.4, 0.6]]}},
      "flags": {"time_dependent_confounding": "off"}
    })");
    const Dgp d = dgp_from_json(j);
    REQUIRE_THROWS_WITH(simulate(d, 2, 4, 1), Catch::Matchers::ContainsSubstring("lag"));
}

TEST_CASE("simulated transition frequencies match the tables (chi-square smoke)") {
    const Dgp d = test::tiny_tdc_dgp();
    const Panel p = simulate(d, 200, 50, 4242);
    // x1 | z_{t-1}: rows {0: [0.3,0.7], 1: [0.8,0.2]}
    double count[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < p.n_units(); ++i)
        for (int t = 2; t <= p.horizon(); ++t)
            count[p.z(i, t - 1)][p.x(i, t, 0)] += 1.0;
    const double expect_p[2][2] = {{0.3, 0.7}, {0.8, 0.2}};
    double chi2 = 0.0;
    for (int r = 0; r < 2; ++r) {
        const double n = count[r][0] + count[r][1];
        REQUIRE(n > 100);
        for (int c = 0; c < 2; ++c) {
            const double e = n * expect_p[r][c];
            chi2 += (count[r][c] - e) * (count[r][c] - e) / e;
        }
    }
    // dof = 2, critical value at p = 0.001
    REQUIRE(chi2 < 13.816);
}
