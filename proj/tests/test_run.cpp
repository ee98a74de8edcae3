#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "gfc/acceptance.hpp"
#include "gfc/run.hpp"

using namespace gfc;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::path("build") / "test-tmp" / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
};

RunArgs base_args(const std::string& cmd, const fs::path& out) {
    RunArgs a;
    a.command = cmd;
    a.out = out;
    a.configs_dir = "configs";
    return a;
}

} // namespace

TEST_CASE("simulate writes I*T rows and is byte-stable") {
    TempDir dir("sim");
    RunArgs a = base_args("simulate", dir.path / "run1");
    a.dgp = "null-effect";
    a.units = 10;
    a.horizon = 50;
    a.seed = 7;
    a.seed_given = true;
    std::ostringstream err;
    REQUIRE(execute(a, err) == 0);

    const std::string csv = read_file(dir.path / "run1" / "panel.csv");
    long rows = -1; // header
    for (char c : csv)
        if (c == '\n') ++rows;
    REQUIRE(rows == 500);

    a.out = dir.path / "run2";
    REQUIRE(execute(a, err) == 0);
    REQUIRE(csv == read_file(dir.path / "run2" / "panel.csv"));
}

TEST_CASE("missing --seed is a usage error with exit code 2") {
    TempDir dir("noseed");
    RunArgs a = base_args("simulate", dir.path / "out");
    a.dgp = "null-effect";
    a.units = 3;
    a.horizon = 5;
    std::ostringstream err;
    REQUIRE(execute(a, err) == static_cast<int>(ExitCode::ConfigError));
    REQUIRE(err.str().find("--seed") != std::string::npos);
}

TEST_CASE("estimate on a simulated null panel lands within 3 SE of zero, exit 0") {
    TempDir dir("estimate");
    RunArgs sim = base_args("simulate", dir.path / "panel");
    sim.dgp = "null-effect";
    sim.units = 100;
    sim.horizon = 50;
    sim.seed = 7;
    sim.seed_given = true;
    run_simulate(sim);

    RunArgs est = base_args("estimate", dir.path / "est");
    est.panel = dir.path / "panel" / "panel.csv";
    est.schema = dir.path / "panel" / "schema.json";
    est.analysis = "configs/analysis/null-effect.json";
    est.dgp = "null-effect";
    est.seed = 7;
    est.seed_given = true;
    std::ostringstream err;
    REQUIRE(execute(est, err) == 0);

    const json rep = parse_json_file(dir.path / "est" / "report.json");
    REQUIRE(std::abs(rep["value"].get<double>()) < 3.0 * rep["mc_se"].get<double>());
    // oracle series present because a model was supplied
    const std::string plot = read_file(dir.path / "est" / "plot_data.csv");
    REQUIRE(plot.find("oracle,ATT") != std::string::npos);
}

TEST_CASE("adjustment on the confounded panel raises the tdc flag in the report") {
    TempDir dir("tdcflag");
    RunArgs sim = base_args("simulate", dir.path / "panel");
    sim.dgp = "tdc-on";
    sim.units = 150;
    sim.horizon = 50;
    sim.seed = 11;
    sim.seed_given = true;
    run_simulate(sim);

    RunArgs est = base_args("estimate", dir.path / "est");
    est.panel = dir.path / "panel" / "panel.csv";
    est.schema = dir.path / "panel" / "schema.json";
    est.analysis = "configs/analysis/tdc-on.json";
    est.mode = "adjustment";
    est.seed = 11;
    est.seed_given = true;
    std::ostringstream err;
    REQUIRE(execute(est, err) == 0);
    const json rep = parse_json_file(dir.path / "est" / "report.json");
    REQUIRE(rep["tdc_suspected"].get<bool>());
    REQUIRE(rep["mode"]["method"] == "adjustment");
}

TEST_CASE("forecast refusal surfaces as exit code 4, estimation failure as 3") {
    TempDir dir("codes");
    RunArgs sim = base_args("simulate", dir.path / "panel");
    sim.dgp = "support-drift";
    sim.units = 50;
    sim.horizon = 40;
    sim.seed = 13;
    sim.seed_given = true;
    run_simulate(sim);

    RunArgs fc = base_args("forecast", dir.path / "refused");
    fc.panel = dir.path / "panel" / "panel.csv";
    fc.schema = dir.path / "panel" / "schema.json";
    fc.analysis = "configs/analysis/support-drift.json";
    fc.scenario = "configs/scenario/explicit-unsupported.json";
    fc.seed = 13;
    fc.seed_given = true;
    std::ostringstream err;
    REQUIRE(execute(fc, err) == static_cast<int>(ExitCode::OverlapRefusal));

    // an unestimable analysis: min_cell impossible to satisfy
    TempDir dir2("codes2");
    json strict = parse_json_file("configs/analysis/support-drift.json");
    strict["min_cell"] = 1000000;
    atomic_write(dir2.path / "strict.json", strict.dump(2));
    RunArgs est = base_args("estimate", dir2.path / "est");
    est.panel = dir.path / "panel" / "panel.csv";
    est.schema = dir.path / "panel" / "schema.json";
    est.analysis = dir2.path / "strict.json";
    est.seed = 13;
    est.seed_given = true;
    REQUIRE(execute(est, err) == static_cast<int>(ExitCode::EstimationFailure));
}

TEST_CASE("rerun from a manifest reproduces estimate outputs byte for byte") {
    TempDir dir("rerun");
    RunArgs sim = base_args("simulate", dir.path / "panel");
    sim.dgp = "prop1-check";
    sim.units = 60;
    sim.horizon = 40;
    sim.seed = 3;
    sim.seed_given = true;
    run_simulate(sim);

    RunArgs est = base_args("estimate", dir.path / "est");
    est.panel = dir.path / "panel" / "panel.csv";
    est.schema = dir.path / "panel" / "schema.json";
    est.analysis = "configs/analysis/prop1-check.json";
    est.seed = 3;
    est.seed_given = true;
    run_estimate(est);

    RunArgs rr = base_args("rerun", dir.path / "est2");
    rr.manifest = dir.path / "est" / "manifest.json";
    run_rerun(rr);
    REQUIRE(read_file(dir.path / "est" / "report.json") ==
            read_file(dir.path / "est2" / "report.json"));
    REQUIRE(read_file(dir.path / "est" / "per_unit.csv") ==
            read_file(dir.path / "est2" / "per_unit.csv"));

    // report verifies the hashes
    RunArgs rp = base_args("report", dir.path / "est");
    rp.manifest = dir.path / "est" / "manifest.json";
    std::ostringstream out;
    REQUIRE(run_report(rp, out) == 0);
    REQUIRE(out.str().find("report.json: ok") != std::string::npos);
}

TEST_CASE("expose command runs both the observed and future variants") {
    TempDir dir("expose");
    RunArgs sim = base_args("simulate", dir.path / "panel");
    sim.dgp = "exposure-clean";
    sim.units = 120;
    sim.horizon = 50;
    sim.seed = 17;
    sim.seed_given = true;
    run_simulate(sim);

    RunArgs ex = base_args("expose", dir.path / "aee");
    ex.panel = dir.path / "panel" / "panel.csv";
    ex.schema = dir.path / "panel" / "schema.json";
    ex.analysis = "configs/analysis/exposure-clean.json";
    ex.policy = "configs/policy/point-mass-low.json";
    ex.dgp = "exposure-clean";
    ex.seed = 17;
    ex.seed_given = true;
    std::ostringstream err;
    REQUIRE(execute(ex, err) == 0);
    REQUIRE(parse_json_file(dir.path / "aee" / "report.json")["estimand"] == "AEE");

    ex.out = dir.path / "aeef";
    ex.scenario = "configs/scenario/exposure-f4.json";
    REQUIRE(execute(ex, err) == 0);
    REQUIRE(parse_json_file(dir.path / "aeef" / "report.json")["estimand"] == "AEE_F");
}

TEST_CASE("validate reports a setup error when bundled configs are missing") {
    TempDir dir("valsetup");
    AcceptanceOptions opt;
    opt.configs_dir = dir.path / "nowhere";
    opt.work_dir = dir.path / "out";
    std::ostringstream out;
    REQUIRE(run_acceptance(opt, out) == static_cast<int>(ExitCode::ConfigError));
    REQUIRE(out.str().find("setup error") != std::string::npos);
}

TEST_CASE("a tampered oracle fails the enumeration/MC cross-check") {
    const Dgp d = dgp_from_file("configs/dgp/tdc-on.json");
    WindowSpec spec;
    spec.b = 1;
    spec.k = 2;
    spec.l = 2;
    spec.l_x = 2;
    spec.l_y = 3;
    spec.validate();
    TreatmentMapper mapper{MapperKind::OneDay};
    const double exact = oracle_potential_outcome(d, mapper, spec, 20, 1).value;

    // Monte Carlo run against a corrupted copy of the model
    json tampered = parse_json_file("configs/dgp/tdc-on.json");
    tampered["equations"]["y"]["table"] = {{0.55, 0.45}, {0.2, 0.8}, {0.6, 0.4}, {0.3, 0.7}};
    const Dgp bad = dgp_from_json(tampered);
    Intervention iv;
    force_window_z(iv, spec, 20, mapper.canonical_treated(spec));
    McOptions mc;
    mc.replications = 20000;
    mc.seed = 3;
    const OracleResult approx = mc_mean_y(bad, 20, iv, {}, mc);
    REQUIRE_FALSE(oracle_crosscheck(exact, approx));
    REQUIRE(oracle_crosscheck(exact, mc_mean_y(d, 20, iv, {}, mc)));
}
