#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "fhn/harness.hpp"
#include "oracles.hpp"

using namespace fhn;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::pair<double, double>> power_law(double c, double k) {
    std::vector<std::pair<double, double>> pts;
    for (double x : {0.2, 0.1, 0.05, 0.025}) pts.emplace_back(x, c * std::pow(x, k));
    return pts;
}

ExperimentPlan small_plan() {
    ExperimentPlan p;
    p.base_config.grid = SpatialGrid::uniform(1);
    p.base_config.n_v = 128;
    p.base_config.n_w = 64;
    p.epsilons = {0.2, 0.1, 0.05};
    p.times = {0.0, 0.1};
    p.fit_times = {0.1};
    p.metrics = {"order1_w2", "order0_w2", "D2", "macro_gap"};
    p.seed = 3;
    return p;
}

}  // namespace

TEST_CASE("slope fits are exact on power laws") {
    auto f = fit_loglog_slope(power_law(1.0, 1.0));
    CHECK(std::abs(f.slope - 1.0) < 1e-12);
    CHECK(std::abs(f.r2 - 1.0) < 1e-12);
    CHECK(std::abs(f.intercept) < 1e-12);
    CHECK(f.n_points == 4);
    f = fit_loglog_slope(power_law(1.0, 0.5));
    CHECK(std::abs(f.slope - 0.5) < 1e-12);
    f = fit_loglog_slope(power_law(3.0, 2.0));
    CHECK(std::abs(f.slope - 2.0) < 1e-12);
    CHECK(std::abs(f.intercept - std::log(3.0)) < 1e-12);
}

TEST_CASE("degenerate fits") {
    auto code = [](const std::vector<std::pair<double, double>>& pts) {
        try {
            fit_loglog_slope(pts);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    CHECK(code({{0.1, 1.0}, {0.2, 2.0}}) == ErrorCode::FitDegenerate);
    CHECK(code({{0.1, 1.0}, {0.2, 0.0}, {0.3, 1.0}}) == ErrorCode::FitDegenerate);
    CHECK(code({{0.1, 1.0}, {0.1, 2.0}, {0.1, 3.0}}) == ErrorCode::FitDegenerate);
    CHECK(code({{-0.1, 1.0}, {0.2, 2.0}, {0.3, 3.0}}) == ErrorCode::FitDegenerate);
}

TEST_CASE("saturated neighbours are dropped and flagged") {
    std::vector<std::pair<double, double>> pts{{0.4, 1.0}, {0.2, 0.99}, {0.1, 0.1}, {0.05, 0.05}, {0.025, 0.025}};
    const auto f = fit_loglog_slope_unsaturated(pts);
    CHECK(f.saturated);
    CHECK(f.n_points == 3);
    CHECK(std::abs(f.slope - 1.0) < 1e-12);
    const auto g = fit_loglog_slope_unsaturated(power_law(2.0, 1.0));
    CHECK_FALSE(g.saturated);
    CHECK(g.n_points == 4);
    pts[3].second = 0.0995;
    CHECK_THROWS_AS(fit_loglog_slope_unsaturated(pts), Error);
}

TEST_CASE("plan validation") {
    auto bad = [](auto mutate) {
        auto p = small_plan();
        mutate(p);
        CHECK_THROWS_AS(validate_plan(p), Error);
    };
    validate_plan(small_plan());
    bad([](ExperimentPlan& p) { p.epsilons = {0.1, 0.2}; });
    bad([](ExperimentPlan& p) { p.epsilons = {0.1, 0.1}; });
    bad([](ExperimentPlan& p) { p.epsilons = {}; });
    bad([](ExperimentPlan& p) { p.epsilons = {0.1, -0.1}; });
    bad([](ExperimentPlan& p) { p.times = {-1.0}; });
    bad([](ExperimentPlan& p) { p.metrics = {"nope"}; });
    bad([](ExperimentPlan& p) { p.fit_times = {0.5}; });
    bad([](ExperimentPlan& p) { p.mode = SolverMode::Particle; });
    bad([](ExperimentPlan& p) {
        p.mode = SolverMode::Particle;
        p.n_particles = 10;
        p.metrics = {"entropy"};
    });
}

TEST_CASE("report emission") {
    const auto dir = std::filesystem::temp_directory_path() / "fhn_report_test";
    std::filesystem::remove_all(dir);
    MetricsReport empty;
    emit_report(empty, dir);
    CHECK(slurp(dir / "metrics.csv") == "epsilon,t,node,metric,value\n");

    MetricsReport r;
    r.rows = {{0.1, 1.0, 0, "D2", 0.1234567890123456789}, {0.1, 1.0, -1, "D2", 1.0 / 3.0}};
    r.fitted_slopes["order1_w2@t=1"] = fit_loglog_slope({{0.1, 0.3}, {0.05, 0.17}, {0.025, 0.081}});
    r.manifest = {{"seed", 1}};
    emit_report(r, dir);
    const auto csv = slurp(dir / "metrics.csv");
    const auto js = slurp(dir / "slopes.json");
    const auto man = slurp(dir / "run_manifest.json");
    emit_report(r, dir);
    CHECK(slurp(dir / "metrics.csv") == csv);
    CHECK(slurp(dir / "slopes.json") == js);
    CHECK(slurp(dir / "run_manifest.json") == man);
    CHECK(csv.find("0.10000000000000001,1,-1,D2,0.33333333333333331\n") != std::string::npos);

    const auto j = nlohmann::json::parse(js);
    const auto& f = r.fitted_slopes.at("order1_w2@t=1");
    CHECK(j["order1_w2@t=1"]["slope"].get<double>() == f.slope);
    CHECK(j["order1_w2@t=1"]["intercept"].get<double>() == f.intercept);
    CHECK(j["order1_w2@t=1"]["r2"].get<double>() == f.r2);
    CHECK(j["order1_w2@t=1"]["n_points"].get<int>() == 3);
    CHECK(j["order1_w2@t=1"]["saturated"].get<bool>() == false);

    CHECK(r.node_max("D2", 0.1, 1.0) == 1.0 / 3.0);
    CHECK_THROWS_AS(r.node_max("D2", 0.2, 1.0), Error);
    CHECK(r.series("D2", 0.1, 0).size() == 1);

    CHECK_THROWS_AS(emit_report(r, dir / "metrics.csv" / "sub"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("single epsilon relative energy matches the linear oracle") {
    ExperimentPlan p;
    auto& cfg = p.base_config;
    cfg.grid = SpatialGrid::uniform(2);
    cfg.drift.kind = DriftSpec::Kind::Polynomial;
    cfg.drift.coefficients = {0.0, -1.0};
    cfg.numerics.test_mode = true;
    cfg.kernel.kind = KernelSpec::Kind::Zero;
    p.epsilons = {0.1};
    p.times = {1.0};
    p.metrics = {"D2"};
    const auto r = run_convergence_study(p);
    CHECK(r.fitted_slopes.empty());
    const auto o = oracle::linear_gaussian({0.5, 0.0, 1.0, 0.0, 1.0}, 1.0, 0.1, 1.0, 1.0, 0.0, 1.0, 1e-4);
    REQUIRE(r.rows.size() == 3);
    for (const auto& row : r.rows) {
        CHECK(row.metric == "D2");
        CHECK(row.value == doctest::Approx(o.svv).epsilon(0.01));
    }
}

TEST_CASE("convergence study is deterministic and complete") {
    auto p = small_plan();
    const auto a = run_convergence_study(p);
    const auto b = run_convergence_study(p);
    CHECK(metrics_csv(a) == metrics_csv(b));
    CHECK(slopes_json(a) == slopes_json(b));
    for (double e : p.epsilons)
        for (double t : p.times)
            for (const char* m : {"order1_w2", "order1_w2_lower", "order0_w2", "D2", "macro_gap", "macro_gap_corrected"})
                CHECK_NOTHROW(a.node_max(m, e, t));
    // matched initial data
    for (double e : p.epsilons) CHECK(a.node_max("macro_gap", e, 0.0) == 0.0);
    REQUIRE(a.fitted_slopes.count("order1_w2@t=0.1"));
    const auto& f = a.fitted_slopes.at("order1_w2@t=0.1");
    CHECK(f.transient);
    CHECK_FALSE(f.exploratory);
    CHECK(a.fitted_slopes.at("macro_gap@t=0.1").exploratory);
    CHECK(a.manifest["seed"] == 3);
    CHECK(a.manifest.contains("versions"));

    p.max_threads = 1;
    CHECK(metrics_csv(run_convergence_study(p)) == metrics_csv(a));

    p.mode = SolverMode::Particle;
    p.n_particles = 300;
    p.metrics = {"order1_w2", "order0_w2", "D2", "error_E"};
    const auto c = run_convergence_study(p);
    CHECK(metrics_csv(c) == metrics_csv(run_convergence_study(p)));
    p.seed = 4;
    CHECK(metrics_csv(c) != metrics_csv(run_convergence_study(p)));
}

TEST_CASE("coupling study") {
    ExperimentPlan p;
    p.base_config.grid = SpatialGrid::uniform(2);
    p.epsilons = {0.1, 0.05};
    p.times = {0.0, 0.2};
    p.metrics = {"coupling"};
    p.n_particles = 400;
    p.seed = 8;
    const auto r = run_coupling_study(p);
    for (double e : p.epsilons) {
        CHECK(r.node_max("D3", e, 0.2) == 0.0);
        CHECK(r.node_max("D2_macro_gap", e, 0.0) < 1e-15);
        CHECK(r.node_max("coupling_B", e, 0.0) == 0.0);
        CHECK(r.node_max("coupling_epsA_plus_B", e, 0.2) > 0.0);
    }
    CHECK(r.fitted_slopes.empty());
    CHECK(metrics_csv(r) == metrics_csv(run_coupling_study(p)));

    p.n_particles = 0;
    CHECK_THROWS_AS(run_coupling_study(p), Error);
}

TEST_CASE("worker count honours the environment") {
    ::setenv("FHN_THREADS", "1", 1);
    CHECK(worker_count(0) == 1);
    ::setenv("FHN_THREADS", "junk", 1);
    CHECK(worker_count(1) == 1);
    ::unsetenv("FHN_THREADS");
    CHECK(worker_count(0) >= 1);
}
