#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "fhn/io.hpp"
#include "fhn/particles.hpp"
#include "fhn/rng.hpp"
#include "oracles.hpp"

using namespace fhn;

namespace {

ModelConfig one_node() {
    auto cfg = default_config();
    cfg.grid = SpatialGrid::uniform(1);
    cfg.initial.mean_v_amplitude = 0.0;
    return cfg;
}

// Relaxation only: no drift, no kernel, w frozen at zero by the caller.
ModelConfig relaxation_only(double eps) {
    auto cfg = one_node();
    cfg.drift.kind = DriftSpec::Kind::Polynomial;
    cfg.drift.coefficients = {};
    cfg.numerics.test_mode = true;
    cfg.kernel.kind = KernelSpec::Kind::Zero;
    cfg.adaptation = {0.0, 1.0, 0.0};
    cfg.numerics.epsilon = eps;
    return cfg;
}

ModelConfig linear_one_node(double eps) {
    auto cfg = one_node();
    cfg.drift.kind = DriftSpec::Kind::Polynomial;
    cfg.drift.coefficients = {0.0, -1.0};
    cfg.numerics.test_mode = true;
    cfg.kernel.kind = KernelSpec::Kind::Zero;
    cfg.numerics.epsilon = eps;
    cfg.initial.gaussian.mean_v = 0.4;
    cfg.initial.gaussian.mean_w = 0.2;
    return cfg;
}

struct Stats {
    double mv, mw, vv, vw, ww;
};

Stats stats(const ParticleEnsemble& e, std::size_t node) {
    const auto& v = e.v[node];
    const auto& w = e.w[node];
    const double n = static_cast<double>(v.size());
    double mv = 0.0, mw = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        mv += v[k];
        mw += w[k];
    }
    mv /= n;
    mw /= n;
    double vv = 0.0, vw = 0.0, ww = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        vv += (v[k] - mv) * (v[k] - mv);
        vw += (v[k] - mv) * (w[k] - mw);
        ww += (w[k] - mw) * (w[k] - mw);
    }
    return {mv, mw, vv / n, vw / n, ww / n};
}

MacroState forced_macro(double t, double V) {
    MacroState m;
    m.t = t;
    m.V = {V};
    m.W = {0.0};
    m.last_alpha = 1.0;
    m.last_beta = {0.0};
    return m;
}

}  // namespace

TEST_CASE("initial sampling") {
    const Model m = make_model(one_node());
    const std::size_t n = 100000;
    const auto a = init_particles(m, n, 7);
    REQUIRE(a.v[0].size() == n);
    CHECK(std::abs(stats(a, 0).mv) <= 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(stats(a, 0).vv - 1.0) <= 4.0 * std::sqrt(2.0 / n));
    const auto b = init_particles(m, n, 7);
    CHECK(a.v == b.v);
    CHECK(a.w == b.w);
    const auto c = init_particles(m, n, 8);
    CHECK(a.v != c.v);

    const auto one = init_particles(m, 1, 7);
    CHECK(one.v[0].size() == 1);
    CHECK(std::isfinite(one.v[0][0]));

    auto cfg = one_node();
    cfg.n_v = cfg.n_w = 16;
    cfg.initial.kind = InitialSpec::Kind::Tabulated;
    cfg.initial.table.assign(256, 0.0);
    cfg.initial.table[0] = 1.0 / ((2.0 * cfg.v_domain / 16.0) * (2.0 * cfg.w_domain / 16.0));
    CHECK_THROWS_AS(init_particles(make_model(cfg), 10, 1), Error);
    CHECK_THROWS_AS(init_particles(m, 0, 1), Error);
}

TEST_CASE("a single particle only feels the noise") {
    const double eps = 0.1;
    const Model m = make_model(relaxation_only(eps));
    auto e = init_particles(m, 1, 3);
    e.w[0][0] = 0.0;
    const double v0 = e.v[0][0];
    const double dt = 0.01;
    advance_particles(e, m, dt);
    const double sd = std::sqrt(eps * (1.0 - std::exp(-2.0 * dt / eps)));
    const double xi = normal_draw({3, Stream::OuNoise, 0, 0, 0});
    CHECK(e.v[0][0] == doctest::Approx(v0 + sd * xi).epsilon(1e-14));
}

TEST_CASE("trajectories are deterministic and exchangeable") {
    auto cfg = default_config();
    cfg.grid = SpatialGrid::uniform(3);
    cfg.numerics.epsilon = 0.05;
    const Model m = make_model(cfg);
    auto a = init_particles(m, 200, 11);
    auto b = a;
    std::mt19937_64 g(5);
    for (std::size_t n = 0; n < 3; ++n) {
        std::vector<std::size_t> p(200);
        std::iota(p.begin(), p.end(), 0);
        std::shuffle(p.begin(), p.end(), g);
        for (std::size_t k = 0; k < 200; ++k) {
            b.v[n][k] = a.v[n][p[k]];
            b.w[n][k] = a.w[n][p[k]];
            b.id[n][k] = a.id[n][p[k]];
        }
    }
    auto c = a;
    for (int k = 0; k < 20; ++k) {
        advance_particles(a, m, 2e-3);
        advance_particles(b, m, 2e-3);
        advance_particles(c, m, 2e-3);
    }
    CHECK(a.v == c.v);
    CHECK(a.w == c.w);
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t k = 0; k < 200; ++k) {
            const std::uint32_t id = b.id[n][k];
            CHECK(b.v[n][k] == a.v[n][id]);
            CHECK(b.w[n][k] == a.w[n][id]);
        }
}

TEST_CASE("relaxation keeps the node mean in expectation") {
    const double eps = 0.01;
    const Model m = make_model(relaxation_only(eps));
    std::vector<double> shift;
    for (std::uint64_t r = 0; r < 200; ++r) {
        auto e = init_particles(m, 1000, 1000 + r);
        std::fill(e.w[0].begin(), e.w[0].end(), 0.0);
        const double before = node_mean(e.v[0]);
        advance_particles(e, m, 1e-3);
        shift.push_back(node_mean(e.v[0]) - before);
    }
    const double mean = std::accumulate(shift.begin(), shift.end(), 0.0) / 200.0;
    double var = 0.0;
    for (double s : shift) var += (s - mean) * (s - mean);
    const double se = std::sqrt(var / 199.0 / 200.0);
    CHECK(std::abs(mean) <= 4.0 * se);
}

TEST_CASE("node mean is exact and order independent") {
    std::vector<double> v{1e16, 1.0, -1e16, 0.5};
    CHECK(node_mean(v) == doctest::Approx(0.375));
    std::vector<double> r(v.rbegin(), v.rend());
    CHECK(node_mean(v) == node_mean(r));
    CHECK_THROWS_AS(node_mean({}), Error);
}

TEST_CASE("linear model matches the moment oracle") {
    const double eps = 0.05, dt = 2e-3;
    const std::size_t n = 100000;
    const Model m = make_model(linear_one_node(eps));
    auto e = init_particles(m, n, 20261016);
    for (int k = 0; k < 500; ++k) advance_particles(e, m, dt);
    const auto o = oracle::linear_gaussian({0.4, 0.2, 1.0, 0.0, 1.0}, 1.0, eps, 1.0, 1.0, 0.0, 1.0, dt / 100.0);
    // The node mean is itself random: it follows the interaction-free linear system with noise 2/n.
    const auto mo = oracle::linear_gaussian({0.0, 0.0, 1.0, 0.0, 1.0}, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, dt / 100.0);
    const auto s = stats(e, 0);
    const double N = static_cast<double>(n);
    CHECK(std::abs(s.mv - o.mv) <= 3.0 * std::sqrt(mo.svv / N));
    CHECK(std::abs(s.mw - o.mw) <= 3.0 * std::sqrt(mo.sww / N));
    CHECK(std::abs(s.vv - o.svv) <= 3.0 * std::sqrt(2.0 * o.svv * o.svv / N));
    CHECK(std::abs(s.vw - o.svw) <= 3.0 * std::sqrt((o.svv * o.sww + o.svw * o.svw) / N));
    CHECK(std::abs(s.ww - o.sww) <= 3.0 * std::sqrt(2.0 * o.sww * o.sww / N));
}

TEST_CASE("splitting is second order") {
    // Noise off so the comparison is not swamped by sampling error.
    const Model m = make_model(linear_one_node(0.5));
    auto run = [&](double dt) {
        auto e = init_particles(m, 2000, 4);
        e.noise_scale = 0.0;
        const long steps = std::lround(1.0 / dt);
        for (long k = 0; k < steps; ++k) advance_particles(e, m, dt);
        return stats(e, 0);
    };
    const auto a = run(0.04), b = run(0.02), c = run(0.01);
    auto diff = [](const Stats& x, const Stats& y) {
        return std::max({std::abs(x.mv - y.mv), std::abs(x.mw - y.mw), std::abs(x.vv - y.vv), std::abs(x.vw - y.vw),
                         std::abs(x.ww - y.ww)});
    };
    const double order = std::log2(diff(a, b) / diff(b, c));
    CHECK(order > 1.8);
    CHECK(order < 2.3);
}

TEST_CASE("pairwise interaction equals the mean-field closure") {
    auto cfg = default_config();
    cfg.grid = SpatialGrid::uniform(2);
    cfg.numerics.epsilon = 0.2;
    const Model m = make_model(cfg);
    const auto e = init_particles(m, 50, 9);
    const auto p = pairwise_local_term(e, m, 1);
    const double Vhat = node_mean(e.v[1]);
    for (std::size_t k = 0; k < 50; ++k)
        CHECK(p[k] == doctest::Approx(m.rho0(1) / 0.2 * (Vhat - e.v[1][k])).epsilon(1e-10));
    const auto big = init_particles(m, 1001, 9);
    CHECK_THROWS_AS(pairwise_local_term(big, m, 0), Error);
}

TEST_CASE("companions under identical dynamics") {
    const double eps = 0.1, dt = 1e-2;
    const Model m = make_model(relaxation_only(eps));
    for (double noise : {0.0, 1.0}) {
        CAPTURE(noise);
        auto e = init_particles(m, 500, 2);
        e.noise_scale = noise;
        std::fill(e.w[0].begin(), e.w[0].end(), 0.0);
        attach_companions(e, m, forced_macro(0.0, 0.0));
        e.v_prime = e.v;
        e.w_prime = e.w;
        e.companion_V = {node_mean(e.v[0])};
        for (int k = 0; k < 100; ++k) {
            // the limit mean is forced onto the empirical one
            const auto mac = forced_macro(e.t + dt, node_mean(e.v[0]));
            e.companion_V = mac.V;
            advance_coupled(e, m, mac, dt);
            double lo = INFINITY, hi = -INFINITY;
            for (std::size_t i = 0; i < 500; ++i) {
                const double g = e.v[0][i] - e.v_prime[0][i];
                lo = std::min(lo, g);
                hi = std::max(hi, g);
                CHECK(e.w[0][i] == e.w_prime[0][i]);
            }
            // every particle sees the same gap: only the mean of the shared draws separates them
            CHECK(hi - lo < 1e-12);
            if (noise == 0.0) CHECK(std::abs(hi) < 1e-13);
        }
    }
}

TEST_CASE("noiseless gap contracts at the relaxation rate") {
    const double eps = 0.1, dt = 1e-3;
    const Model m = make_model(relaxation_only(eps));
    auto e = init_particles(m, 300, 6);
    e.noise_scale = 0.0;
    std::fill(e.w[0].begin(), e.w[0].end(), 0.0);
    const double V = node_mean(e.v[0]);
    attach_companions(e, m, forced_macro(0.0, V));
    std::fill(e.v_prime[0].begin(), e.v_prime[0].end(), V);
    const double a0 = coupling_energies(e, m).A_energy[0];
    for (int k = 0; k < 200; ++k) advance_coupled(e, m, forced_macro(e.t + dt, V), dt);
    const double a1 = coupling_energies(e, m).A_energy[0];
    CHECK(a1 / a0 == doctest::Approx(std::exp(-2.0 * 0.2 / eps)).epsilon(1e-8));
}

TEST_CASE("coupling energies") {
    const double eps = 0.25;
    const Model m = make_model(relaxation_only(eps));
    auto e = init_particles(m, 100, 1);
    attach_companions(e, m, forced_macro(0.0, 0.3));
    e.v_prime = e.v;
    e.w_prime = e.w;
    auto z = coupling_energies(e, m);
    CHECK(z.A_energy[0] == 0.0);
    CHECK(z.B_energy[0] == 0.0);
    CHECK(z.B2_cross[0] == 0.0);

    for (auto& x : e.v_prime[0]) x -= 0.5;
    CHECK(coupling_energies(e, m).A_energy[0] == doctest::Approx(0.25 / eps));

    e.v_prime = e.v;
    for (auto& x : e.w_prime[0]) x += 1.0;
    const auto c = coupling_energies(e, m);
    CHECK(c.B_energy[0] == doctest::Approx(1.0));
    double want = 0.0;
    for (double x : e.v_prime[0]) want -= (x - 0.3);
    CHECK(c.B2_cross[0] == doctest::Approx(want / 100.0 / std::sqrt(eps)));
}

TEST_CASE("companion initialisation") {
    const double eps = 0.1;
    auto cfg = linear_one_node(eps);
    const Model m = make_model(cfg);
    auto e = init_particles(m, 2001, 5);
    attach_companions(e, m, forced_macro(0.0, 0.4));
    CHECK(e.w_prime == e.w);
    // monotone in v and centred on V with the Maxwellian spread
    std::vector<std::size_t> idx(2001);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return e.v[0][a] < e.v[0][b]; });
    for (std::size_t r = 1; r < idx.size(); ++r) CHECK(e.v_prime[0][idx[r]] > e.v_prime[0][idx[r - 1]]);
    CHECK(e.v_prime[0][idx[1000]] == doctest::Approx(0.4).epsilon(1e-12));
    double var = 0.0;
    for (double x : e.v_prime[0]) var += (x - 0.4) * (x - 0.4);
    CHECK(var / 2001.0 == doctest::Approx(eps).epsilon(0.01));
}

TEST_CASE("companion errors") {
    const Model m = make_model(relaxation_only(0.1));
    auto e = init_particles(m, 10, 1);
    CHECK_THROWS_AS(advance_coupled(e, m, forced_macro(0.01, 0.0), 0.01), Error);
    CHECK_THROWS_AS(coupling_energies(e, m), Error);
    try {
        step_coupled(e, m, forced_macro(0.01, 0.0), 0.01);
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::MissingCompanions);
    }
    CHECK_THROWS_AS(attach_companions(e, m, forced_macro(0.5, 0.0)), Error);
    attach_companions(e, m, forced_macro(0.0, 0.0));
    try {
        advance_coupled(e, m, forced_macro(0.0, 0.0), 0.01);
        FAIL("expected MissingMacroPath");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::MissingMacroPath);
    }
    CHECK_THROWS_AS(advance_particles(e, m, 0.01), Error);
    // step_particles drops companions and advances the primaries only
    const auto p = step_particles(e, m, 0.01);
    CHECK_FALSE(p.has_companions());
}

TEST_CASE("non-finite states are reported") {
    auto cfg = relaxation_only(0.1);
    cfg.drift.coefficients = {0.0, 0.0, 0.0, 1.0};
    const Model m = make_model(cfg);
    auto e = init_particles(m, 5, 1);
    e.v[0][3] = 1e6;
    try {
        for (int k = 0; k < 10; ++k) advance_particles(e, m, 0.1);
        FAIL("expected NonFinite");
    } catch (const Error& err) {
        CHECK(err.code() == ErrorCode::NonFinite);
        CHECK(std::string(err.what()).find("substep") != std::string::npos);
    }
}

TEST_CASE("empirical samples and dumps") {
    const Model m = make_model(relaxation_only(0.1));
    auto e = init_particles(m, 3, 1);
    e.v[0] = {1.0, 2.0, 3.0};
    e.w[0] = {-1.0, 0.0, 1.0};
    const auto s = empirical_samples(e, 0);
    REQUIRE(s.size() == 3);
    CHECK(s.points[1].v == 2.0);
    CHECK(s.points[2].w == 1.0);
    CHECK(empirical_samples(e, 0).points[0].v == s.points[0].v);
    CHECK_THROWS_AS(empirical_samples(e, 1), Error);
    const auto again = init_particles(m, 3, 1);
    const auto fresh = init_particles(m, 3, 1);
    CHECK(empirical_samples(again, 0).points[2].v == empirical_samples(fresh, 0).points[2].v);

    const auto dir = std::filesystem::temp_directory_path();
    write_particle_dump(e, 0, dir / "fhn_particles.csv");
    auto t = read_csv(dir / "fhn_particles.csv");
    CHECK(t.header == std::vector<std::string>{"v", "w"});
    CHECK(t.rows.size() == 3);
    CHECK(t.rows[2][0] == 3.0);
    attach_companions(e, m, forced_macro(0.0, 0.0));
    write_particle_dump(e, 0, dir / "fhn_particles.csv");
    t = read_csv(dir / "fhn_particles.csv");
    CHECK(t.header == std::vector<std::string>{"v", "w", "v_prime", "w_prime"});
    CHECK(t.rows[1][3] == 0.0);
}
