#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "fhn/io.hpp"
#include "fhn/kinetic.hpp"
#include "oracles.hpp"

using namespace fhn;

namespace {

ModelConfig small_config(std::size_t nodes = 2) {
    auto cfg = default_config();
    cfg.grid = SpatialGrid::uniform(nodes);
    return cfg;
}

ModelConfig linear_config(double eps) {
    auto cfg = small_config(4);
    cfg.drift.kind = DriftSpec::Kind::Polynomial;
    cfg.drift.coefficients = {0.0, -1.0};
    cfg.numerics.test_mode = true;
    cfg.kernel.kind = KernelSpec::Kind::Zero;
    cfg.numerics.epsilon = eps;
    return cfg;
}

struct Moments {
    double mv, mw, vv, vw, ww;
};

Moments moments(const KineticState& s, std::size_t node) {
    const auto d = s.physical(node);
    double m = 0.0, mv = 0.0, mw = 0.0;
    for (std::size_t i = 0; i < d.v_grid.n; ++i)
        for (std::size_t j = 0; j < d.w_grid.n; ++j) {
            const double f = d.at(i, j);
            m += f;
            mv += f * d.v_grid.center(i);
            mw += f * d.w_grid.center(j);
        }
    mv /= m;
    mw /= m;
    double vv = 0.0, vw = 0.0, ww = 0.0;
    for (std::size_t i = 0; i < d.v_grid.n; ++i)
        for (std::size_t j = 0; j < d.w_grid.n; ++j) {
            const double f = d.at(i, j) / m;
            const double a = d.v_grid.center(i) - mv, b = d.w_grid.center(j) - mw;
            vv += f * a * a;
            vw += f * a * b;
            ww += f * b * b;
        }
    return {mv, mw, vv, vw, ww};
}

}  // namespace

TEST_CASE("initial state") {
    const Model m = make_model(default_config());
    const auto s = init_kinetic(m);
    const double h = s.v_grid.width();
    for (std::size_t n = 0; n < s.n_nodes; ++n) {
        CHECK(s.node_mass(n) == doctest::Approx(1.0).epsilon(1e-12));
        const double want = 0.5 * std::sin(2.0 * std::numbers::pi * m.config().grid.nodes[n]);
        CHECK(std::abs(s.cached_V[n] - want) < h);
        CHECK(std::abs(s.cached_W[n]) < 1e-12);
        CHECK(s.frame_scale[n] == 1.0);
    }

    auto cfg = small_config(1);
    cfg.initial.mean_v_amplitude = 0.0;
    cfg.initial.gaussian.mean_v = 1.5;
    cfg.initial.gaussian.mean_w = -0.2;
    const auto s2 = init_kinetic(make_model(cfg));
    CHECK(std::abs(s2.cached_V[0] - 1.5) < s2.v_grid.width());
    CHECK(std::abs(s2.cached_W[0] + 0.2) < s2.xi_grid.width());
}

TEST_CASE("macros of special densities") {
    auto cfg = small_config(1);
    cfg.initial.mean_v_amplitude = 0.0;
    KineticState s = init_kinetic(make_model(cfg));
    CHECK(std::abs(compute_macros(s)[0].V) < 1e-12);

    std::fill(s.density.begin(), s.density.end(), 0.0);
    const std::size_t i0 = 200, j0 = 17;
    s.density[i0 * s.xi_grid.n + j0] = 1.0 / (s.v_grid.width() * s.xi_grid.width());
    const auto mc = compute_macros(s)[0];
    CHECK(mc.V == s.v_grid.center(i0));
    CHECK(mc.W == s.xi_grid.center(j0));

    std::fill(s.density.begin(), s.density.end(), 0.0);
    CHECK_THROWS_AS(compute_macros(s), Error);
}

TEST_CASE("zero step is the identity") {
    const Model m = make_model(small_config());
    const auto s = init_kinetic(m);
    const auto t = step_kinetic(s, m, 0.0);
    CHECK(t.density == s.density);
    CHECK(t.t == s.t);
    CHECK(t.cached_V == s.cached_V);
}

TEST_CASE("pure relaxation reproduces the exact variance") {
    auto cfg = small_config(1);
    cfg.drift.kind = DriftSpec::Kind::Polynomial;
    cfg.drift.coefficients = {};
    cfg.numerics.test_mode = true;
    cfg.kernel.kind = KernelSpec::Kind::Zero;
    cfg.adaptation = {0.0, 1.0, 0.0};
    cfg.initial.mean_v_amplitude = 0.0;
    cfg.initial.gaussian.var_v = 0.5;
    // small w-spread keeps the -w forcing of v negligible next to eps / rho
    cfg.initial.gaussian.var_w = 0.01;
    const double eps = 0.1;
    cfg.numerics.epsilon = eps;
    const Model m = make_model(cfg);
    KineticState s = init_kinetic(m);
    const double dt = 2e-3;
    for (int k = 1; k <= 500; ++k) {
        advance_kinetic(s, m, dt);
        if (k % 50 == 0) {
            const double t = k * dt;
            const double want = eps + (0.5 - eps) * std::exp(-2.0 * t / eps);
            CHECK(moments(s, 0).vv == doctest::Approx(want).epsilon(0.02));
        }
    }
}

TEST_CASE("linear-Gaussian model matches the moment oracle") {
    const double eps = 0.05;
    const Model m = make_model(linear_config(eps));
    KineticState s = init_kinetic(m);
    const double dt = 2e-3;
    for (int k = 0; k < 500; ++k) advance_kinetic(s, m, dt);
    for (std::size_t n = 0; n < s.n_nodes; ++n) {
        const double v0 = 0.5 * std::sin(2.0 * std::numbers::pi * m.config().grid.nodes[n]);
        const auto o = oracle::linear_gaussian({v0, 0.0, 1.0, 0.0, 1.0}, 1.0, eps, 1.0, 1.0, 0.0, 1.0, dt / 100.0);
        const auto k = moments(s, n);
        const double mnorm = std::hypot(o.mv, o.mw);
        if (mnorm >= 0.1) CHECK(std::hypot(k.mv - o.mv, k.mw - o.mw) / mnorm <= 0.01);
        const double fro = std::sqrt(o.svv * o.svv + 2.0 * o.svw * o.svw + o.sww * o.sww);
        const double err = std::sqrt(std::pow(k.vv - o.svv, 2) + 2.0 * std::pow(k.vw - o.svw, 2) + std::pow(k.ww - o.sww, 2));
        CHECK(err / fro <= 0.01);
    }
}

TEST_CASE("conservation, positivity and cache coherence") {
    for (const char* limiter : {"van_leer", "minmod"}) {
        auto cfg = small_config(3);
        cfg.numerics.limiter = limiter;
        cfg.numerics.epsilon = 0.05;
        const Model m = make_model(cfg);
        KineticState s = init_kinetic(m);
        for (int k = 0; k < 100; ++k) {
            advance_kinetic(s, m, 2e-3);
            for (std::size_t n = 0; n < s.n_nodes; ++n) {
                CHECK(s.node_mass(n) + s.boundary_loss[n] == doctest::Approx(1.0).epsilon(1e-10));
                const double* f = s.node_data(n);
                bool nonneg = true;
                for (std::size_t c = 0; c < s.cells(); ++c) nonneg = nonneg && f[c] >= 0.0;
                CHECK(nonneg);
            }
        }
        auto copy = s;
        const auto mc = compute_macros(copy);
        for (std::size_t n = 0; n < s.n_nodes; ++n) {
            CHECK(std::abs(mc[n].V - s.cached_V[n]) <= 1e-12);
            const auto mo = moments(s, n);
            CHECK(std::abs(mo.mv - s.cached_V[n]) <= 1e-12);
        }
    }
}

TEST_CASE("moving frame contracts with the adaptation rate") {
    auto cfg = small_config(1);
    cfg.initial.gaussian.var_w = 0.25;
    const Model m = make_model(cfg);
    KineticState s = init_kinetic(m);
    for (int k = 0; k < 500; ++k) advance_kinetic(s, m, 2e-3);
    CHECK(s.frame_scale[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    for (int k = 0; k < 1000; ++k) advance_kinetic(s, m, 2e-3);
    // below the minimum scale the frame stops contracting
    CHECK(s.frame_scale[0] >= m.config().numerics.frame_min_scale * std::exp(-2e-3));
    CHECK(s.frame_scale[0] < 0.11);
}

TEST_CASE("moving frame holds while mass sits near the xi edge") {
    auto cfg = small_config(1);
    cfg.numerics.epsilon = 1.0;
    const Model m = make_model(cfg);
    KineticState s = init_kinetic(m);
    advance_kinetic(s, m, 2e-3);
    CHECK(s.frame_scale[0] == 1.0);
    for (int k = 0; k < 999; ++k) advance_kinetic(s, m, 2e-3);
    CHECK(s.frame_scale[0] > std::exp(-2.0));
    CHECK(s.boundary_loss[0] < 1e-10);
}

TEST_CASE("solver errors") {
    SUBCASE("cfl") {
        auto cfg = small_config(1);
        cfg.numerics.max_subcycles = 1;
        const Model m = make_model(cfg);
        KineticState s = init_kinetic(m);
        CHECK_THROWS_AS(advance_kinetic(s, m, 0.5), Error);
    }
    SUBCASE("boundary loss") {
        auto cfg = small_config(1);
        cfg.drift.kind = DriftSpec::Kind::Polynomial;
        cfg.drift.coefficients = {0.0, 5.0};
        cfg.numerics.test_mode = true;
        cfg.initial.gaussian.mean_v = 1.0;
        cfg.initial.gaussian.var_v = 0.25;
        const Model m = make_model(cfg);
        KineticState s = init_kinetic(m);
        try {
            for (int k = 0; k < 2000; ++k) advance_kinetic(s, m, 2e-3);
            FAIL("expected BoundaryMassExceeded");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::BoundaryMassExceeded);
        }
    }
}

TEST_CASE("rescaled density") {
    const double eps = 0.05;
    auto cfg = small_config(1);
    cfg.numerics.epsilon = eps;
    const Model m = make_model(cfg);
    KineticState s = init_kinetic(m);
    for (int k = 0; k < 100; ++k) advance_kinetic(s, m, 2e-3);
    const auto nu = rescale_to_nu(s, m, 0);
    CHECK(nu.mass() == doctest::Approx(s.node_mass(0)).epsilon(1e-12));
    const auto mu = s.physical(0);
    const double V = s.cached_V[0];
    for (double q : {2.0, 4.0}) {
        const double dq = relative_energy_Dq(mu, q, V, 3);
        const double nq = relative_energy_Dq(nu, q, 0.0, 3);
        CHECK(dq == doctest::Approx(std::pow(eps, q / 2.0) * nq).epsilon(1e-12));
    }
    CHECK_THROWS_AS(rescale_to_nu(s, m, 5), Error);

    SUBCASE("identity transform") {
        auto c1 = small_config(1);
        c1.initial.mean_v_amplitude = 0.0;
        c1.numerics.epsilon = 1.0;
        const Model m1 = make_model(c1);
        const auto s1 = init_kinetic(m1);
        const auto n1 = rescale_to_nu(s1, m1, 0);
        CHECK(n1.values == s1.physical(0).values);
        CHECK(n1.v_grid.lo == doctest::Approx(s1.v_grid.lo).epsilon(1e-14));
        CHECK(n1.w_grid.hi == doctest::Approx(s1.xi_grid.hi).epsilon(1e-14));
    }
    SUBCASE("Maxwellian maps to the unit-scale Maxwellian") {
        auto c2 = small_config(1);
        c2.initial.mean_v_amplitude = 0.0;
        c2.initial.gaussian.mean_v = 0.4;
        c2.initial.gaussian.var_v = eps;
        c2.numerics.epsilon = eps;
        const Model m2 = make_model(c2);
        const auto s2 = init_kinetic(m2);
        const auto n2 = rescale_to_nu(s2, m2, 0);
        const auto vm = n2.v_marginal_masses();
        double err = 0.0;
        for (std::size_t i = 0; i < vm.size(); ++i) {
            const double x = n2.v_grid.center(i);
            err += std::abs(vm[i] / n2.v_grid.width() - std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi)) *
                   n2.v_grid.width();
        }
        CHECK(err < 0.02);
    }
}

TEST_CASE("remap preserves mass and mean") {
    const Model m = make_model(small_config(1));
    const auto s = init_kinetic(m);
    const auto mu = s.physical(0);
    const auto r = remap_density(mu, UniformGrid1D{-7.0, 8.0, 100}, UniformGrid1D{-9.0, 9.0, 77});
    CHECK(r.mass() == doctest::Approx(1.0).epsilon(1e-12));
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < mu.v_grid.n; ++i)
        for (std::size_t j = 0; j < mu.w_grid.n; ++j) a += mu.at(i, j) * mu.cell_area() * mu.v_grid.center(i);
    for (std::size_t i = 0; i < r.v_grid.n; ++i)
        for (std::size_t j = 0; j < r.w_grid.n; ++j) b += r.at(i, j) * r.cell_area() * r.v_grid.center(i);
    CHECK(b == doctest::Approx(a).epsilon(1e-10));
    CHECK_THROWS_AS(remap_density(mu, UniformGrid1D{-1.0, 1.0, 10}, UniformGrid1D{-1.0, 1.0, 10}), Error);
}

TEST_CASE("error functional") {
    auto cfg = small_config(1);
    cfg.initial.mean_v_amplitude = 0.0;
    cfg.initial.gaussian.mean_v = 0.6;
    cfg.initial.gaussian.var_v = 0.3;
    const Model m = make_model(cfg);
    KineticState s = init_kinetic(m);
    // discrete v-marginal moments, computed directly
    const auto vm = s.physical(0).v_marginal_masses();
    double mean = 0.0, c2 = 0.0, c3 = 0.0;
    for (std::size_t i = 0; i < vm.size(); ++i) mean += vm[i] * s.v_grid.center(i);
    for (std::size_t i = 0; i < vm.size(); ++i) {
        const double d = s.v_grid.center(i) - mean;
        c2 += vm[i] * d * d;
        c3 += vm[i] * d * d * d;
    }
    const double E = error_functional(s, m)[0];
    CHECK(E == doctest::Approx(-3.0 * mean * c2 - c3).epsilon(1e-10));
    CHECK(E == doctest::Approx(-3.0 * 0.6 * 0.3).epsilon(0.01));

    auto lin = cfg;
    lin.drift.kind = DriftSpec::Kind::Polynomial;
    lin.drift.coefficients = {0.0, 1.0};
    lin.numerics.test_mode = true;
    const Model ml = make_model(lin);
    CHECK(std::abs(error_functional(init_kinetic(ml), ml)[0]) < 1e-14);

    std::fill(s.density.begin(), s.density.end(), 0.0);
    s.density[130 * s.xi_grid.n + 64] = 1.0;
    CHECK(std::abs(error_functional(s, m)[0]) < 1e-15);
}

TEST_CASE("tabulated initial density is copied") {
    auto cfg = small_config(2);
    cfg.n_v = 16;
    cfg.n_w = 16;
    cfg.initial.kind = InitialSpec::Kind::Tabulated;
    cfg.initial.table.assign(256, 0.0);
    const double cell = 1.0;
    cfg.initial.table[8 * 16 + 8] = 0.5 / cell;
    cfg.initial.table[9 * 16 + 7] = 0.5 / cell;
    const Model m = make_model(cfg);
    const auto s = init_kinetic(m);
    CHECK(s.node_data(1)[8 * 16 + 8] == 0.5);
    CHECK(s.cached_V[0] == doctest::Approx(1.0));
}

TEST_CASE("snapshot layout") {
    const Model m = make_model(small_config(1));
    const auto s = init_kinetic(m);
    const auto path = std::filesystem::temp_directory_path() / "fhn_snapshot.csv";
    write_kinetic_snapshot(s, 0, path);
    const auto t = read_csv(path);
    CHECK(t.header == std::vector<std::string>{"v", "w", "density"});
    REQUIRE(t.rows.size() == s.cells());
    CHECK(t.rows[0][0] == s.v_grid.center(0));
    CHECK(t.rows[1][0] == s.v_grid.center(0));
    CHECK(t.rows[1][1] == s.w_at(0, 1));
    CHECK(t.rows[s.xi_grid.n][0] == s.v_grid.center(1));
    CHECK(t.rows[5][2] == s.node_data(0)[5]);
}
