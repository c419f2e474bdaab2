#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "fhn/ot.hpp"
#include "fhn/rng.hpp"

using namespace fhn;

TEST_CASE("philox known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("counter draws are pure functions of the key") {
    const DrawKey k{42, Stream::OuNoise, 7, 3, 11};
    CHECK(normal_draw(k) == normal_draw(k));
    DrawKey k2 = k;
    k2.stream = Stream::InitV;
    CHECK(normal_draw(k) != normal_draw(k2));
    k2 = k;
    k2.step = 8;
    CHECK(uniform_draw(k) != uniform_draw(k2));
    k2 = k;
    k2.step = (1ull << 33) + 7;
    CHECK(uniform_draw(k) != uniform_draw(k2));
}

TEST_CASE("draw distributions") {
    const std::uint32_t n = 200000;
    double su = 0.0, sn = 0.0, sn2 = 0.0, sn4 = 0.0, umin = 1.0, umax = 0.0;
    for (std::uint32_t i = 0; i < n; ++i) {
        const double u = uniform_draw({5, Stream::Sampling, 0, 0, i});
        const double z = normal_draw({5, Stream::OuNoise, 0, 0, i});
        su += u;
        sn += z;
        sn2 += z * z;
        sn4 += z * z * z * z;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
    }
    CHECK(umin > 0.0);
    CHECK(umax < 1.0);
    CHECK(std::abs(su / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(sn / n) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(sn4 / n - 3.0) < 4.0 * std::sqrt(96.0 / n));
}

TEST_CASE("sequential wrapper") {
    CounterRng a(9, Stream::Bootstrap), b(9, Stream::Bootstrap);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    CounterRng c(9, Stream::Bootstrap);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const auto x = c.below(10);
        CHECK(x < 10);
        seen.insert(x);
    }
    CHECK(seen.size() == 10);
}

TEST_CASE("assignment on explicit costs equals brute force") {
    std::mt19937_64 g(21);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + static_cast<std::size_t>(trial % 7);
        std::vector<double> cost(n * n);
        for (double& c : cost) c = std::floor(u(g));  // ties on purpose
        const auto col = solve_assignment(cost, n);
        std::vector<bool> used(n, false);
        double got = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            REQUIRE(col[i] < n);
            CHECK_FALSE(used[col[i]]);
            used[col[i]] = true;
            got += cost[i * n + col[i]];
        }
        std::vector<std::size_t> p(n);
        std::iota(p.begin(), p.end(), 0);
        double best = INFINITY;
        do {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += cost[i * n + p[i]];
            best = std::min(best, s);
        } while (std::next_permutation(p.begin(), p.end()));
        CHECK(got == best);
    }
}

TEST_CASE("assignment on points is a permutation and is translation optimal") {
    std::mt19937_64 g(22);
    std::normal_distribution<double> d;
    std::vector<Point2> a(300), b(300);
    for (std::size_t i = 0; i < 300; ++i) a[i] = {d(g), d(g)};
    std::vector<std::size_t> perm(300);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    for (std::size_t i = 0; i < 300; ++i) b[perm[i]] = {a[i].v + 0.01, a[i].w};
    const auto col = solve_assignment(a, b);
    for (std::size_t i = 0; i < 300; ++i) CHECK(col[i] == perm[i]);
}

TEST_CASE("transport plan marginals") {
    std::mt19937_64 g(23);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    std::normal_distribution<double> d;
    const std::size_t na = 17, nb = 29;
    std::vector<Point2> a(na), b(nb);
    std::vector<double> wa(na), wb(nb);
    for (auto& p : a) p = {d(g), d(g)};
    for (auto& p : b) p = {d(g), d(g)};
    for (double& x : wa) x = u(g);
    for (double& x : wb) x = u(g);
    const double sa = std::accumulate(wa.begin(), wa.end(), 0.0), sb = std::accumulate(wb.begin(), wb.end(), 0.0);
    const auto flows = solve_transport(a, wa, b, wb);
    std::vector<double> ra(na, 0.0), rb(nb, 0.0);
    for (const auto& f : flows) {
        CHECK(f.mass >= 0.0);
        ra[f.i] += f.mass;
        rb[f.j] += f.mass;
    }
    for (std::size_t i = 0; i < na; ++i) CHECK(ra[i] == doctest::Approx(wa[i] / sa).epsilon(1e-12));
    for (std::size_t j = 0; j < nb; ++j) CHECK(rb[j] == doctest::Approx(wb[j] / sb).epsilon(1e-12));
    // a basic optimal solution has at most na + nb - 1 positive flows
    CHECK(flows.size() <= na + nb - 1);
}

TEST_CASE("transport on the line matches the monotone coupling") {
    std::vector<Point2> a{{0.0, 0.0}, {1.0, 0.0}, {3.0, 0.0}};
    std::vector<Point2> b{{0.5, 0.0}, {2.0, 0.0}};
    const auto flows = solve_transport(a, {0.2, 0.3, 0.5}, b, {0.6, 0.4});
    double cost = 0.0;
    for (const auto& f : flows) cost += f.mass * sq_dist(a[f.i], b[f.j]);
    // monotone: 0 -> 0.5 (0.2), 1 -> 0.5 (0.3), 3 -> 0.5 (0.1), 3 -> 2 (0.4)
    const double want = 0.2 * 0.25 + 0.3 * 0.25 + 0.1 * 6.25 + 0.4 * 1.0;
    CHECK(cost == doctest::Approx(want).epsilon(1e-14));
}
