#include "fhn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fhn/errors.hpp"
#include "fhn/rng.hpp"

namespace fhn {

namespace {

void check_q(double q, int p) {
    if (!(q >= 2.0 && q <= 2.0 * p))
        throw Error(ErrorCode::QOutOfRange, "q = " + std::to_string(q) + " outside [2, " + std::to_string(2 * p) + "]");
}

/// |x|^q for x >= 0 given as a square (x2 = x^2); the square is used directly for q = 2.
double pow_from_square(double x2, double q) {
    if (q == 2.0) return x2;
    if (x2 == 0.0) return 0.0;
    return std::exp(0.5 * q * std::log(x2));
}

void check_same_grid(const GridDensity& a, const GridDensity& b) {
    if (!(a.v_grid == b.v_grid) || !(a.w_grid == b.w_grid) || a.values.size() != b.values.size())
        throw Error(ErrorCode::GridMismatch, "densities live on different grids");
}

std::vector<double> faces(const UniformGrid1D& g) {
    std::vector<double> f(g.n + 1);
    for (std::size_t i = 0; i <= g.n; ++i) f[i] = g.face(i);
    f.back() = g.hi;
    return f;
}

}  // namespace

SampleSet SampleSet::from_points(std::vector<Point2> pts, std::vector<double> weights) {
    SampleSet s;
    s.points = std::move(pts);
    s.weights = std::move(weights);
    s.validate();
    return s;
}

SampleSet SampleSet::from_scalars(std::vector<double> xs, std::vector<double> weights) {
    SampleSet s;
    s.scalars = std::move(xs);
    s.weights = std::move(weights);
    s.one_dimensional = true;
    s.validate();
    return s;
}

void SampleSet::validate() const {
    if (size() == 0) throw Error(ErrorCode::DimensionMismatch, "empty sample set");
    if (!weights.empty()) {
        if (weights.size() != size()) throw Error(ErrorCode::DimensionMismatch, "weights differ in length");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorCode::NonFinite, "bad sample weight");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12) throw Error(ErrorCode::MassNotNormalized, "sample weights must sum to 1");
    }
    if (one_dimensional) {
        for (double x : scalars)
            if (!std::isfinite(x)) throw Error(ErrorCode::NonFinite, "non-finite sample");
    } else {
        for (const auto& p : points)
            if (!std::isfinite(p.v) || !std::isfinite(p.w)) throw Error(ErrorCode::NonFinite, "non-finite sample");
    }
}

double GridDensity::mass() const {
    double acc = 0.0;
    for (double x : values) acc += x;
    return acc * cell_area();
}

std::vector<double> GridDensity::v_marginal_masses() const {
    std::vector<double> m(v_grid.n, 0.0);
    const double area = cell_area();
    for (std::size_t i = 0; i < v_grid.n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < w_grid.n; ++j) acc += values[i * w_grid.n + j];
        m[i] = acc * area;
    }
    return m;
}

std::vector<double> GridDensity::w_marginal_masses() const {
    std::vector<double> m(w_grid.n, 0.0);
    for (std::size_t i = 0; i < v_grid.n; ++i)
        for (std::size_t j = 0; j < w_grid.n; ++j) m[j] += values[i * w_grid.n + j];
    const double area = cell_area();
    for (double& x : m) x *= area;
    return m;
}

double w2_1d(const SampleSet& a, const SampleSet& b) {
    if (!a.one_dimensional || !b.one_dimensional) throw Error(ErrorCode::DimensionMismatch, "w2_1d needs 1D sets");
    a.validate();
    b.validate();
    if (a.uniform() && b.uniform() && a.size() == b.size()) {
        std::vector<double> x = a.scalars, y = b.scalars;
        std::sort(x.begin(), x.end());
        std::sort(y.begin(), y.end());
        std::vector<double> terms(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) terms[i] = (x[i] - y[i]) * (x[i] - y[i]);
        return std::sqrt(canonical_sum(std::move(terms)) / static_cast<double>(x.size()));
    }
    return std::sqrt(w2_squared(QuantileFunction::from_atoms(a.scalars, a.weights),
                                QuantileFunction::from_atoms(b.scalars, b.weights)));
}

double w2_1d(const QuantileFunction& a, const QuantileFunction& b) { return std::sqrt(w2_squared(a, b)); }

double w2_2d(const SampleSet& a, const SampleSet& b) {
    if (a.one_dimensional || b.one_dimensional) throw Error(ErrorCode::DimensionMismatch, "w2_2d needs 2D sets");
    a.validate();
    b.validate();
    if (a.uniform() && b.uniform() && a.size() == b.size()) {
        const std::size_t n = a.size();
        if (n > kMaxSupport) throw Error(ErrorCode::TooLarge, "assignment size " + std::to_string(n) + " exceeds 4096");
        const auto col = solve_assignment(a.points, b.points);
        std::vector<double> terms(n);
        for (std::size_t i = 0; i < n; ++i) terms[i] = sq_dist(a.points[i], b.points[col[i]]);
        return std::sqrt(canonical_sum(std::move(terms)) / static_cast<double>(n));
    }
    if (a.size() + b.size() > kMaxSupport)
        throw Error(ErrorCode::TooLarge, "transport support " + std::to_string(a.size() + b.size()) + " exceeds 4096");
    std::vector<double> wa(a.size()), wb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) wa[i] = a.weight(i);
    for (std::size_t j = 0; j < b.size(); ++j) wb[j] = b.weight(j);
    const auto flows = solve_transport(a.points, wa, b.points, wb);
    std::vector<double> terms;
    terms.reserve(flows.size());
    for (const auto& f : flows) terms.push_back(f.mass * sq_dist(a.points[f.i], b.points[f.j]));
    return std::sqrt(canonical_sum(std::move(terms)));
}

double relative_energy_Dq(const SampleSet& s, double q, double V, int p) {
    check_q(q, p);
    if (s.one_dimensional) throw Error(ErrorCode::DimensionMismatch, "relative energy needs 2D samples");
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = s.points[i].v - V;
        acc += s.weight(i) * pow_from_square(d * d, q);
    }
    return acc;
}

double w2_to_dirac_tensor(const SampleSet& samples, double V) {
    if (samples.one_dimensional) throw Error(ErrorCode::DimensionMismatch, "needs 2D samples");
    return std::sqrt(relative_energy_Dq(samples, 2.0, V, 1));
}

double moment_Mq(const SampleSet& s, double q, int p) {
    check_q(q, p);
    if (s.one_dimensional) throw Error(ErrorCode::DimensionMismatch, "moments need 2D samples");
    double acc = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto& u = s.points[i];
        acc += s.weight(i) * pow_from_square(u.v * u.v + u.w * u.w, q);
    }
    return acc;
}

double moment_Mq(const GridDensity& d, double q, int p) {
    check_q(q, p);
    double acc = 0.0;
    for (std::size_t i = 0; i < d.v_grid.n; ++i) {
        const double v = d.v_grid.center(i);
        for (std::size_t j = 0; j < d.w_grid.n; ++j) {
            const double w = d.w_grid.center(j);
            acc += d.at(i, j) * pow_from_square(v * v + w * w, q);
        }
    }
    return acc * d.cell_area();
}

double relative_energy_Dq(const GridDensity& d, double q, double V, int p) {
    check_q(q, p);
    const auto m = d.v_marginal_masses();
    double acc = 0.0;
    for (std::size_t i = 0; i < d.v_grid.n; ++i) {
        const double x = d.v_grid.center(i) - V;
        acc += m[i] * pow_from_square(x * x, q);
    }
    return acc;
}

double modified_relative_entropy(const GridDensity& mu, const GridDensity& nu, double alpha) {
    check_same_grid(mu, nu);
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidConfig, "alpha must lie in (0, 1)");
    double acc = 0.0;
    for (std::size_t k = 0; k < mu.values.size(); ++k) {
        const double m = mu.values[k];
        if (m <= 0.0) continue;
        acc += m * std::log(m / (alpha * m + (1.0 - alpha) * nu.values[k]));
    }
    return acc * mu.cell_area();
}

double l1_distance(const GridDensity& mu, const GridDensity& nu) {
    check_same_grid(mu, nu);
    double acc = 0.0;
    for (std::size_t k = 0; k < mu.values.size(); ++k) acc += std::abs(mu.values[k] - nu.values[k]);
    return acc * mu.cell_area();
}

double fisher_I_half(const GridDensity& mu, const GridDensity& nu) {
    check_same_grid(mu, nu);
    constexpr double floor = 1e-14;
    const std::size_t nv = mu.v_grid.n, nw = mu.w_grid.n;
    const double h = mu.v_grid.width();
    auto g = [&](std::size_t i, std::size_t j) {
        const double m = mu.at(i, j);
        return std::log(2.0 * m / (m + nu.at(i, j)));
    };
    auto ok = [&](std::size_t i, std::size_t j) { return mu.at(i, j) >= floor; };
    double acc = 0.0;
    for (std::size_t i = 0; i < nv; ++i) {
        for (std::size_t j = 0; j < nw; ++j) {
            if (!ok(i, j)) continue;
            const bool left = i > 0 && ok(i - 1, j);
            const bool right = i + 1 < nv && ok(i + 1, j);
            double d = 0.0;
            if (left && right) d = (g(i + 1, j) - g(i - 1, j)) / (2.0 * h);
            else if (right) d = (g(i + 1, j) - g(i, j)) / h;
            else if (left) d = (g(i, j) - g(i - 1, j)) / h;
            acc += d * d * mu.at(i, j);
        }
    }
    return acc * mu.cell_area();
}

double exp_moment_J(const GridDensity& d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < d.v_grid.n; ++i) {
        const double v = d.v_grid.center(i);
        for (std::size_t j = 0; j < d.w_grid.n; ++j) {
            const double w = d.w_grid.center(j);
            acc += std::exp(0.5 * (v * v + w * w)) * d.at(i, j);
        }
    }
    return acc * d.cell_area();
}

double entropy_H(const GridDensity& d) {
    double acc = 0.0;
    for (double m : d.values)
        if (m > 0.0) acc += m * std::log(m);
    return acc * d.cell_area();
}

SampleSet sample_grid_density(const GridDensity& d, std::size_t n, std::uint64_t seed) {
    std::vector<double> cdf(d.values.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < d.values.size(); ++k) {
        acc += std::max(d.values[k], 0.0);
        cdf[k] = acc;
    }
    if (!(acc > 0.0)) throw Error(ErrorCode::EmptyNode, "cannot sample an empty density");
    CounterRng rng(seed, Stream::Sampling);
    std::vector<Point2> pts(n);
    for (auto& p : pts) {
        const double u = rng.uniform() * acc;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t k = static_cast<std::size_t>(it - cdf.begin());
        if (k >= cdf.size()) k = cdf.size() - 1;
        while (d.values[k] <= 0.0 && k > 0) --k;
        const std::size_t i = k / d.w_grid.n, j = k % d.w_grid.n;
        p.v = d.v_grid.face(i) + rng.uniform() * d.v_grid.width();
        p.w = d.w_grid.face(j) + rng.uniform() * d.w_grid.width();
    }
    return SampleSet::from_points(std::move(pts));
}

double sampling_noise_floor(const SampleSet& s) {
    double vlo = INFINITY, vhi = -INFINITY, wlo = INFINITY, whi = -INFINITY;
    for (const auto& p : s.points) {
        vlo = std::min(vlo, p.v), vhi = std::max(vhi, p.v);
        wlo = std::min(wlo, p.w), whi = std::max(whi, p.w);
    }
    if (s.one_dimensional) {
        for (double x : s.scalars) vlo = std::min(vlo, x), vhi = std::max(vhi, x);
        wlo = whi = 0.0;
    }
    return std::hypot(vhi - vlo, whi - wlo) / std::sqrt(static_cast<double>(s.size()));
}

QuantileFunction v_marginal_quantile(const GridDensity& d) {
    return QuantileFunction::from_histogram(faces(d.v_grid), d.v_marginal_masses());
}

QuantileFunction w_marginal_quantile(const GridDensity& d) {
    return QuantileFunction::from_histogram(faces(d.w_grid), d.w_marginal_masses());
}

double order0_distance(const GridDensity& mu, double V, const QuantileFunction& mubar) {
    const auto m = mu.v_marginal_masses();
    const double total = std::accumulate(m.begin(), m.end(), 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double x = mu.v_grid.center(i) - V;
        acc += m[i] * x * x;
    }
    return std::sqrt(acc / total + w2_squared(w_marginal_quantile(mu), mubar));
}

DistanceBounds order1_distance(const GridDensity& mu, const std::vector<double>& maxwellian,
                               const QuantileFunction& mubar) {
    const std::size_t nv = mu.v_grid.n, nw = mu.w_grid.n;
    if (maxwellian.size() != nv) throw Error(ErrorCode::DimensionMismatch, "Maxwellian must live on the v-grid");
    const auto vf = faces(mu.v_grid);
    std::vector<double> mm(nv);
    for (std::size_t i = 0; i < nv; ++i) mm[i] = maxwellian[i] * mu.v_grid.width();
    const auto target = QuantileFunction::from_histogram(vf, mm);

    const double w_part = w2_squared(w_marginal_quantile(mu), mubar);
    const auto wm = mu.w_marginal_masses();
    const double total = std::accumulate(wm.begin(), wm.end(), 0.0);
    std::vector<double> col(nv), terms;
    for (std::size_t j = 0; j < nw; ++j) {
        if (wm[j] <= 0.0) continue;
        for (std::size_t i = 0; i < nv; ++i) col[i] = mu.at(i, j);
        terms.push_back(wm[j] / total * w2_squared(QuantileFunction::from_histogram(vf, col), target));
    }
    DistanceBounds out;
    out.upper = std::sqrt(w_part + canonical_sum(std::move(terms)));
    out.lower = std::sqrt(w_part + w2_squared(v_marginal_quantile(mu), target));
    return out;
}

}  // namespace fhn
