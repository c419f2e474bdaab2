#include "fhn/model.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

namespace fhn {

namespace {

double horner(const std::vector<double>& c, double v) {
    double acc = 0.0;
    for (std::size_t k = c.size(); k-- > 0;) acc = acc * v + c[k];
    return acc;
}

std::vector<double> derivative(const std::vector<double>& c) {
    std::vector<double> d;
    for (std::size_t k = 1; k < c.size(); ++k) d.push_back(static_cast<double>(k) * c[k]);
    return d;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

std::vector<double> DriftSpec::expanded() const {
    std::vector<double> c = kind == Kind::CubicDefault ? std::vector<double>{0.0, 1.0, 0.0, -1.0}
                                                       : coefficients;
    while (!c.empty() && c.back() == 0.0) c.pop_back();
    return c;
}

double KernelSpec::eval(std::size_t i, std::size_t j, double xi, double xj) const {
    switch (kind) {
        case Kind::Zero: return 0.0;
        case Kind::Constant: return kappa;
        case Kind::SeparableCosine:
            return amplitude * std::cos(2.0 * std::numbers::pi * frequency * (xi - xj));
        case Kind::Tabulated: return values.at(i).at(j);
    }
    return 0.0;
}

double KernelSpec::r_conjugate() const {
    if (std::isinf(r)) return 1.0;
    return r / (r - 1.0);
}

SpatialGrid SpatialGrid::uniform(std::size_t n, double rho0_value, double m_star) {
    SpatialGrid g;
    g.m_star = m_star;
    for (std::size_t i = 0; i < n; ++i) {
        g.nodes.push_back((static_cast<double>(i) + 0.5) / static_cast<double>(n));
        g.weights.push_back(1.0 / static_cast<double>(n));
        g.rho0.push_back(rho0_value);
    }
    return g;
}

std::vector<GaussianComponent> InitialSpec::components_at(double x) const {
    std::vector<GaussianComponent> out =
        kind == Kind::Mixture ? components : std::vector<GaussianComponent>{gaussian};
    const double s = std::sin(2.0 * std::numbers::pi * mean_frequency * x);
    for (auto& c : out) {
        c.mean_v += mean_v_amplitude * s;
        c.mean_w += mean_w_amplitude * s;
    }
    return out;
}

ModelConfig default_config() {
    ModelConfig cfg;
    cfg.drift.kind = DriftSpec::Kind::CubicDefault;
    cfg.drift.p = 3;
    cfg.adaptation = {1.0, 1.0, 0.0};
    cfg.kernel.kind = KernelSpec::Kind::SeparableCosine;
    cfg.kernel.amplitude = 0.5;
    cfg.kernel.frequency = 1;
    cfg.grid = SpatialGrid::uniform(16);
    cfg.initial.kind = InitialSpec::Kind::GaussianProduct;
    cfg.initial.gaussian = {1.0, 0.0, 0.0, 1.0, 1.0};
    cfg.initial.mean_v_amplitude = 0.5;
    cfg.initial.mean_frequency = 1;
    return cfg;
}

double gaussian_interval_mass(double mean, double var, double lo, double hi) {
    const double s = std::sqrt(2.0 * var);
    return 0.5 * (std::erf((hi - mean) / s) - std::erf((lo - mean) / s));
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
    coeffs_ = cfg_.drift.expanded();
    const std::size_t n = cfg_.grid.size();
    conv_matrix_.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            conv_matrix_[i * n + j] =
                cfg_.kernel.eval(i, j, cfg_.grid.nodes[i], cfg_.grid.nodes[j]) * cfg_.grid.weights[j];
    psi_rho0_ = conv_right(cfg_.grid.rho0);
}

Model Model::unchecked(const ModelConfig& cfg) { return Model(cfg); }

double Model::drift(double v) const { return horner(coeffs_, v); }
double Model::drift_prime(double v) const { return horner(derivative(coeffs_), v); }
double Model::drift_second(double v) const { return horner(derivative(derivative(coeffs_)), v); }

std::vector<double> Model::conv_right(const std::vector<double>& g) const {
    const std::size_t n = n_nodes();
    if (g.size() != n) throw Error(ErrorCode::DimensionMismatch, "conv_right expects one value per node");
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += conv_matrix_[i * n + j] * g[j];
        out[i] = acc;
    }
    return out;
}

std::vector<double> Model::nonlocal_L(const std::vector<double>& V) const {
    const std::size_t n = n_nodes();
    std::vector<double> rv(n);
    for (std::size_t j = 0; j < n; ++j) rv[j] = cfg_.grid.rho0[j] * V[j];
    const auto c = conv_right(rv);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = V[i] * psi_rho0_[i] - c[i];
    return out;
}

Model Model::with_epsilon(double eps) const {
    ModelConfig c = cfg_;
    c.numerics.epsilon = eps;
    return make_model(c);
}

ValidationResult validate_config(const ModelConfig& cfg) {
    ValidationResult res;
    auto fail = [&](ErrorCode code, std::string msg) { res.violations.push_back({code, std::move(msg)}); };

    const auto coeffs = cfg.drift.expanded();
    if (!cfg.numerics.test_mode) {
        const std::size_t deg = coeffs.empty() ? 0 : coeffs.size() - 1;
        if (deg < 3 || deg % 2 == 0 || coeffs.back() >= 0.0)
            fail(ErrorCode::DriftNotConfining,
                 "drift degree " + std::to_string(deg) + " must be odd, >= 3, with negative leading coefficient");
        else if (static_cast<int>(deg) > cfg.drift.p)
            fail(ErrorCode::DriftNotConfining,
                 "drift degree " + std::to_string(deg) + " exceeds p = " + std::to_string(cfg.drift.p));
    }
    if (cfg.drift.p < 2) fail(ErrorCode::DriftNotConfining, "p must be at least 2");
    for (double c : coeffs)
        if (!std::isfinite(c)) fail(ErrorCode::DriftNotConfining, "drift coefficient is not finite");

    const auto& ad = cfg.adaptation;
    if (!(ad.b > 0.0)) fail(ErrorCode::InvalidConfig, "adaptation b must be positive, got " + fmt(ad.b));
    if (!std::isfinite(ad.a) || !std::isfinite(ad.c))
        fail(ErrorCode::InvalidConfig, "adaptation parameters must be finite");

    const auto& g = cfg.grid;
    const std::size_t nn = g.size();
    if (nn == 0) fail(ErrorCode::GridTooCoarse, "spatial grid has no nodes");
    if (g.weights.size() != nn || g.rho0.size() != nn) {
        fail(ErrorCode::DimensionMismatch, "spatial grid arrays differ in length");
    } else if (nn > 0) {
        double wsum = 0.0;
        for (double w : g.weights) wsum += w;
        if (std::abs(wsum - 1.0) > 1e-12) fail(ErrorCode::InvalidConfig, "quadrature weights sum to " + fmt(wsum));
        if (!(g.m_star > 0.0 && g.m_star <= 1.0))
            fail(ErrorCode::Rho0OutOfBounds, "m_star must lie in (0, 1], got " + fmt(g.m_star));
        for (std::size_t i = 0; i < nn; ++i) {
            const double r = g.rho0[i];
            if (!(r >= g.m_star && r <= 1.0 / g.m_star))
                fail(ErrorCode::Rho0OutOfBounds,
                     "rho0[" + std::to_string(i) + "] = " + fmt(r) + " outside [" + fmt(g.m_star) + ", " +
                         fmt(1.0 / g.m_star) + "]");
        }
    }

    const auto& k = cfg.kernel;
    if (!(k.r > 1.0)) fail(ErrorCode::KernelNotFinite, "kernel exponent r must exceed 1");
    bool shape_ok = true;
    if (k.kind == KernelSpec::Kind::Tabulated) {
        shape_ok = k.values.size() == nn;
        for (const auto& row : k.values) shape_ok = shape_ok && row.size() == nn;
        if (!shape_ok) fail(ErrorCode::KernelNotFinite, "tabulated kernel must be n_nodes x n_nodes");
    }
    if (shape_ok && g.nodes.size() == nn) {
        bool finite = true;
        for (std::size_t i = 0; i < nn; ++i)
            for (std::size_t j = 0; j < nn; ++j) finite = finite && std::isfinite(k.eval(i, j, g.nodes[i], g.nodes[j]));
        if (!finite) fail(ErrorCode::KernelNotFinite, "kernel takes a non-finite value on the grid");
    }

    const auto& nm = cfg.numerics;
    if (!(nm.epsilon > 0.0)) fail(ErrorCode::InvalidConfig, "epsilon must be positive");
    if (!(nm.dt > 0.0)) fail(ErrorCode::InvalidConfig, "dt must be positive");
    if (!(nm.t_end >= nm.dt)) fail(ErrorCode::InvalidConfig, "t_end must be at least dt");
    if (nm.n_quantiles < 1) fail(ErrorCode::InvalidConfig, "n_quantiles must be positive");
    if (!(nm.frame_min_scale > 0.0 && nm.frame_min_scale <= 1.0))
        fail(ErrorCode::InvalidConfig, "frame_min_scale must lie in (0, 1]");
    if (nm.limiter != "van_leer" && nm.limiter != "minmod")
        fail(ErrorCode::InvalidConfig, "limiter must be van_leer or minmod");
    if (cfg.n_v < 16 || cfg.n_w < 16)
        fail(ErrorCode::GridTooCoarse, "n_v and n_w must be at least 16, got " + std::to_string(cfg.n_v) + " x " +
                                           std::to_string(cfg.n_w));
    if (!(cfg.v_domain > 0.0) || !(cfg.w_domain > 0.0)) fail(ErrorCode::InvalidConfig, "domains must be positive");

    const auto& init = cfg.initial;
    switch (init.kind) {
        case InitialSpec::Kind::GaussianProduct:
        case InitialSpec::Kind::Mixture: {
            const auto comps = init.components_at(0.0);
            if (comps.empty()) {
                fail(ErrorCode::MassNotNormalized, "mixture has no components");
                break;
            }
            double wsum = 0.0;
            bool positive = true;
            for (const auto& c : comps) {
                wsum += c.weight;
                positive = positive && c.weight >= 0.0 && c.var_v > 0.0 && c.var_w > 0.0;
            }
            if (!positive) fail(ErrorCode::MassNotNormalized, "component weights and variances must be positive");
            if (std::abs(wsum - 1.0) > 1e-10) fail(ErrorCode::MassNotNormalized, "component weights sum to " + fmt(wsum));
            if (!positive) break;
            for (std::size_t i = 0; i < nn; ++i) {
                double mass = 0.0;
                for (const auto& c : init.components_at(g.nodes[i]))
                    mass += c.weight * gaussian_interval_mass(c.mean_v, c.var_v, -cfg.v_domain, cfg.v_domain) *
                            gaussian_interval_mass(c.mean_w, c.var_w, -cfg.w_domain, cfg.w_domain);
                if (std::abs(mass - wsum) > 1e-10) {
                    fail(ErrorCode::MassNotNormalized,
                         "initial law at node " + std::to_string(i) + " loses " + fmt(wsum - mass) +
                             " of its mass to truncation");
                    break;
                }
            }
            break;
        }
        case InitialSpec::Kind::Tabulated: {
            if (init.table.size() != cfg.n_v * cfg.n_w) {
                fail(ErrorCode::MassNotNormalized, "tabulated initial density must have n_v * n_w values");
                break;
            }
            double mass = 0.0;
            bool nonneg = true;
            for (double x : init.table) {
                mass += x;
                nonneg = nonneg && x >= 0.0 && std::isfinite(x);
            }
            mass *= cfg.v_grid().width() * cfg.w_grid().width();
            if (!nonneg) fail(ErrorCode::MassNotNormalized, "tabulated initial density must be finite and nonnegative");
            if (std::abs(mass - 1.0) > 1e-10) fail(ErrorCode::MassNotNormalized, "tabulated initial mass is " + fmt(mass));
            break;
        }
    }

    if (res.violations.empty()) res.model = Model(cfg);
    return res;
}

Model make_model(const ModelConfig& cfg) {
    auto res = validate_config(cfg);
    if (!res.ok()) throw Error(res.violations.front().code, res.violations.front().message);
    return std::move(*res.model);
}

double eval_drift(const DriftSpec& drift, double v) { return horner(drift.expanded(), v); }

double eval_omega(const DriftSpec& drift, double v) { return eval_drift(drift, v) / v; }

std::vector<double> conv_right(const KernelSpec& kernel, const SpatialGrid& grid, const std::vector<double>& g) {
    const std::size_t n = grid.size();
    if (g.size() != n) throw Error(ErrorCode::DimensionMismatch, "conv_right expects one value per node");
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            acc += kernel.eval(i, j, grid.nodes[i], grid.nodes[j]) * grid.weights[j] * g[j];
        out[i] = acc;
    }
    return out;
}

std::vector<double> nonlocal_L(const KernelSpec& kernel, const SpatialGrid& grid, const std::vector<double>& V) {
    const std::size_t n = grid.size();
    if (V.size() != n) throw Error(ErrorCode::DimensionMismatch, "nonlocal_L expects one value per node");
    std::vector<double> rv(n);
    for (std::size_t j = 0; j < n; ++j) rv[j] = grid.rho0[j] * V[j];
    const auto a = conv_right(kernel, grid, grid.rho0);
    const auto b = conv_right(kernel, grid, rv);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = V[i] * a[i] - b[i];
    return out;
}

std::vector<double> maxwellian_profile(double rho, double eps, double V, const UniformGrid1D& v_grid) {
    if (!(rho > 0.0) || !(eps > 0.0)) throw Error(ErrorCode::InvalidConfig, "maxwellian needs rho > 0 and eps > 0");
    const double var = eps / rho;
    const double sd = std::sqrt(var);
    if (V - v_grid.lo < 6.0 * sd || v_grid.hi - V < 6.0 * sd)
        throw Error(ErrorCode::GridTooNarrow, "v-domain does not hold six standard deviations around " + fmt(V));
    std::vector<double> out(v_grid.n);
    double mass = 0.0;
    for (std::size_t i = 0; i < v_grid.n; ++i) {
        const double d = v_grid.center(i) - V;
        out[i] = std::exp(-d * d / (2.0 * var));
        mass += out[i];
    }
    mass *= v_grid.width();
    for (double& x : out) x /= mass;
    return out;
}

}  // namespace fhn
