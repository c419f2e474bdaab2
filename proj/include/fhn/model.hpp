#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fhn/errors.hpp"

namespace fhn {

/// Cell-centred uniform grid on [lo, hi] with n cells.
struct UniformGrid1D {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n = 1;

    double width() const { return (hi - lo) / static_cast<double>(n); }
    double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * width(); }
    double face(std::size_t i) const { return lo + static_cast<double>(i) * width(); }
    bool operator==(const UniformGrid1D&) const = default;
};

struct DriftSpec {
    enum class Kind { CubicDefault, Polynomial };
    Kind kind = Kind::CubicDefault;
    /// Ascending powers: N(v) = sum_k coefficients[k] v^k.
    std::vector<double> coefficients;
    int p = 3;

    /// Coefficients with cubic_default expanded and trailing zeros removed.
    std::vector<double> expanded() const;
};

struct AdaptationParams {
    double a = 1.0;
    double b = 1.0;
    double c = 0.0;

    double eval(double v, double w) const { return a * v - b * w + c; }
    double eval_centered(double v, double w) const { return a * v - b * w; }
};

struct KernelSpec {
    enum class Kind { Zero, Constant, SeparableCosine, Tabulated };
    Kind kind = Kind::Zero;
    double kappa = 0.0;
    double amplitude = 0.0;
    int frequency = 1;
    /// values[i][j] = Psi(x_i, x_j) on the spatial nodes.
    std::vector<std::vector<double>> values;
    double r = std::numeric_limits<double>::infinity();

    double eval(std::size_t i, std::size_t j, double xi, double xj) const;
    double r_conjugate() const;
};

struct SpatialGrid {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::vector<double> rho0;
    double m_star = 0.1;

    std::size_t size() const { return nodes.size(); }
    /// Midpoint grid on [0, 1] with n nodes and constant density.
    static SpatialGrid uniform(std::size_t n, double rho0_value = 1.0, double m_star = 0.1);
};

struct GaussianComponent {
    double weight = 1.0;
    double mean_v = 0.0;
    double mean_w = 0.0;
    double var_v = 1.0;
    double var_w = 1.0;
};

struct InitialSpec {
    enum class Kind { GaussianProduct, Mixture, Tabulated };
    Kind kind = Kind::GaussianProduct;
    GaussianComponent gaussian;
    /// Node-dependent offsets: mean_v(x) += amplitude_v sin(2 pi f x), likewise for w.
    double mean_v_amplitude = 0.0;
    double mean_w_amplitude = 0.0;
    int mean_frequency = 1;
    std::vector<GaussianComponent> components;
    /// Tabulated density on the (v, w) grid, row-major in v then w; shared by all nodes.
    std::vector<double> table;
    std::string path;

    /// Components with node-dependent means applied at position x.
    std::vector<GaussianComponent> components_at(double x) const;
};

struct Numerics {
    double epsilon = 0.1;
    double dt = 2e-3;
    double t_end = 1.0;
    bool test_mode = false;
    std::size_t n_quantiles = 512;
    /// Floor on the contraction of the moving w-frame of the kinetic solver.
    double frame_min_scale = 0.1;
    std::size_t max_subcycles = 256;
    double boundary_tolerance = 1e-6;
    std::string limiter = "van_leer";
};

struct ModelConfig {
    DriftSpec drift;
    AdaptationParams adaptation;
    KernelSpec kernel;
    SpatialGrid grid;
    double v_domain = 8.0;
    double w_domain = 8.0;
    std::size_t n_v = 256;
    std::size_t n_w = 128;
    Numerics numerics;
    InitialSpec initial;

    UniformGrid1D v_grid() const { return {-v_domain, v_domain, n_v}; }
    UniformGrid1D w_grid() const { return {-w_domain, w_domain, n_w}; }
};

/// The default experiment setup used throughout the acceptance runs.
ModelConfig default_config();

struct Violation {
    ErrorCode code;
    std::string message;
};

struct ValidationResult;
class Model;
ValidationResult validate_config(const ModelConfig& cfg);

/// A configuration that passed validation, with the spatial convolution precomputed.
class Model {
public:
    const ModelConfig& config() const { return cfg_; }
    double epsilon() const { return cfg_.numerics.epsilon; }
    std::size_t n_nodes() const { return cfg_.grid.size(); }
    double rho0(std::size_t i) const { return cfg_.grid.rho0[i]; }

    double drift(double v) const;
    double drift_prime(double v) const;
    double drift_second(double v) const;
    bool drift_is_linear() const { return coeffs_.size() <= 2; }
    const AdaptationParams& adaptation() const { return cfg_.adaptation; }

    /// (Psi *_r g)(x_i) by midpoint quadrature, summed in ascending j.
    std::vector<double> conv_right(const std::vector<double>& g) const;
    /// Cached (Psi *_r rho0)(x_i).
    const std::vector<double>& psi_rho0() const { return psi_rho0_; }
    std::vector<double> nonlocal_L(const std::vector<double>& V) const;
    bool kernel_is_zero() const { return cfg_.kernel.kind == KernelSpec::Kind::Zero; }

    /// Same problem with a different epsilon; revalidated.
    Model with_epsilon(double eps) const;

    /// Builds without checking structural assumptions. Only for tests of degenerate cases.
    static Model unchecked(const ModelConfig& cfg);

private:
    friend ValidationResult validate_config(const ModelConfig& cfg);
    explicit Model(ModelConfig cfg);

    ModelConfig cfg_;
    std::vector<double> coeffs_;
    std::vector<double> conv_matrix_;  // Psi(x_i, x_j) * weight_j, row-major
    std::vector<double> psi_rho0_;
};

struct ValidationResult {
    std::optional<Model> model;
    std::vector<Violation> violations;
    bool ok() const { return model.has_value(); }
};

/// validate_config, raising the first violation.
Model make_model(const ModelConfig& cfg);

double eval_drift(const DriftSpec& drift, double v);
/// N(v) / v; requires v != 0.
double eval_omega(const DriftSpec& drift, double v);

std::vector<double> conv_right(const KernelSpec& kernel, const SpatialGrid& grid,
                               const std::vector<double>& g);
/// L[V] = V (Psi *_r rho0) - Psi *_r (rho0 V).
std::vector<double> nonlocal_L(const KernelSpec& kernel, const SpatialGrid& grid,
                               const std::vector<double>& V);

/// Gaussian with mean V and variance eps/rho sampled at the cell centres, unit grid mass.
std::vector<double> maxwellian_profile(double rho, double eps, double V, const UniformGrid1D& v_grid);

/// Truncated mass of N(mean, var) on [lo, hi].
double gaussian_interval_mass(double mean, double var, double lo, double hi);

}  // namespace fhn
