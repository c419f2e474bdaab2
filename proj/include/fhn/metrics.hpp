#pragma once

#include <cstdint>
#include <vector>

#include "fhn/model.hpp"
#include "fhn/ot.hpp"
#include "fhn/quantile.hpp"

namespace fhn {

/// Finite weighted point cloud, either 2D (points) or 1D (scalars).
struct SampleSet {
    std::vector<Point2> points;
    std::vector<double> scalars;
    std::vector<double> weights;  // empty means uniform
    bool one_dimensional = false;

    static SampleSet from_points(std::vector<Point2> pts, std::vector<double> weights = {});
    static SampleSet from_scalars(std::vector<double> xs, std::vector<double> weights = {});

    std::size_t size() const { return one_dimensional ? scalars.size() : points.size(); }
    bool uniform() const { return weights.empty(); }
    double weight(std::size_t i) const { return weights.empty() ? 1.0 / static_cast<double>(size()) : weights[i]; }
    /// Throws on non-finite points or weights that do not sum to 1.
    void validate() const;
};

/// Density on a (v, w) cell grid, row-major in v then w.
struct GridDensity {
    UniformGrid1D v_grid;
    UniformGrid1D w_grid;
    std::vector<double> values;

    double cell_area() const { return v_grid.width() * w_grid.width(); }
    double mass() const;
    double at(std::size_t iv, std::size_t iw) const { return values[iv * w_grid.n + iw]; }
    std::vector<double> v_marginal_masses() const;
    std::vector<double> w_marginal_masses() const;
};

constexpr std::size_t kMaxSupport = 4096;

double w2_1d(const SampleSet& a, const SampleSet& b);
double w2_1d(const QuantileFunction& a, const QuantileFunction& b);
double w2_2d(const SampleSet& a, const SampleSet& b);
double w2_to_dirac_tensor(const SampleSet& samples, double V);

double moment_Mq(const SampleSet& s, double q, int p);
double moment_Mq(const GridDensity& d, double q, int p);
double relative_energy_Dq(const SampleSet& s, double q, double V, int p);
double relative_energy_Dq(const GridDensity& d, double q, double V, int p);

double modified_relative_entropy(const GridDensity& mu, const GridDensity& nu, double alpha);
double fisher_I_half(const GridDensity& mu, const GridDensity& nu);
double exp_moment_J(const GridDensity& d);
double entropy_H(const GridDensity& d);
double l1_distance(const GridDensity& mu, const GridDensity& nu);

/// Inverse-CDF draw over the flattened cells with uniform jitter inside each cell.
SampleSet sample_grid_density(const GridDensity& d, std::size_t n, std::uint64_t seed);
/// n^{-1/2} times the diameter of the sample cloud.
double sampling_noise_floor(const SampleSet& s);

QuantileFunction v_marginal_quantile(const GridDensity& d);
QuantileFunction w_marginal_quantile(const GridDensity& d);

/// Distance between a grid density and delta_V x mubar: sqrt of the centred second v-moment
/// (cell-centre quadrature) plus the squared W2 of the w-marginals.
double order0_distance(const GridDensity& mu, double V, const QuantileFunction& mubar);

struct DistanceBounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// Distance between a grid density and M x mubar where M is given on the density's v-grid.
/// Upper: conditional coupling with w first. Lower: sum of marginal distances.
DistanceBounds order1_distance(const GridDensity& mu, const std::vector<double>& maxwellian,
                               const QuantileFunction& mubar);

}  // namespace fhn
