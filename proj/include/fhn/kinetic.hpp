#pragma once

#include <filesystem>
#include <vector>

#include "fhn/metrics.hpp"
#include "fhn/model.hpp"

namespace fhn {

/// Discrete mean-field density, one (v, xi) grid per spatial node.
///
/// The w-axis of each node is a moving affine frame w = frame_center + frame_scale * xi that
/// follows the mean adaptation flow, so the fixed xi-grid stays resolved as the w-spread
/// contracts. `density` holds the density with respect to (v, xi), node-major, then v, then xi.
struct KineticState {
    double t = 0.0;
    UniformGrid1D v_grid;
    UniformGrid1D xi_grid;
    std::size_t n_nodes = 0;
    std::vector<double> density;
    std::vector<double> frame_center;
    std::vector<double> frame_scale;
    std::vector<double> cached_V;
    std::vector<double> cached_W;
    std::vector<double> boundary_loss;
    /// Largest transport subcycle count used by the last step.
    std::size_t last_subcycles = 1;

    std::size_t cells() const { return v_grid.n * xi_grid.n; }
    const double* node_data(std::size_t node) const { return density.data() + node * cells(); }
    double* node_data(std::size_t node) { return density.data() + node * cells(); }
    double node_mass(std::size_t node) const;
    /// Physical w at the centre of xi-cell j of a node.
    double w_at(std::size_t node, std::size_t j) const {
        return frame_center[node] + frame_scale[node] * xi_grid.center(j);
    }
    /// Density of a node in physical (v, w) coordinates on that node's current w-grid.
    GridDensity physical(std::size_t node) const;
};

KineticState init_kinetic(const Model& model);

struct NodeMacros {
    double V;
    double W;
};

/// Recomputes and caches the first moments of every node.
std::vector<NodeMacros> compute_macros(KineticState& state);

/// One step of (half transport) o (exact stiff relaxation) o (half transport).
KineticState step_kinetic(const KineticState& state, const Model& model, double dt);
void advance_kinetic(KineticState& state, const Model& model, double dt);

/// Density of ((v - V)/sqrt(eps), w - W) on the exactly transformed native grid.
GridDensity rescale_to_nu(const KineticState& state, const Model& model, std::size_t node);
/// Mass- and mean-preserving cloud-in-cell transfer onto another grid.
GridDensity remap_density(const GridDensity& src, const UniformGrid1D& v_grid, const UniformGrid1D& w_grid);

/// Per node: integral of N(v) against the node law minus N(V).
std::vector<double> error_functional(const KineticState& state, const Model& model);

/// `v,w,density` dump of one node in physical coordinates.
void write_kinetic_snapshot(const KineticState& state, std::size_t node, const std::filesystem::path& path);

}  // namespace fhn
