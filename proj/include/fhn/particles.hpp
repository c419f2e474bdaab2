#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "fhn/macro.hpp"
#include "fhn/metrics.hpp"
#include "fhn/model.hpp"

namespace fhn {

/// Per-node particle arrays. Each particle carries a stable id that keys its noise draws,
/// so permuting the arrays permutes the trajectories.
struct ParticleEnsemble {
    double t = 0.0;
    std::uint64_t rng_seed = 0;
    std::uint64_t step_index = 0;
    std::size_t n_per_node = 0;
    std::vector<std::vector<double>> v, w;
    std::vector<std::vector<std::uint32_t>> id;
    /// Companion states driven by the limit dynamics and the same noise draws.
    std::vector<std::vector<double>> v_prime, w_prime;
    /// Limit mean V used for the companions at time t.
    std::vector<double> companion_V;
    /// Multiplies every noise increment; 0 switches the noise off.
    double noise_scale = 1.0;

    std::size_t n_nodes() const { return v.size(); }
    bool has_companions() const { return !v_prime.empty(); }
};

struct CouplingEnergies {
    double t = 0.0;
    std::vector<double> A_energy, B_energy, B2_cross;
};

ParticleEnsemble init_particles(const Model& model, std::size_t n_per_node, std::uint64_t seed);

/// Adds companions from the limit state at the ensemble time: v' is the monotone rearrangement
/// of the node's v onto the Maxwellian around V, w' = w.
void attach_companions(ParticleEnsemble& ens, const Model& model, const MacroState& macro);

ParticleEnsemble step_particles(const ParticleEnsemble& ens, const Model& model, double dt);
void advance_particles(ParticleEnsemble& ens, const Model& model, double dt);

/// `macro` must already have been advanced from ens.t to ens.t + dt.
ParticleEnsemble step_coupled(const ParticleEnsemble& ens, const Model& model, const MacroState& macro, double dt);
void advance_coupled(ParticleEnsemble& ens, const Model& model, const MacroState& macro, double dt);

CouplingEnergies coupling_energies(const ParticleEnsemble& ens, const Model& model);

/// Order-independent empirical v-mean of one node.
double node_mean(const std::vector<double>& v);

/// O(n^2) local interaction (rho0/eps) (1/n) sum_k (v_k - v_i) per particle; n <= 1000.
std::vector<double> pairwise_local_term(const ParticleEnsemble& ens, const Model& model, std::size_t node);

SampleSet empirical_samples(const ParticleEnsemble& ens, std::size_t node);

/// `v,w[,v_prime,w_prime]` dump of one node.
void write_particle_dump(const ParticleEnsemble& ens, std::size_t node, const std::filesystem::path& path);

}  // namespace fhn
