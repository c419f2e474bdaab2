#include "fhn/particles.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/special_functions/erf.hpp>

#include "fhn/io.hpp"
#include "fhn/rng.hpp"

namespace fhn {

namespace {

constexpr int kFixedBits = 60;

void check_finite(const ParticleEnsemble& e, const char* substep) {
    for (std::size_t n = 0; n < e.n_nodes(); ++n)
        for (std::size_t k = 0; k < e.v[n].size(); ++k)
            if (!std::isfinite(e.v[n][k]) || !std::isfinite(e.w[n][k]))
                throw Error(ErrorCode::NonFinite, "particle " + std::to_string(e.id[n][k]) + " at node " +
                                                      std::to_string(n) + " non-finite after " + substep +
                                                      " substep, t = " + fmt17(e.t));
}

std::vector<double> means(const std::vector<std::vector<double>>& v) {
    std::vector<double> out(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) out[n] = node_mean(v[n]);
    return out;
}

std::vector<double> field(const Model& model, const std::vector<double>& Vhat) {
    std::vector<double> rv(Vhat.size());
    for (std::size_t n = 0; n < Vhat.size(); ++n) rv[n] = model.rho0(n) * Vhat[n];
    return model.conv_right(rv);
}

// Midpoint rule over h for the deterministic part, with node means refreshed at each stage.
void drift(ParticleEnsemble& e, const Model& model, double h) {
    const auto& ad = model.adaptation();
    const auto& psi = model.psi_rho0();
    const auto G0 = field(model, means(e.v));
    std::vector<std::vector<double>> vm(e.n_nodes()), wm(e.n_nodes());
    for (std::size_t n = 0; n < e.n_nodes(); ++n) {
        const auto& v = e.v[n];
        const auto& w = e.w[n];
        vm[n].resize(v.size());
        wm[n].resize(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) {
            vm[n][k] = v[k] + 0.5 * h * (model.drift(v[k]) - w[k] - psi[n] * v[k] + G0[n]);
            wm[n][k] = w[k] + 0.5 * h * ad.eval(v[k], w[k]);
        }
    }
    const auto G1 = field(model, means(vm));
    for (std::size_t n = 0; n < e.n_nodes(); ++n) {
        auto& v = e.v[n];
        auto& w = e.w[n];
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double a = vm[n][k], b = wm[n][k];
            v[k] += h * (model.drift(a) - b - psi[n] * a + G1[n]);
            w[k] += h * ad.eval(a, b);
        }
    }
}

double normal_quantile(double u) { return std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0); }

void step_impl(ParticleEnsemble& e, const Model& model, double dt, const MacroState* macro) {
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidConfig, "dt must be positive");
    const double eps = model.epsilon();
    const std::uint64_t step = e.step_index;

    drift(e, model, 0.5 * dt);
    check_finite(e, "first drift");

    const auto Vhat = means(e.v);
    std::vector<double> V_old, V_new;
    if (macro) {
        V_old = e.companion_V;
        V_new = macro->V;
    }
    for (std::size_t n = 0; n < e.n_nodes(); ++n) {
        const double rho = model.rho0(n);
        const double lam = std::exp(-rho * dt / eps);
        const double sd = std::sqrt((eps / rho) * -std::expm1(-2.0 * rho * dt / eps)) * e.noise_scale;
        auto& v = e.v[n];
        for (std::size_t k = 0; k < v.size(); ++k) {
            const double xi = normal_draw({e.rng_seed, Stream::OuNoise, step, static_cast<std::uint32_t>(n), e.id[n][k]});
            v[k] = Vhat[n] + (v[k] - Vhat[n]) * lam + sd * xi;
            if (macro) {
                auto& vp = e.v_prime[n][k];
                vp = V_new[n] + (vp - V_old[n]) * lam + sd * xi;
                auto& wp = e.w_prime[n][k];
                wp = macro->last_alpha * wp + macro->last_beta[n];
            }
        }
    }
    check_finite(e, "relaxation");

    drift(e, model, 0.5 * dt);
    check_finite(e, "second drift");
    if (macro) e.companion_V = V_new;
    e.t += dt;
    ++e.step_index;
}

}  // namespace

double node_mean(const std::vector<double>& v) {
    if (v.empty()) throw Error(ErrorCode::EmptyNode, "node has no particles");
    __int128 acc = 0;
    for (double x : v) acc += static_cast<__int128>(std::ldexp(x, kFixedBits));
    return std::ldexp(static_cast<double>(acc), -kFixedBits) / static_cast<double>(v.size());
}

ParticleEnsemble init_particles(const Model& model, std::size_t n_per_node, std::uint64_t seed) {
    if (n_per_node == 0) throw Error(ErrorCode::InvalidConfig, "n_per_node must be positive");
    if (n_per_node > 0xFFFFFFFFull) throw Error(ErrorCode::TooLarge, "particle ids are 32-bit");
    const auto& cfg = model.config();
    if (cfg.initial.kind == InitialSpec::Kind::Tabulated)
        throw Error(ErrorCode::UnsupportedInitial, "tabulated initial laws have no particle sampler");
    ParticleEnsemble e;
    e.rng_seed = seed;
    e.n_per_node = n_per_node;
    const std::size_t N = model.n_nodes();
    e.v.resize(N);
    e.w.resize(N);
    e.id.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
        const auto comps = cfg.initial.components_at(cfg.grid.nodes[n]);
        std::vector<double> cum;
        double total = 0.0;
        for (const auto& c : comps) cum.push_back(total += c.weight);
        const auto node = static_cast<std::uint32_t>(n);
        e.v[n].resize(n_per_node);
        e.w[n].resize(n_per_node);
        e.id[n].resize(n_per_node);
        for (std::size_t k = 0; k < n_per_node; ++k) {
            const auto id = static_cast<std::uint32_t>(k);
            std::size_t c = 0;
            if (comps.size() > 1) {
                const double u = uniform_draw({seed, Stream::InitComponent, 0, node, id}) * total;
                c = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
                c = std::min(c, comps.size() - 1);
            }
            const auto& g = comps[c];
            e.v[n][k] = g.mean_v + std::sqrt(g.var_v) * normal_draw({seed, Stream::InitV, 0, node, id});
            e.w[n][k] = g.mean_w + std::sqrt(g.var_w) * normal_draw({seed, Stream::InitW, 0, node, id});
            e.id[n][k] = id;
        }
    }
    return e;
}

void attach_companions(ParticleEnsemble& e, const Model& model, const MacroState& macro) {
    if (macro.V.size() != e.n_nodes()) throw Error(ErrorCode::DimensionMismatch, "macro state has wrong node count");
    if (std::abs(macro.t - e.t) > 1e-12) throw Error(ErrorCode::MissingMacroPath, "macro state is not at the ensemble time");
    const double eps = model.epsilon();
    e.v_prime.assign(e.n_nodes(), {});
    e.w_prime = e.w;
    e.companion_V = macro.V;
    for (std::size_t n = 0; n < e.n_nodes(); ++n) {
        const auto& v = e.v[n];
        const std::size_t m = v.size();
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return v[a] < v[b] || (v[a] == v[b] && e.id[n][a] < e.id[n][b]);
        });
        const double sd = std::sqrt(eps / model.rho0(n));
        e.v_prime[n].resize(m);
        for (std::size_t r = 0; r < m; ++r)
            e.v_prime[n][order[r]] =
                macro.V[n] + sd * normal_quantile((static_cast<double>(r) + 0.5) / static_cast<double>(m));
    }
}

void advance_particles(ParticleEnsemble& ens, const Model& model, double dt) {
    if (ens.has_companions())
        throw Error(ErrorCode::MissingMacroPath, "an ensemble with companions must be advanced with its macro state");
    step_impl(ens, model, dt, nullptr);
}

ParticleEnsemble step_particles(const ParticleEnsemble& ens, const Model& model, double dt) {
    ParticleEnsemble out = ens;
    out.v_prime.clear();
    out.w_prime.clear();
    out.companion_V.clear();
    advance_particles(out, model, dt);
    return out;
}

void advance_coupled(ParticleEnsemble& ens, const Model& model, const MacroState& macro, double dt) {
    if (!ens.has_companions()) throw Error(ErrorCode::MissingCompanions, "ensemble has no companions");
    if (macro.V.size() != ens.n_nodes() || macro.last_beta.size() != ens.n_nodes() ||
        std::abs(macro.t - (ens.t + dt)) > 1e-9 * std::max(1.0, macro.t))
        throw Error(ErrorCode::MissingMacroPath, "macro state must be advanced to t = " + fmt17(ens.t + dt));
    step_impl(ens, model, dt, &macro);
}

ParticleEnsemble step_coupled(const ParticleEnsemble& ens, const Model& model, const MacroState& macro, double dt) {
    ParticleEnsemble out = ens;
    advance_coupled(out, model, macro, dt);
    return out;
}

CouplingEnergies coupling_energies(const ParticleEnsemble& e, const Model& model) {
    if (!e.has_companions()) throw Error(ErrorCode::MissingCompanions, "ensemble has no companions");
    const double eps = model.epsilon();
    CouplingEnergies out;
    out.t = e.t;
    for (std::size_t n = 0; n < e.n_nodes(); ++n) {
        const std::size_t m = e.v[n].size();
        double a = 0.0, b = 0.0, c = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            const double dv = e.v[n][k] - e.v_prime[n][k];
            const double dw = e.w[n][k] - e.w_prime[n][k];
            a += dv * dv;
            b += dw * dw;
            c += (e.v_prime[n][k] - e.companion_V[n]) * dw;
        }
        const double inv = 1.0 / static_cast<double>(m);
        out.A_energy.push_back(a * inv / eps);
        out.B_energy.push_back(b * inv);
        out.B2_cross.push_back(c * inv / std::sqrt(eps));
    }
    return out;
}

std::vector<double> pairwise_local_term(const ParticleEnsemble& e, const Model& model, std::size_t node) {
    if (node >= e.n_nodes()) throw Error(ErrorCode::DimensionMismatch, "node index out of range");
    const auto& v = e.v[node];
    if (v.size() > 1000) throw Error(ErrorCode::TooLarge, "pairwise cross-check is limited to 1000 particles");
    const double scale = model.rho0(node) / model.epsilon() / static_cast<double>(v.size());
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < v.size(); ++k) acc += v[k] - v[i];
        out[i] = scale * acc;
    }
    return out;
}

SampleSet empirical_samples(const ParticleEnsemble& e, std::size_t node) {
    if (node >= e.n_nodes()) throw Error(ErrorCode::DimensionMismatch, "node index out of range");
    std::vector<Point2> pts(e.v[node].size());
    for (std::size_t k = 0; k < pts.size(); ++k) pts[k] = {e.v[node][k], e.w[node][k]};
    return SampleSet::from_points(std::move(pts));
}

void write_particle_dump(const ParticleEnsemble& e, std::size_t node, const std::filesystem::path& path) {
    if (node >= e.n_nodes()) throw Error(ErrorCode::DimensionMismatch, "node index out of range");
    const bool comp = e.has_companions();
    std::string buf = comp ? "v,w,v_prime,w_prime\n" : "v,w\n";
    for (std::size_t k = 0; k < e.v[node].size(); ++k) {
        buf += fmt17(e.v[node][k]) + "," + fmt17(e.w[node][k]);
        if (comp) buf += "," + fmt17(e.v_prime[node][k]) + "," + fmt17(e.w_prime[node][k]);
        buf += "\n";
    }
    write_text(path, buf);
}

}  // namespace fhn
