#include "fhn/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fhn/io.hpp"

namespace fhn {

namespace {

constexpr double kCfl = 0.45;
constexpr double kFlush = 1e-14;
constexpr double kEdgeMass = 1e-12;
constexpr double kNarrowKernel = 0.85;

inline double limited_slope(double a, double b, bool van_leer) {
    if (a * b <= 0.0) return 0.0;
    if (van_leer) return 2.0 * a * b / (a + b);
    return std::abs(a) < std::abs(b) ? a : b;
}

struct Box {
    std::size_t r0 = 0, r1 = 0, c0 = 0, c1 = 0;
    bool empty() const { return r1 <= r0 || c1 <= c0; }
};

Box active_box(const double* f, std::size_t nv, std::size_t nw) {
    Box b{nv, 0, nw, 0};
    for (std::size_t i = 0; i < nv; ++i) {
        const double* row = f + i * nw;
        std::size_t lo = nw, hi = 0;
        for (std::size_t j = 0; j < nw; ++j)
            if (row[j] != 0.0) {
                if (lo == nw) lo = j;
                hi = j + 1;
            }
        if (lo == nw) continue;
        b.r0 = std::min(b.r0, i);
        b.r1 = i + 1;
        b.c0 = std::min(b.c0, lo);
        b.c1 = std::max(b.c1, hi);
    }
    return b;
}

Box expand(Box b, std::size_t m, std::size_t nv, std::size_t nw) {
    b.r0 = b.r0 > m ? b.r0 - m : 0;
    b.c0 = b.c0 > m ? b.c0 - m : 0;
    b.r1 = std::min(b.r1 + m, nv);
    b.c1 = std::min(b.c1 + m, nw);
    return b;
}

class Solver {
public:
    Solver(KineticState& s, const Model& m)
        : s_(s), m_(m), nv_(s.v_grid.n), nw_(s.xi_grid.n), hv_(s.v_grid.width()), hx_(s.xi_grid.width()),
          van_leer_(m.config().numerics.limiter == "van_leer") {}

    void step(double dt) {
        s_.last_subcycles = 1;
        compute_macros(s_);
        transport(0.5 * dt);
        compute_macros(s_);
        relax(dt);
        compute_macros(s_);
        transport(0.5 * dt);
        compute_macros(s_);
        s_.t += dt;
        const double tol = m_.config().numerics.boundary_tolerance;
        for (std::size_t n = 0; n < s_.n_nodes; ++n) {
            if (!std::isfinite(s_.cached_V[n]) || !std::isfinite(s_.cached_W[n]))
                throw Error(ErrorCode::NonFinite, "kinetic moments non-finite at node " + std::to_string(n));
            if (s_.boundary_loss[n] > tol)
                throw Error(ErrorCode::BoundaryMassExceeded,
                            "node " + std::to_string(n) + " lost " + fmt17(s_.boundary_loss[n]) + " at t = " +
                                fmt17(s_.t));
        }
    }

private:
    void transport(double h) {
        xi_sweep(0.5 * h);
        v_sweep(h);
        compute_macros(s_);
        xi_sweep(0.5 * h);
    }

    std::size_t subcycles(double max_speed, double h, double width) const {
        const double need = std::ceil(max_speed * h / (kCfl * width));
        const auto cap = m_.config().numerics.max_subcycles;
        if (!(need <= static_cast<double>(cap)))
            throw Error(ErrorCode::CflViolation, "transport needs " + fmt17(need) + " subcycles, cap is " +
                                                     std::to_string(cap) + " at t = " + fmt17(s_.t));
        const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(need));
        s_.last_subcycles = std::max(s_.last_subcycles, n);
        return n;
    }

    // mass in the outer quarter of the xi range on each side
    double edge_mass(const double* f, const Box& nz) const {
        const double edge = 0.75 * s_.xi_grid.face(nw_);
        double m = 0.0;
        for (std::size_t i = nz.r0; i < nz.r1; ++i)
            for (std::size_t j = nz.c0; j < nz.c1; ++j)
                if (std::abs(s_.xi_grid.center(j)) > edge) m += f[i * nw_ + j];
        return m * hv_ * hx_;
    }

    void flush(std::size_t node) {
        double* f = s_.node_data(node);
        double peak = 0.0;
        for (std::size_t k = 0; k < s_.cells(); ++k) peak = std::max(peak, f[k]);
        const double thr = kFlush * peak;
        double removed = 0.0;
        for (std::size_t k = 0; k < s_.cells(); ++k)
            if (f[k] != 0.0 && f[k] < thr) {
                removed += f[k];
                f[k] = 0.0;
            }
        s_.boundary_loss[node] += removed * hv_ * hx_;
    }

    // ---- transport in xi (per node, independent) ----

    void xi_sweep(double h) {
        const auto& ad = m_.adaptation();
        for (std::size_t n = 0; n < s_.n_nodes; ++n) {
            double* f = s_.node_data(n);
            const Box nz = active_box(f, nv_, nw_);
            if (nz.empty()) throw Error(ErrorCode::EmptyNode, "node " + std::to_string(n) + " has no mass");
            const double V = s_.cached_V[n];
            const double S0 = s_.frame_scale[n];
            const double decay = std::exp(-ad.b * h);
            const bool contracting =
                S0 * decay >= m_.config().numerics.frame_min_scale && edge_mass(f, nz) <= kEdgeMass * s_.node_mass(n);

            double vmax = 0.0;
            for (std::size_t i = nz.r0; i < nz.r1; ++i) vmax = std::max(vmax, std::abs(ad.a * (s_.v_grid.center(i) - V)));
            const Box bx = expand(nz, 2, nv_, nw_);
            double speed;
            if (contracting) {
                speed = vmax / (S0 * decay);
            } else {
                const double xmax = std::max(std::abs(s_.xi_grid.face(bx.c0)), std::abs(s_.xi_grid.face(bx.c1)));
                speed = (vmax + ad.b * S0 * xmax) / S0;
            }
            const std::size_t nsub = subcycles(speed, h, hx_);
            const double hs = h / static_cast<double>(nsub);

            stage_.resize(s_.cells());
            std::copy(f, f + s_.cells(), stage_.begin());
            double out_total = 0.0;
            for (std::size_t k = 0; k < nsub; ++k) {
                const double t0 = static_cast<double>(k) * hs;
                const Box b = k == 0 ? bx : expand(active_box(f, nv_, nw_), 2, nv_, nw_);
                const double S_a = contracting ? S0 * std::exp(-ad.b * t0) : S0;
                const double S_b = contracting ? S0 * std::exp(-ad.b * (t0 + hs)) : S0;
                double out0 = 0.0, out1 = 0.0;
                xi_stage(f, f, stage_.data(), 0.0, 1.0, hs, V, S_a, contracting, b, out0);
                xi_stage(stage_.data(), f, f, 0.5, 0.5, hs, V, S_b, contracting, b, out1);
                out_total += 0.5 * (out0 + out1) * hs * hv_;
            }
            s_.boundary_loss[n] += out_total;
            const double C0 = s_.frame_center[n];
            s_.frame_center[n] = C0 * decay + (ad.a * V + ad.c) * (1.0 - decay) / ad.b;
            if (contracting) s_.frame_scale[n] = S0 * decay;
            flush(n);
        }
    }

    // dst = a * base + b * (src - hs * d/dxi(u src)) on the rows and columns of box.
    void xi_stage(const double* src, const double* base, double* dst, double a, double b, double hs, double V,
                  double S, bool contracting, const Box& box, double& out) {
        const auto& ad = m_.adaptation();
        const double r = hs / hx_;
        std::vector<double>& F = flux_;
        F.resize(nw_ + 1);
        for (std::size_t i = box.r0; i < box.r1; ++i) {
            const double* row = src + i * nw_;
            const double drive = ad.a * (s_.v_grid.center(i) - V);
            auto val = [&](std::size_t j) { return j < nw_ ? row[j] : 0.0; };
            auto slope = [&](std::size_t j) {
                const double left = j > 0 ? row[j - 1] : 0.0;
                return limited_slope(row[j] - left, val(j + 1) - row[j], van_leer_);
            };
            for (std::size_t j = box.c0; j <= box.c1; ++j) {
                const double xf = s_.xi_grid.face(j);
                const double u = contracting ? drive / S : (drive - ad.b * S * xf) / S;
                double flux = 0.0;
                if (u > 0.0) {
                    if (j > 0) flux = u * (row[j - 1] + 0.5 * slope(j - 1));
                } else if (j < nw_) {
                    flux = u * (row[j] - 0.5 * slope(j));
                }
                F[j] = flux;
            }
            if (box.c0 == 0 && F[0] < 0.0) out -= F[0];
            if (box.c1 == nw_ && F[nw_] > 0.0) out += F[nw_];
            const double* brow = base + i * nw_;
            double* drow = dst + i * nw_;
            for (std::size_t j = box.c0; j < box.c1; ++j)
                drow[j] = a * brow[j] + b * (row[j] - r * (F[j + 1] - F[j]));
        }
    }

    // ---- transport in v (all nodes per stage; nonlocal field refreshed between stages) ----

    std::vector<double> field_offsets(const double* all) {
        std::vector<double> V(s_.n_nodes);
        for (std::size_t n = 0; n < s_.n_nodes; ++n) {
            const double* f = all + n * s_.cells();
            double mass = 0.0, mom = 0.0;
            for (std::size_t i = 0; i < nv_; ++i) {
                const double* row = f + i * nw_;
                double acc = 0.0;
                for (std::size_t j = 0; j < nw_; ++j) acc += row[j];
                mass += acc;
                mom += acc * s_.v_grid.center(i);
            }
            V[n] = mom / mass;
        }
        std::vector<double> rv(s_.n_nodes);
        for (std::size_t n = 0; n < s_.n_nodes; ++n) rv[n] = m_.rho0(n) * V[n];
        return m_.conv_right(rv);
    }

    void v_sweep(double h) {
        const std::size_t N = s_.n_nodes;
        std::vector<Box> boxes(N);
        double speed = 0.0;
        const auto G = field_offsets(s_.density.data());
        for (std::size_t n = 0; n < N; ++n) {
            const Box nz = active_box(s_.node_data(n), nv_, nw_);
            if (nz.empty()) throw Error(ErrorCode::EmptyNode, "node " + std::to_string(n) + " has no mass");
            const Box b = expand(nz, 2, nv_, nw_);
            boxes[n] = b;
            const double wlo = s_.w_at(n, b.c0), whi = s_.w_at(n, b.c1 - 1);
            for (std::size_t i = b.r0; i <= b.r1; ++i) {
                const double vf = s_.v_grid.face(i);
                const double base = m_.drift(vf) - m_.psi_rho0()[n] * vf + G[n];
                speed = std::max({speed, std::abs(base - wlo), std::abs(base - whi)});
            }
        }
        const std::size_t nsub = subcycles(speed, h, hv_);
        const double hs = h / static_cast<double>(nsub);
        all_stage_.resize(s_.density.size());

        std::vector<double> out0(N), out1(N);
        for (std::size_t k = 0; k < nsub; ++k) {
            if (k > 0)
                for (std::size_t n = 0; n < N; ++n) boxes[n] = expand(active_box(s_.node_data(n), nv_, nw_), 2, nv_, nw_);
            const auto G0 = k == 0 ? G : field_offsets(s_.density.data());
            for (std::size_t n = 0; n < N; ++n) {
                out0[n] = 0.0;
                double* f = s_.node_data(n);
                double* g = all_stage_.data() + n * s_.cells();
                std::copy(f, f + s_.cells(), g);
                v_stage(n, f, f, g, 0.0, 1.0, hs, G0[n], boxes[n], out0[n]);
            }
            const auto G1 = field_offsets(all_stage_.data());
            for (std::size_t n = 0; n < N; ++n) {
                out1[n] = 0.0;
                double* f = s_.node_data(n);
                const double* g = all_stage_.data() + n * s_.cells();
                v_stage(n, g, f, f, 0.5, 0.5, hs, G1[n], boxes[n], out1[n]);
                s_.boundary_loss[n] += 0.5 * (out0[n] + out1[n]) * hs * hx_;
            }
        }
        for (std::size_t n = 0; n < N; ++n) flush(n);
    }

    // dst = a * base + b * (src - hs * d/dv(b_v src)) on the rows and columns of box.
    void v_stage(std::size_t n, const double* src, const double* base, double* dst, double a, double b, double hs,
                 double G, const Box& box, double& out) {
        const double r = hs / hv_;
        const std::size_t cw = box.c1 - box.c0;
        wcol_.resize(cw);
        for (std::size_t j = 0; j < cw; ++j) wcol_[j] = s_.w_at(n, box.c0 + j);
        // slope rows for i in [r0 - 1, r1]; index shift by one
        const std::size_t rows = box.r1 - box.r0 + 2;
        slopes_.assign(rows * cw, 0.0);
        auto at = [&](std::size_t i, std::size_t j) -> double {
            return i < nv_ ? src[i * nw_ + box.c0 + j] : 0.0;
        };
        for (std::size_t ii = 0; ii < rows; ++ii) {
            if (box.r0 + ii == 0) continue;
            const std::size_t i = box.r0 + ii - 1;
            if (i >= nv_) continue;
            double* srow = slopes_.data() + ii * cw;
            for (std::size_t j = 0; j < cw; ++j) {
                const double c = at(i, j);
                const double left = i > 0 ? at(i - 1, j) : 0.0;
                srow[j] = limited_slope(c - left, at(i + 1, j) - c, van_leer_);
            }
        }
        auto slope = [&](std::size_t i, std::size_t j) { return slopes_[(i + 1 - box.r0) * cw + j]; };

        prev_.assign(cw, 0.0);
        next_.assign(cw, 0.0);
        const double psi = m_.psi_rho0()[n];
        auto face_flux = [&](std::size_t i, std::vector<double>& F) {
            const double vf = s_.v_grid.face(i);
            const double base_v = m_.drift(vf) - psi * vf + G;
            for (std::size_t j = 0; j < cw; ++j) {
                const double u = base_v - wcol_[j];
                double flux = 0.0;
                if (u > 0.0) {
                    if (i > 0) flux = u * (at(i - 1, j) + 0.5 * slope(i - 1, j));
                } else if (i < nv_) {
                    flux = u * (at(i, j) - 0.5 * slope(i, j));
                }
                F[j] = flux;
            }
        };
        face_flux(box.r0, prev_);
        if (box.r0 == 0)
            for (std::size_t j = 0; j < cw; ++j)
                if (prev_[j] < 0.0) out -= prev_[j];
        for (std::size_t i = box.r0; i < box.r1; ++i) {
            face_flux(i + 1, next_);
            const double* srow = src + i * nw_ + box.c0;
            const double* brow = base + i * nw_ + box.c0;
            double* drow = dst + i * nw_ + box.c0;
            for (std::size_t j = 0; j < cw; ++j) drow[j] = a * brow[j] + b * (srow[j] - r * (next_[j] - prev_[j]));
            std::swap(prev_, next_);
        }
        if (box.r1 == nv_)
            for (std::size_t j = 0; j < cw; ++j)
                if (prev_[j] > 0.0) out += prev_[j];
    }

    // ---- exact stiff relaxation in v ----

    void relax(double dt) {
        const double eps = m_.epsilon();
        const double lo = s_.v_grid.lo;
        for (std::size_t n = 0; n < s_.n_nodes; ++n) {
            const double rho = m_.rho0(n);
            const double V = s_.cached_V[n];
            const double lam = std::exp(-rho * dt / eps);
            const double var = (eps / rho) * -std::expm1(-2.0 * rho * dt / eps);
            const double sd = std::sqrt(var);
            double* f = s_.node_data(n);
            const Box b = active_box(f, nv_, nw_);
            if (b.empty()) throw Error(ErrorCode::EmptyNode, "node " + std::to_string(n) + " has no mass");
            relaxed_.assign(s_.cells(), 0.0);
            double lost = 0.0;
            for (std::size_t i = b.r0; i < b.r1; ++i) {
                const double mean = V + (s_.v_grid.center(i) - V) * lam;
                long first = 0;
                kernel_.clear();
                if (sd >= kNarrowKernel * hv_) {
                    first = static_cast<long>(std::floor((mean - 8.0 * sd - lo) / hv_ - 0.5));
                    const long last = static_cast<long>(std::ceil((mean + 8.0 * sd - lo) / hv_ - 0.5));
                    double z = 0.0;
                    for (long j = first; j <= last; ++j) {
                        const double d = lo + (static_cast<double>(j) + 0.5) * hv_ - mean;
                        kernel_.push_back(std::exp(-d * d / (2.0 * var)));
                        z += kernel_.back();
                    }
                    for (double& k : kernel_) k /= z;
                } else {
                    const long j0 = std::lround((mean - lo) / hv_ - 0.5);
                    const double d = (mean - (lo + (static_cast<double>(j0) + 0.5) * hv_)) / hv_;
                    const double s2 = var / (hv_ * hv_);
                    const double q = s2 + d * d;
                    if (q <= 1.0 && q >= std::abs(d)) {
                        first = j0 - 1;
                        kernel_ = {0.5 * (q - d), 1.0 - q, 0.5 * (q + d)};
                    } else if (d >= 0.0) {
                        first = j0;
                        kernel_ = {1.0 - d, d};
                    } else {
                        first = j0 - 1;
                        kernel_ = {-d, 1.0 + d};
                    }
                }
                const double* src = f + i * nw_;
                double row_mass = 0.0;
                for (std::size_t c = b.c0; c < b.c1; ++c) row_mass += src[c];
                for (std::size_t k = 0; k < kernel_.size(); ++k) {
                    const long j = first + static_cast<long>(k);
                    const double wgt = kernel_[k];
                    if (wgt == 0.0) continue;
                    if (j < 0 || j >= static_cast<long>(nv_)) {
                        lost += wgt * row_mass;
                        continue;
                    }
                    double* dst = relaxed_.data() + static_cast<std::size_t>(j) * nw_;
                    for (std::size_t c = b.c0; c < b.c1; ++c) dst[c] += wgt * src[c];
                }
            }
            std::copy(relaxed_.begin(), relaxed_.end(), f);
            s_.boundary_loss[n] += lost * hv_ * hx_;
            flush(n);
        }
    }

    KineticState& s_;
    const Model& m_;
    std::size_t nv_, nw_;
    double hv_, hx_;
    bool van_leer_;
    std::vector<double> stage_, all_stage_, flux_, slopes_, prev_, next_, wcol_, relaxed_, kernel_;
};

}  // namespace

double KineticState::node_mass(std::size_t node) const {
    const double* f = node_data(node);
    double acc = 0.0;
    for (std::size_t k = 0; k < cells(); ++k) acc += f[k];
    return acc * v_grid.width() * xi_grid.width();
}

GridDensity KineticState::physical(std::size_t node) const {
    GridDensity d;
    d.v_grid = v_grid;
    const double C = frame_center[node], S = frame_scale[node];
    d.w_grid = {C + S * xi_grid.lo, C + S * xi_grid.hi, xi_grid.n};
    const double* f = node_data(node);
    d.values.assign(f, f + cells());
    for (double& x : d.values) x /= S;
    return d;
}

KineticState init_kinetic(const Model& model) {
    const auto& cfg = model.config();
    KineticState s;
    s.v_grid = cfg.v_grid();
    s.xi_grid = cfg.w_grid();
    s.n_nodes = model.n_nodes();
    s.density.assign(s.n_nodes * s.cells(), 0.0);
    s.frame_center.assign(s.n_nodes, 0.0);
    s.frame_scale.assign(s.n_nodes, 1.0);
    s.boundary_loss.assign(s.n_nodes, 0.0);
    const std::size_t nv = s.v_grid.n, nw = s.xi_grid.n;
    const double hv = s.v_grid.width(), hw = s.xi_grid.width();
    for (std::size_t n = 0; n < s.n_nodes; ++n) {
        double* f = s.node_data(n);
        if (cfg.initial.kind == InitialSpec::Kind::Tabulated) {
            std::copy(cfg.initial.table.begin(), cfg.initial.table.end(), f);
        } else {
            for (const auto& c : cfg.initial.components_at(cfg.grid.nodes[n])) {
                std::vector<double> pv(nv), pw(nw);
                for (std::size_t i = 0; i < nv; ++i)
                    pv[i] = gaussian_interval_mass(c.mean_v, c.var_v, s.v_grid.face(i), s.v_grid.face(i) + hv) / hv;
                for (std::size_t j = 0; j < nw; ++j)
                    pw[j] = gaussian_interval_mass(c.mean_w, c.var_w, s.xi_grid.face(j), s.xi_grid.face(j) + hw) / hw;
                for (std::size_t i = 0; i < nv; ++i)
                    for (std::size_t j = 0; j < nw; ++j) f[i * nw + j] += c.weight * pv[i] * pw[j];
            }
        }
        const double mass = s.node_mass(n);
        if (!(mass > 0.0)) throw Error(ErrorCode::EmptyNode, "initial law has no mass on the grid");
        for (std::size_t k = 0; k < s.cells(); ++k) f[k] /= mass;
    }
    compute_macros(s);
    return s;
}

std::vector<NodeMacros> compute_macros(KineticState& s) {
    const std::size_t nv = s.v_grid.n, nw = s.xi_grid.n;
    std::vector<NodeMacros> out(s.n_nodes);
    s.cached_V.resize(s.n_nodes);
    s.cached_W.resize(s.n_nodes);
    const double area = s.v_grid.width() * s.xi_grid.width();
    for (std::size_t n = 0; n < s.n_nodes; ++n) {
        const double* f = s.node_data(n);
        double mass = 0.0, mv = 0.0;
        std::vector<double> colsum(nw, 0.0);
        for (std::size_t i = 0; i < nv; ++i) {
            const double* row = f + i * nw;
            double acc = 0.0;
            for (std::size_t j = 0; j < nw; ++j) {
                acc += row[j];
                colsum[j] += row[j];
            }
            mass += acc;
            mv += acc * s.v_grid.center(i);
        }
        if (mass * area < 1e-8) throw Error(ErrorCode::EmptyNode, "node " + std::to_string(n) + " has no mass");
        double mx = 0.0;
        for (std::size_t j = 0; j < nw; ++j) mx += colsum[j] * s.xi_grid.center(j);
        out[n] = {mv / mass, s.frame_center[n] + s.frame_scale[n] * (mx / mass)};
        s.cached_V[n] = out[n].V;
        s.cached_W[n] = out[n].W;
    }
    return out;
}

void advance_kinetic(KineticState& state, const Model& model, double dt) {
    if (dt == 0.0) return;
    if (!(dt > 0.0)) throw Error(ErrorCode::InvalidConfig, "dt must be nonnegative");
    Solver(state, model).step(dt);
}

KineticState step_kinetic(const KineticState& state, const Model& model, double dt) {
    KineticState out = state;
    advance_kinetic(out, model, dt);
    return out;
}

GridDensity rescale_to_nu(const KineticState& s, const Model& model, std::size_t node) {
    if (node >= s.n_nodes) throw Error(ErrorCode::DimensionMismatch, "node index out of range");
    const double eps = model.epsilon();
    const double se = std::sqrt(eps);
    const double V = s.cached_V[node], W = s.cached_W[node];
    GridDensity mu = s.physical(node);
    GridDensity nu;
    nu.v_grid = {(mu.v_grid.lo - V) / se, (mu.v_grid.hi - V) / se, mu.v_grid.n};
    nu.w_grid = {mu.w_grid.lo - W, mu.w_grid.hi - W, mu.w_grid.n};
    nu.values = std::move(mu.values);
    for (double& x : nu.values) x *= se;
    return nu;
}

GridDensity remap_density(const GridDensity& src, const UniformGrid1D& v_grid, const UniformGrid1D& w_grid) {
    GridDensity out;
    out.v_grid = v_grid;
    out.w_grid = w_grid;
    out.values.assign(v_grid.n * w_grid.n, 0.0);
    const double sa = src.cell_area(), ta = out.cell_area();
    double outside = 0.0;
    auto split = [](const UniformGrid1D& g, double x, std::size_t& k, double& frac) {
        const double u = (x - g.lo) / g.width() - 0.5;
        if (u <= 0.0) {
            k = 0;
            frac = 0.0;
        } else if (u >= static_cast<double>(g.n - 1)) {
            k = g.n - 2;
            frac = 1.0;
        } else {
            k = static_cast<std::size_t>(u);
            frac = u - static_cast<double>(k);
        }
    };
    for (std::size_t i = 0; i < src.v_grid.n; ++i) {
        const double v = src.v_grid.center(i);
        for (std::size_t j = 0; j < src.w_grid.n; ++j) {
            const double m = src.at(i, j) * sa;
            if (m == 0.0) continue;
            const double w = src.w_grid.center(j);
            if (v < v_grid.lo || v > v_grid.hi || w < w_grid.lo || w > w_grid.hi) {
                outside += m;
                continue;
            }
            std::size_t a, b;
            double fa, fb;
            split(v_grid, v, a, fa);
            split(w_grid, w, b, fb);
            out.values[a * w_grid.n + b] += m * (1.0 - fa) * (1.0 - fb);
            out.values[(a + 1) * w_grid.n + b] += m * fa * (1.0 - fb);
            out.values[a * w_grid.n + b + 1] += m * (1.0 - fa) * fb;
            out.values[(a + 1) * w_grid.n + b + 1] += m * fa * fb;
        }
    }
    if (outside > 1e-10) throw Error(ErrorCode::GridTooNarrow, "mass " + fmt17(outside) + " falls outside the target grid");
    for (double& x : out.values) x /= ta;
    return out;
}

std::vector<double> error_functional(const KineticState& s, const Model& model) {
    const std::size_t nv = s.v_grid.n, nw = s.xi_grid.n;
    std::vector<double> out(s.n_nodes);
    for (std::size_t n = 0; n < s.n_nodes; ++n) {
        const double* f = s.node_data(n);
        double mass = 0.0, acc = 0.0, mv = 0.0;
        for (std::size_t i = 0; i < nv; ++i) {
            double r = 0.0;
            for (std::size_t j = 0; j < nw; ++j) r += f[i * nw + j];
            const double v = s.v_grid.center(i);
            mass += r;
            mv += r * v;
            acc += r * model.drift(v);
        }
        out[n] = acc / mass - model.drift(mv / mass);
    }
    return out;
}

void write_kinetic_snapshot(const KineticState& s, std::size_t node, const std::filesystem::path& path) {
    const auto d = s.physical(node);
    std::string buf = "v,w,density\n";
    for (std::size_t i = 0; i < d.v_grid.n; ++i)
        for (std::size_t j = 0; j < d.w_grid.n; ++j)
            buf += fmt17(d.v_grid.center(i)) + "," + fmt17(d.w_grid.center(j)) + "," + fmt17(d.at(i, j)) + "\n";
    write_text(path, buf);
}

}  // namespace fhn
