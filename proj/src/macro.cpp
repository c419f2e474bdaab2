#include "fhn/macro.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/erf.hpp>

namespace fhn {

namespace {

double normal_quantile(double u) { return std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0); }

double mixture_w_cdf(const std::vector<GaussianComponent>& comps, double w) {
    double total = 0.0, acc = 0.0;
    for (const auto& c : comps) {
        total += c.weight;
        acc += c.weight * 0.5 * std::erfc(-(w - c.mean_w) / std::sqrt(2.0 * c.var_w));
    }
    return acc / total;
}

struct Rhs {
    std::vector<double> dV, dW;
};

Rhs rhs(const Model& model, const std::vector<double>& V, const std::vector<double>& W, double eps_corr) {
    const std::size_t n = V.size();
    const auto L = model.nonlocal_L(V);
    const auto& ad = model.adaptation();
    Rhs r{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        r.dV[i] = model.drift(V[i]) - W[i] - L[i];
        if (eps_corr != 0.0) r.dV[i] += 0.5 * eps_corr * model.rho0(i) * model.drift_second(V[i]);
        r.dW[i] = ad.eval(V[i], W[i]);
    }
    return r;
}

void advance(MacroState& s, const Model& model, double dt, double eps_corr) {
    const std::size_t n = s.V.size();
    auto axpy = [&](const std::vector<double>& y, const std::vector<double>& k, double h) {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = y[i] + h * k[i];
        return out;
    };
    const Rhs k1 = rhs(model, s.V, s.W, eps_corr);
    const Rhs k2 = rhs(model, axpy(s.V, k1.dV, 0.5 * dt), axpy(s.W, k1.dW, 0.5 * dt), eps_corr);
    const Rhs k3 = rhs(model, axpy(s.V, k2.dV, 0.5 * dt), axpy(s.W, k2.dW, 0.5 * dt), eps_corr);
    const Rhs k4 = rhs(model, axpy(s.V, k3.dV, dt), axpy(s.W, k3.dW, dt), eps_corr);

    const double t_new = s.t + dt;
    const std::vector<double> W_old = s.W;
    for (std::size_t i = 0; i < n; ++i) {
        s.V[i] += dt / 6.0 * (k1.dV[i] + 2.0 * k2.dV[i] + 2.0 * k3.dV[i] + k4.dV[i]);
        s.W[i] += dt / 6.0 * (k1.dW[i] + 2.0 * k2.dW[i] + 2.0 * k3.dW[i] + k4.dW[i]);
        if (!std::isfinite(s.V[i]) || !std::isfinite(s.W[i]))
            throw Error(ErrorCode::NonFinite,
                        "macro state non-finite at node " + std::to_string(i) + ", t = " + std::to_string(t_new));
    }
    s.t = t_new;
    s.last_alpha = std::exp(-model.adaptation().b * dt);
    s.last_beta.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.last_beta[i] = s.W[i] - s.last_alpha * W_old[i];
        s.mubar[i].apply_affine(s.last_alpha, s.last_beta[i]);
        if (!s.mubar[i].is_monotone())
            throw Error(ErrorCode::NonFinite, "quantile table lost monotonicity at node " + std::to_string(i));
    }
    s.V_path.push_back({s.t, s.V});
}

}  // namespace

double initial_mean_v(const InitialSpec& init, double x) {
    double total = 0.0, acc = 0.0;
    for (const auto& c : init.components_at(x)) {
        total += c.weight;
        acc += c.weight * c.mean_v;
    }
    return acc / total;
}

double initial_w_quantile(const InitialSpec& init, double x, double u) {
    const auto comps = init.components_at(x);
    if (comps.size() == 1) return comps[0].mean_w + std::sqrt(comps[0].var_w) * normal_quantile(u);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& c : comps) {
        lo = std::min(lo, c.mean_w - 40.0 * std::sqrt(c.var_w));
        hi = std::max(hi, c.mean_w + 40.0 * std::sqrt(c.var_w));
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo) + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mixture_w_cdf(comps, mid) < u) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

MacroState init_macro(std::vector<double> V, std::vector<QuantileFunction> mubar) {
    if (V.size() != mubar.size()) throw Error(ErrorCode::DimensionMismatch, "one quantile table per node");
    MacroState s;
    s.V = std::move(V);
    s.mubar = std::move(mubar);
    for (const auto& q : s.mubar) {
        if (!q.is_monotone()) throw Error(ErrorCode::DegenerateQuantiles, "quantile table is empty or not monotone");
        s.W.push_back(q.mean());
    }
    s.last_beta.assign(s.V.size(), 0.0);
    s.V_path.push_back({0.0, s.V});
    return s;
}

MacroState init_macro(const Model& model) {
    const auto& cfg = model.config();
    const auto& init = cfg.initial;
    std::vector<double> V;
    std::vector<QuantileFunction> tables;
    if (init.kind == InitialSpec::Kind::Tabulated) {
        const auto vg = cfg.v_grid(), wg = cfg.w_grid();
        std::vector<double> wm(wg.n, 0.0), faces(wg.n + 1);
        double vmean = 0.0, mass = 0.0;
        for (std::size_t i = 0; i < vg.n; ++i)
            for (std::size_t j = 0; j < wg.n; ++j) {
                const double f = init.table[i * wg.n + j];
                wm[j] += f;
                vmean += f * vg.center(i);
                mass += f;
            }
        for (std::size_t j = 0; j <= wg.n; ++j) faces[j] = wg.face(j);
        const auto q = QuantileFunction::from_histogram(faces, wm);
        for (std::size_t i = 0; i < model.n_nodes(); ++i) {
            V.push_back(vmean / mass);
            tables.push_back(q);
        }
    } else {
        const std::size_t m = cfg.numerics.n_quantiles;
        for (std::size_t i = 0; i < model.n_nodes(); ++i) {
            const double x = cfg.grid.nodes[i];
            V.push_back(initial_mean_v(init, x));
            std::vector<double> vals(m);
            for (std::size_t k = 0; k < m; ++k)
                vals[k] = initial_w_quantile(init, x, (static_cast<double>(k) + 0.5) / static_cast<double>(m));
            tables.push_back(QuantileFunction::from_midpoint_atoms(std::move(vals)));
        }
    }
    return init_macro(std::move(V), std::move(tables));
}

void advance_macro(MacroState& s, const Model& model, double dt, double eps) {
    advance(s, model, dt, eps == 0.0 || model.drift_is_linear() ? 0.0 : eps);
}

MacroState step_macro(const MacroState& s, const Model& model, double dt) {
    MacroState out = s;
    advance_macro(out, model, dt, 0.0);
    return out;
}

MacroState step_corrected_macro(const MacroState& s, const Model& model, double dt, double eps) {
    MacroState out = s;
    advance_macro(out, model, dt, eps);
    return out;
}

PushforwardDensity mubar_pushforward_density(const MacroState& s, std::size_t node, const UniformGrid1D& w_grid) {
    if (node >= s.mubar.size()) throw Error(ErrorCode::DimensionMismatch, "node index out of range");
    const auto& q = s.mubar[node];
    if (!q.is_monotone()) throw Error(ErrorCode::DegenerateQuantiles, "quantile table is empty or not monotone");
    const double h = w_grid.width();
    PushforwardDensity out;
    out.density.assign(w_grid.n, 0.0);

    if (q.max() - q.min() < 0.1 * h) {
        const double m = q.mean();
        if (m < w_grid.lo || m >= w_grid.hi) throw Error(ErrorCode::GridTooNarrow, "spike lies outside the w-grid");
        const auto j = std::min(static_cast<std::size_t>((m - w_grid.lo) / h), w_grid.n - 1);
        out.density[j] = 1.0 / h;
        out.spike = true;
        return out;
    }

    std::vector<double> p, x;
    if (q.mode == QuantileFunction::Mode::Linear) {
        p = q.p;
        x = q.x;
    } else {
        const auto lab = q.labels();
        p.push_back(0.0);
        x.push_back(0.0);
        for (std::size_t k = 0; k < lab.size(); ++k) {
            p.push_back(lab[k]);
            x.push_back(q.x[k]);
        }
        p.push_back(1.0);
        x.push_back(0.0);
        const std::size_t K = lab.size();
        if (K >= 2) {
            const double sl = (q.x[1] - q.x[0]) / (lab[1] - lab[0]);
            const double sr = (q.x[K - 1] - q.x[K - 2]) / (lab[K - 1] - lab[K - 2]);
            x.front() = q.x[0] - sl * lab[0];
            x.back() = q.x[K - 1] + sr * (1.0 - lab[K - 1]);
        } else {
            x.front() = x.back() = q.x[0];
        }
    }

    auto cdf = [&](double w) {
        if (w <= x.front()) return 0.0;
        if (w >= x.back()) return 1.0;
        auto it = std::upper_bound(x.begin(), x.end(), w);
        const std::size_t k = static_cast<std::size_t>(it - x.begin());
        const double x0 = x[k - 1], x1 = x[k];
        if (x1 == x0) return p[k];
        return p[k - 1] + (p[k] - p[k - 1]) * (w - x0) / (x1 - x0);
    };
    double prev = cdf(w_grid.face(0));
    const double lost_left = prev;
    for (std::size_t j = 0; j < w_grid.n; ++j) {
        const double next = cdf(j + 1 == w_grid.n ? w_grid.hi : w_grid.face(j + 1));
        out.density[j] = (next - prev) / h;
        prev = next;
    }
    if (lost_left + (1.0 - prev) > 1e-6) throw Error(ErrorCode::GridTooNarrow, "mubar extends beyond the w-grid");
    return out;
}

}  // namespace fhn
