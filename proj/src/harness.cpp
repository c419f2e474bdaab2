#include "fhn/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include <boost/math/special_functions/erf.hpp>

#include "fhn/config.hpp"
#include "fhn/io.hpp"
#include "fhn/kinetic.hpp"
#include "fhn/macro.hpp"
#include "fhn/metrics.hpp"
#include "fhn/particles.hpp"
#include "fhn/rng.hpp"

#ifndef FHN_VERSION
#define FHN_VERSION "0.0.0"
#endif

namespace fhn {

namespace {

const std::set<std::string> kMetricNames{"order1_w2", "order0_w2", "D2",       "M2",       "Dq",
                                         "error_E",   "entropy",   "coupling", "macro_gap"};

constexpr std::size_t kAssignmentSample = 512;

std::string short_num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    return buf;
}

std::string slope_key(const std::string& metric, double t) { return metric + "@t=" + short_num(t); }

bool wants(const ExperimentPlan& p, const std::string& m) {
    return std::find(p.metrics.begin(), p.metrics.end(), m) != p.metrics.end();
}

std::vector<std::string> expanded_names(const ExperimentPlan& p, bool coupling_study) {
    std::vector<std::string> out;
    for (const auto& m : p.metrics) {
        if (m == "order1_w2") {
            out.push_back("order1_w2");
            out.push_back("order1_w2_lower");
        } else if (m == "macro_gap") {
            out.push_back("macro_gap");
            out.push_back("macro_gap_corrected");
        } else if (m == "coupling") {
            if (!coupling_study) continue;
            for (const char* n : {"coupling_A", "coupling_B", "coupling_B2", "coupling_epsA_plus_B", "D2_macro_gap", "D3"})
                out.push_back(n);
        } else {
            out.push_back(m);
        }
    }
    return out;
}

std::vector<std::size_t> sample_steps(const ExperimentPlan& p, double dt) {
    std::vector<std::size_t> out;
    for (double t : p.times) out.push_back(static_cast<std::size_t>(std::llround(t / dt)));
    return out;
}

/// Collects one epsilon's values as metric -> per-node vector at each sample.
struct Collector {
    double eps;
    std::vector<std::string> names;
    std::vector<MetricRow> rows;

    void add(double t, const std::map<std::string, std::vector<double>>& values) {
        for (const auto& name : names) {
            auto it = values.find(name);
            if (it == values.end()) continue;
            double mx = 0.0;
            for (std::size_t n = 0; n < it->second.size(); ++n) {
                rows.push_back({eps, t, static_cast<long>(n), name, it->second[n]});
                mx = std::max(mx, std::abs(it->second[n]));
            }
            rows.push_back({eps, t, -1, name, mx});
        }
    }
};

double normal_quantile(double u) { return std::sqrt(2.0) * boost::math::erf_inv(2.0 * u - 1.0); }

std::map<std::string, std::vector<double>> kinetic_values(const ExperimentPlan& plan, const Model& model,
                                                          KineticState& st, const MacroState& mac,
                                                          const MacroState* corrected) {
    const std::size_t N = model.n_nodes();
    const int p = model.config().drift.p;
    const double eps = model.epsilon();
    std::map<std::string, std::vector<double>> out;
    const auto E = wants(plan, "error_E") ? error_functional(st, model) : std::vector<double>{};
    for (std::size_t n = 0; n < N; ++n) {
        const GridDensity mu = st.physical(n);
        const double Ve = st.cached_V[n];
        if (wants(plan, "order1_w2")) {
            const auto M = maxwellian_profile(model.rho0(n), eps, mac.V[n], mu.v_grid);
            const auto b = order1_distance(mu, M, mac.mubar[n]);
            out["order1_w2"].push_back(b.upper);
            out["order1_w2_lower"].push_back(b.lower);
        }
        if (wants(plan, "order0_w2")) out["order0_w2"].push_back(order0_distance(mu, mac.V[n], mac.mubar[n]));
        if (wants(plan, "D2")) out["D2"].push_back(relative_energy_Dq(mu, 2.0, Ve, p));
        if (wants(plan, "M2")) out["M2"].push_back(moment_Mq(mu, 2.0, p));
        if (wants(plan, "Dq")) out["Dq"].push_back(relative_energy_Dq(mu, 2.0 * p, Ve, p));
        if (wants(plan, "error_E")) out["error_E"].push_back(E[n]);
        if (wants(plan, "entropy")) out["entropy"].push_back(entropy_H(mu));
        if (wants(plan, "macro_gap")) {
            out["macro_gap"].push_back(std::abs(Ve - mac.V[n]));
            out["macro_gap_corrected"].push_back(std::abs(Ve - corrected->V[n]));
        }
    }
    return out;
}

// Stratified sample of M x mubar paired through a seeded permutation.
SampleSet limit_sample(double V, double sd, const QuantileFunction& mubar, std::size_t m, std::uint64_t seed,
                       std::uint32_t node) {
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    CounterRng rng(seed, Stream::Sampling, 1, node);
    for (std::size_t k = m; k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
    std::vector<Point2> pts(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(m);
        const double uw = (static_cast<double>(perm[k]) + 0.5) / static_cast<double>(m);
        pts[k] = {V + sd * normal_quantile(u), mubar.eval(uw)};
    }
    return SampleSet::from_points(std::move(pts));
}

std::map<std::string, std::vector<double>> particle_values(const ExperimentPlan& plan, const Model& model,
                                                           const ParticleEnsemble& ens, const MacroState& mac,
                                                           const MacroState* corrected) {
    const std::size_t N = model.n_nodes();
    const int p = model.config().drift.p;
    const double eps = model.epsilon();
    std::map<std::string, std::vector<double>> out;
    for (std::size_t n = 0; n < N; ++n) {
        const auto& v = ens.v[n];
        const double Ve = node_mean(v);
        const SampleSet s = empirical_samples(ens, n);
        const auto wq = QuantileFunction::from_atoms(ens.w[n], std::vector<double>(v.size(), 1.0));
        if (wants(plan, "order1_w2")) {
            const double sd = std::sqrt(eps / model.rho0(n));
            const std::size_t m = std::min(kAssignmentSample, v.size());
            std::vector<Point2> sub(s.points.begin(), s.points.begin() + static_cast<long>(m));
            const auto target = limit_sample(mac.V[n], sd, mac.mubar[n], m, plan.seed, static_cast<std::uint32_t>(n));
            out["order1_w2"].push_back(w2_2d(SampleSet::from_points(std::move(sub)), target));
            std::vector<double> mv(v.size());
            for (std::size_t k = 0; k < v.size(); ++k)
                mv[k] = mac.V[n] + sd * normal_quantile((static_cast<double>(k) + 0.5) / static_cast<double>(v.size()));
            const auto vq = QuantileFunction::from_atoms(v, std::vector<double>(v.size(), 1.0));
            const auto mq = QuantileFunction::from_midpoint_atoms(std::move(mv));
            out["order1_w2_lower"].push_back(std::sqrt(w2_squared(vq, mq) + w2_squared(wq, mac.mubar[n])));
        }
        if (wants(plan, "order0_w2")) {
            std::vector<double> sq;
            for (double x : v) sq.push_back((x - mac.V[n]) * (x - mac.V[n]));
            const double d = canonical_sum(std::move(sq)) / static_cast<double>(v.size());
            out["order0_w2"].push_back(std::sqrt(d + w2_squared(wq, mac.mubar[n])));
        }
        if (wants(plan, "D2")) out["D2"].push_back(relative_energy_Dq(s, 2.0, Ve, p));
        if (wants(plan, "M2")) out["M2"].push_back(moment_Mq(s, 2.0, p));
        if (wants(plan, "Dq")) out["Dq"].push_back(relative_energy_Dq(s, 2.0 * p, Ve, p));
        if (wants(plan, "error_E")) {
            std::vector<double> terms;
            for (double x : v) terms.push_back(model.drift(x));
            out["error_E"].push_back(canonical_sum(std::move(terms)) / static_cast<double>(v.size()) - model.drift(Ve));
        }
        if (wants(plan, "macro_gap")) {
            out["macro_gap"].push_back(std::abs(Ve - mac.V[n]));
            out["macro_gap_corrected"].push_back(std::abs(Ve - corrected->V[n]));
        }
    }
    return out;
}

Model model_for(const ExperimentPlan& plan, double eps) {
    ModelConfig cfg = plan.base_config;
    cfg.numerics.epsilon = eps;
    const double t_max = *std::max_element(plan.times.begin(), plan.times.end());
    cfg.numerics.t_end = std::max(t_max, cfg.numerics.dt);
    return make_model(cfg);
}

std::vector<QuantileFunction> tables_from_kinetic(const KineticState& st) {
    std::vector<QuantileFunction> out;
    for (std::size_t n = 0; n < st.n_nodes; ++n) out.push_back(w_marginal_quantile(st.physical(n)));
    return out;
}

std::vector<QuantileFunction> tables_from_particles(const ParticleEnsemble& e) {
    std::vector<QuantileFunction> out;
    for (std::size_t n = 0; n < e.n_nodes(); ++n)
        out.push_back(QuantileFunction::from_atoms(e.w[n], std::vector<double>(e.w[n].size(), 1.0)));
    return out;
}

std::vector<MetricRow> run_convergence_eps(const ExperimentPlan& plan, double eps) {
    const Model model = model_for(plan, eps);
    const double dt = model.config().numerics.dt;
    const auto samples = sample_steps(plan, dt);
    const std::size_t last = *std::max_element(samples.begin(), samples.end());
    Collector col{eps, expanded_names(plan, false), {}};
    const bool gap = wants(plan, "macro_gap");

    auto offset = [&](std::vector<double> V) {
        for (double& x : V) x += plan.macro_offset_V;
        return V;
    };
    if (plan.mode == SolverMode::Kinetic) {
        KineticState st = init_kinetic(model);
        MacroState mac = init_macro(offset(st.cached_V), tables_from_kinetic(st));
        MacroState cor = mac;
        for (std::size_t k = 0;; ++k) {
            for (std::size_t i = 0; i < samples.size(); ++i)
                if (samples[i] == k) col.add(plan.times[i], kinetic_values(plan, model, st, mac, &cor));
            if (k == last) break;
            advance_kinetic(st, model, dt);
            advance_macro(mac, model, dt, 0.0);
            if (gap) advance_macro(cor, model, dt, eps);
        }
    } else {
        ParticleEnsemble ens = init_particles(model, plan.n_particles, plan.seed);
        std::vector<double> V0;
        for (const auto& v : ens.v) V0.push_back(node_mean(v));
        MacroState mac = init_macro(offset(V0), tables_from_particles(ens));
        MacroState cor = mac;
        for (std::size_t k = 0;; ++k) {
            for (std::size_t i = 0; i < samples.size(); ++i)
                if (samples[i] == k) col.add(plan.times[i], particle_values(plan, model, ens, mac, &cor));
            if (k == last) break;
            advance_particles(ens, model, dt);
            advance_macro(mac, model, dt, 0.0);
            if (gap) advance_macro(cor, model, dt, eps);
        }
    }
    return col.rows;
}

std::vector<MetricRow> run_coupling_eps(const ExperimentPlan& plan, double eps) {
    const Model model = model_for(plan, eps);
    const double dt = model.config().numerics.dt;
    const auto samples = sample_steps(plan, dt);
    const std::size_t last = *std::max_element(samples.begin(), samples.end());
    Collector col{eps, expanded_names(plan, true), {}};
    ParticleEnsemble ens = init_particles(model, plan.n_particles, plan.seed);
    std::vector<double> V0;
    for (const auto& v : ens.v) V0.push_back(node_mean(v) + plan.macro_offset_V);
    MacroState mac = init_macro(V0, tables_from_particles(ens));
    attach_companions(ens, model, mac);
    const std::size_t N = model.n_nodes();

    for (std::size_t k = 0;; ++k) {
        for (std::size_t i = 0; i < samples.size(); ++i) {
            if (samples[i] != k) continue;
            const auto ce = coupling_energies(ens, model);
            std::map<std::string, std::vector<double>> vals;
            vals["coupling_A"] = ce.A_energy;
            vals["coupling_B"] = ce.B_energy;
            vals["coupling_B2"] = ce.B2_cross;
            for (std::size_t n = 0; n < N; ++n) {
                vals["coupling_epsA_plus_B"].push_back(eps * ce.A_energy[n] + ce.B_energy[n]);
                const double dV = node_mean(ens.v[n]) - mac.V[n];
                const double dW = node_mean(ens.w[n]) - mac.W[n];
                vals["D2_macro_gap"].push_back(std::hypot(dV, dW));
                // The density of nodes carries no dynamics, so the kinetic and limit densities coincide.
                vals["D3"].push_back(0.0);
            }
            col.add(plan.times[i], vals);
        }
        if (k == last) break;
        advance_macro(mac, model, dt, 0.0);
        advance_coupled(ens, model, mac, dt);
    }
    return col.rows;
}

template <class Fn>
std::vector<MetricRow> run_all(const ExperimentPlan& plan, Fn fn) {
    const std::size_t E = plan.epsilons.size();
    std::vector<std::vector<MetricRow>> slots(E);
    std::vector<std::exception_ptr> errors(E);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < E; i = next++) {
            try {
                slots[i] = fn(plan, plan.epsilons[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t nt = std::min(worker_count(plan.max_threads), E);
    if (nt <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<MetricRow> rows;
    for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
    return rows;
}

nlohmann::ordered_json manifest(const ExperimentPlan& plan, const char* study) {
    nlohmann::ordered_json j;
    j["study"] = study;
    j["mode"] = plan.mode == SolverMode::Kinetic ? "kinetic" : "particle";
    j["seed"] = plan.seed;
    j["epsilons"] = plan.epsilons;
    j["times"] = plan.times;
    j["metrics"] = plan.metrics;
    j["n_particles"] = plan.n_particles;
    j["macro_offset_V"] = plan.macro_offset_V;
    j["config"] = config_to_json(plan.base_config);
    j["versions"] = {{"fhn_meso", FHN_VERSION},
                     {"compiler", __VERSION__},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    return j;
}

void fit_metrics(MetricsReport& r, const ExperimentPlan& plan, const std::vector<std::string>& names,
                 const std::set<std::string>& exploratory) {
    if (plan.epsilons.size() < 3) return;
    double min_rho = INFINITY;
    for (double x : plan.base_config.grid.rho0) min_rho = std::min(min_rho, x);
    const double window = 5.0 * plan.epsilons.front() / min_rho;
    const auto& ts = plan.fit_times.empty() ? plan.times : plan.fit_times;
    for (const auto& name : names)
        for (double t : ts) {
            std::vector<std::pair<double, double>> pts;
            for (double e : plan.epsilons) pts.emplace_back(e, r.node_max(name, e, t));
            SlopeFit f = fit_loglog_slope_unsaturated(pts);
            f.exploratory = exploratory.count(name) > 0;
            f.transient = t < window;
            r.fitted_slopes[slope_key(name, t)] = f;
        }
}

}  // namespace

double MetricsReport::node_max(const std::string& metric, double epsilon, double t) const {
    for (const auto& r : rows)
        if (r.node == -1 && r.metric == metric && r.epsilon == epsilon && std::abs(r.t - t) < 1e-12) return r.value;
    throw Error(ErrorCode::InvalidConfig, "no " + metric + " row at eps = " + fmt17(epsilon) + ", t = " + fmt17(t));
}

std::vector<MetricRow> MetricsReport::series(const std::string& metric, double epsilon, long node) const {
    std::vector<MetricRow> out;
    for (const auto& r : rows)
        if (r.node == node && r.metric == metric && r.epsilon == epsilon) out.push_back(r);
    std::stable_sort(out.begin(), out.end(), [](const MetricRow& a, const MetricRow& b) { return a.t < b.t; });
    return out;
}

std::size_t worker_count(std::size_t cap) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FHN_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    if (cap > 0) n = std::min(n, cap);
    return n;
}

void validate_plan(const ExperimentPlan& plan) {
    if (plan.epsilons.empty()) throw Error(ErrorCode::InvalidConfig, "at least one epsilon is required");
    for (std::size_t i = 0; i < plan.epsilons.size(); ++i) {
        if (!(plan.epsilons[i] > 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilons must be positive");
        if (i > 0 && !(plan.epsilons[i] < plan.epsilons[i - 1]))
            throw Error(ErrorCode::InvalidConfig, "epsilons must be strictly decreasing");
    }
    if (plan.times.empty()) throw Error(ErrorCode::InvalidConfig, "at least one sample time is required");
    for (double t : plan.times)
        if (!(t >= 0.0) || !std::isfinite(t)) throw Error(ErrorCode::InvalidConfig, "sample times must be nonnegative");
    for (double t : plan.fit_times)
        if (std::find(plan.times.begin(), plan.times.end(), t) == plan.times.end())
            throw Error(ErrorCode::InvalidConfig, "fit time " + fmt17(t) + " is not a sample time");
    for (const auto& m : plan.metrics)
        if (!kMetricNames.count(m)) throw Error(ErrorCode::InvalidConfig, "unknown metric '" + m + "'");
    if (plan.mode == SolverMode::Particle) {
        if (plan.n_particles == 0) throw Error(ErrorCode::InvalidConfig, "particle mode needs n_particles > 0");
        if (wants(plan, "entropy")) throw Error(ErrorCode::InvalidConfig, "entropy needs a grid density");
    }
}

SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw Error(ErrorCode::FitDegenerate, "a slope fit needs at least 3 points");
    std::vector<double> x, y;
    for (const auto& [a, b] : points) {
        if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b))
            throw Error(ErrorCode::FitDegenerate, "slope fits need positive finite points");
        x.push_back(std::log(a));
        y.push_back(std::log(b));
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw Error(ErrorCode::FitDegenerate, "all abscissae coincide");
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    f.n_points = x.size();
    return f;
}

SlopeFit fit_loglog_slope_unsaturated(std::vector<std::pair<double, double>> points) {
    std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<bool> drop(points.size(), false);
    bool saturated = false;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const double a = points[i].second, b = points[i + 1].second;
        if (std::abs(a - b) < 0.02 * std::max(std::abs(a), std::abs(b))) {
            drop[i] = drop[i + 1] = true;
            saturated = true;
        }
    }
    std::vector<std::pair<double, double>> kept;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (!drop[i]) kept.push_back(points[i]);
    SlopeFit f = fit_loglog_slope(kept);
    f.saturated = saturated;
    return f;
}

MetricsReport run_convergence_study(const ExperimentPlan& plan) {
    validate_plan(plan);
    MetricsReport r;
    r.rows = run_all(plan, run_convergence_eps);
    r.manifest = manifest(plan, "convergence");
    std::vector<std::string> fitted;
    for (const char* m : {"order1_w2", "order0_w2", "macro_gap", "macro_gap_corrected"})
        if (wants(plan, m) || (std::string(m) == "macro_gap_corrected" && wants(plan, "macro_gap"))) fitted.push_back(m);
    fit_metrics(r, plan, fitted, {"macro_gap", "macro_gap_corrected"});
    return r;
}

MetricsReport run_coupling_study(const ExperimentPlan& plan) {
    validate_plan(plan);
    if (plan.n_particles == 0) throw Error(ErrorCode::InvalidConfig, "coupling study needs n_particles > 0");
    if (!wants(plan, "coupling")) throw Error(ErrorCode::InvalidConfig, "coupling study needs the coupling metric");
    MetricsReport r;
    r.rows = run_all(plan, run_coupling_eps);
    r.manifest = manifest(plan, "coupling");
    fit_metrics(r, plan, {"coupling_epsA_plus_B"}, {});
    return r;
}

std::string metrics_csv(const MetricsReport& report) {
    std::string out = "epsilon,t,node,metric,value\n";
    for (const auto& r : report.rows)
        out += fmt17(r.epsilon) + "," + fmt17(r.t) + "," + std::to_string(r.node) + "," + r.metric + "," +
               fmt17(r.value) + "\n";
    return out;
}

std::string slopes_json(const MetricsReport& report) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, f] : report.fitted_slopes)
        j[k] = {{"slope", f.slope},         {"intercept", f.intercept},     {"r2", f.r2},
                {"n_points", f.n_points},   {"saturated", f.saturated},     {"exploratory", f.exploratory},
                {"transient", f.transient}};
    return j.dump(2) + "\n";
}

void emit_report(const MetricsReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    write_text(dir / "metrics.csv", metrics_csv(report));
    write_text(dir / "slopes.json", slopes_json(report));
    write_text(dir / "run_manifest.json", report.manifest.dump(2) + "\n");
}

}  // namespace fhn
