#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fhn/config.hpp"
#include "fhn/harness.hpp"
#include "fhn/io.hpp"
#include "fhn/kinetic.hpp"
#include "fhn/macro.hpp"
#include "fhn/metrics.hpp"
#include "fhn/particles.hpp"

namespace fs = std::filesystem;
using namespace fhn;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;
constexpr int kExitGate = 4;

struct Options {
    std::string config;
    std::uint64_t seed = 1;
    std::string out;
    std::string eps;
    std::size_t particles = 0;
    std::string mode = "kinetic";
    bool gate = false;
    std::string times;
    std::string a, b;
};

bool is_validation(ErrorCode c) {
    switch (c) {
        case ErrorCode::DriftNotConfining:
        case ErrorCode::Rho0OutOfBounds:
        case ErrorCode::MassNotNormalized:
        case ErrorCode::GridTooCoarse:
        case ErrorCode::KernelNotFinite:
        case ErrorCode::InvalidConfig:
        case ErrorCode::UnsupportedInitial:
        case ErrorCode::GridMismatch:
            return true;
        default:
            return false;
    }
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double x = 0.0;
        try {
            x = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw Error(ErrorCode::InvalidConfig, "bad number '" + item + "' in list");
        out.push_back(x);
    }
    return out;
}

ModelConfig config_of(const Options& o) {
    if (o.config.empty()) return default_config();
    try {
        return load_config(o.config);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::Io) throw;
        throw Error(ErrorCode::InvalidConfig, "cannot read config '" + o.config + "'");
    }
}

Model model_of(const Options& o) {
    ModelConfig cfg = config_of(o);
    const auto eps = parse_list(o.eps);
    if (eps.size() > 1) throw Error(ErrorCode::InvalidConfig, "this subcommand takes a single --eps");
    if (eps.size() == 1) cfg.numerics.epsilon = eps[0];
    return make_model(cfg);
}

fs::path out_dir(const Options& o) { return o.out.empty() ? fs::path("out") : fs::path(o.out); }

std::size_t steps_to(double t_end, double dt) { return static_cast<std::size_t>(std::llround(t_end / dt)); }

int cmd_validate(const Options& o) {
    const ModelConfig cfg = config_of(o);
    const auto r = validate_config(cfg);
    for (const auto& v : r.violations) std::cout << to_string(v.code) << ": " << v.message << "\n";
    if (!r.ok()) return kExitValidation;
    std::cout << "ok\n";
    return 0;
}

int cmd_kinetic(const Options& o) {
    const Model model = model_of(o);
    const auto& nm = model.config().numerics;
    KineticState st = init_kinetic(model);
    const std::size_t n = steps_to(nm.t_end, nm.dt);
    for (std::size_t k = 0; k < n; ++k) advance_kinetic(st, model, nm.dt);
    fs::create_directories(out_dir(o));
    std::string macros = "node,t,V,W,boundary_loss\n";
    for (std::size_t i = 0; i < st.n_nodes; ++i) {
        write_kinetic_snapshot(st, i, out_dir(o) / ("kinetic_node" + std::to_string(i) + ".csv"));
        macros += std::to_string(i) + "," + fmt17(st.t) + "," + fmt17(st.cached_V[i]) + "," + fmt17(st.cached_W[i]) +
                  "," + fmt17(st.boundary_loss[i]) + "\n";
    }
    write_text(out_dir(o) / "kinetic_macros.csv", macros);
    return 0;
}

int cmd_particles(const Options& o) {
    const Model model = model_of(o);
    const auto& nm = model.config().numerics;
    ParticleEnsemble e = init_particles(model, o.particles == 0 ? 10000 : o.particles, o.seed);
    const std::size_t n = steps_to(nm.t_end, nm.dt);
    for (std::size_t k = 0; k < n; ++k) advance_particles(e, model, nm.dt);
    fs::create_directories(out_dir(o));
    for (std::size_t i = 0; i < e.n_nodes(); ++i)
        write_particle_dump(e, i, out_dir(o) / ("particles_node" + std::to_string(i) + ".csv"));
    return 0;
}

int cmd_macro(const Options& o) {
    const Model model = model_of(o);
    const auto& nm = model.config().numerics;
    MacroState m = init_macro(model);
    const std::size_t n = steps_to(nm.t_end, nm.dt);
    std::string path = "t,node,V,W\n";
    std::string quant = "t,node,prob,w\n";
    auto record = [&] {
        for (std::size_t i = 0; i < m.V.size(); ++i)
            path += fmt17(m.t) + "," + std::to_string(i) + "," + fmt17(m.V[i]) + "," + fmt17(m.W[i]) + "\n";
    };
    auto record_quantiles = [&] {
        for (std::size_t i = 0; i < m.mubar.size(); ++i)
            for (std::size_t k = 0; k < m.mubar[i].x.size(); ++k)
                quant += fmt17(m.t) + "," + std::to_string(i) + "," + fmt17(m.mubar[i].p[k]) + "," +
                         fmt17(m.mubar[i].x[k]) + "\n";
    };
    record();
    record_quantiles();
    for (std::size_t k = 0; k < n; ++k) {
        advance_macro(m, model, nm.dt, 0.0);
        record();
    }
    record_quantiles();
    fs::create_directories(out_dir(o));
    write_text(out_dir(o) / "macro_path.csv", path);
    write_text(out_dir(o) / "macro_quantiles.csv", quant);
    return 0;
}

ExperimentPlan plan_of(const Options& o) {
    ExperimentPlan p;
    p.base_config = config_of(o);
    p.epsilons = o.eps.empty() ? std::vector<double>{0.2, 0.1, 0.05, 0.025} : parse_list(o.eps);
    const double T = p.base_config.numerics.t_end;
    p.times = o.times.empty() ? std::vector<double>{0.5 * T, T} : parse_list(o.times);
    p.n_particles = o.particles;
    p.seed = o.seed;
    p.output_dir = out_dir(o);
    if (o.mode == "particle") p.mode = SolverMode::Particle;
    else if (o.mode != "kinetic") throw Error(ErrorCode::InvalidConfig, "mode must be kinetic or particle");
    return p;
}

int cmd_converge(const Options& o) {
    ExperimentPlan p = plan_of(o);
    p.metrics = {"order1_w2", "order0_w2", "D2", "error_E", "macro_gap"};
    if (p.mode == SolverMode::Particle && p.n_particles == 0) p.n_particles = 10000;
    const auto r = run_convergence_study(p);
    emit_report(r, p.output_dir);
    if (!o.gate) return 0;
    const double T = *std::max_element(p.times.begin(), p.times.end());
    bool ok = true;
    auto check = [&](const std::string& key, double lo, double hi, double r2_min) {
        auto it = r.fitted_slopes.find(key);
        if (it == r.fitted_slopes.end()) {
            std::cout << "FAIL " << key << ": no fit\n";
            ok = false;
            return;
        }
        const auto& f = it->second;
        const bool pass = f.slope >= lo && f.slope <= hi && f.r2 >= r2_min;
        std::cout << (pass ? "PASS " : "FAIL ") << key << ": slope " << f.slope << ", r2 " << f.r2 << "\n";
        ok = ok && pass;
    };
    char t[32];
    std::snprintf(t, sizeof t, "%g", T);
    check(std::string("order1_w2@t=") + t, 0.8, 1.2, 0.98);
    check(std::string("order0_w2@t=") + t, 0.4, 0.6, 0.0);
    return ok ? 0 : kExitGate;
}

int cmd_couple(const Options& o) {
    ExperimentPlan p = plan_of(o);
    if (o.eps.empty()) p.epsilons = {0.1, 0.05, 0.025};
    p.metrics = {"coupling"};
    if (p.n_particles == 0) p.n_particles = 50000;
    p.mode = SolverMode::Particle;
    const auto r = run_coupling_study(p);
    emit_report(r, p.output_dir);
    return 0;
}

struct Dump {
    bool grid = false;
    GridDensity density;
    SampleSet samples;
};

UniformGrid1D grid_of(std::vector<double> centers) {
    std::sort(centers.begin(), centers.end());
    centers.erase(std::unique(centers.begin(), centers.end()), centers.end());
    if (centers.size() < 2) throw Error(ErrorCode::GridMismatch, "dump grid needs at least two cells per axis");
    const double h = (centers.back() - centers.front()) / static_cast<double>(centers.size() - 1);
    return {centers.front() - 0.5 * h, centers.back() + 0.5 * h, centers.size()};
}

Dump read_dump(const std::string& path) {
    const CsvTable t = read_csv(path);
    Dump d;
    const std::size_t iv = t.column("v"), iw = t.column("w");
    const bool grid = std::find(t.header.begin(), t.header.end(), "density") != t.header.end();
    if (grid) {
        const std::size_t id = t.column("density");
        std::vector<double> vs, ws;
        for (const auto& r : t.rows) {
            vs.push_back(r[iv]);
            ws.push_back(r[iw]);
        }
        d.grid = true;
        d.density.v_grid = grid_of(vs);
        d.density.w_grid = grid_of(ws);
        if (t.rows.size() != d.density.v_grid.n * d.density.w_grid.n)
            throw Error(ErrorCode::GridMismatch, path + " is not a full tensor grid");
        d.density.values.resize(t.rows.size());
        for (std::size_t k = 0; k < t.rows.size(); ++k) d.density.values[k] = t.rows[k][id];
    } else {
        std::vector<Point2> pts;
        for (const auto& r : t.rows) pts.push_back({r[iv], r[iw]});
        d.samples = SampleSet::from_points(std::move(pts));
    }
    return d;
}

QuantileFunction marginal(const Dump& d, bool v_axis) {
    if (d.grid) return v_axis ? v_marginal_quantile(d.density) : w_marginal_quantile(d.density);
    std::vector<double> xs;
    for (const auto& p : d.samples.points) xs.push_back(v_axis ? p.v : p.w);
    return QuantileFunction::from_atoms(std::move(xs));
}

SampleSet as_samples(const Dump& d) {
    if (!d.grid) return d.samples;
    std::vector<Point2> pts;
    std::vector<double> wts;
    const double a = d.density.cell_area(), total = d.density.mass();
    for (std::size_t i = 0; i < d.density.v_grid.n; ++i)
        for (std::size_t j = 0; j < d.density.w_grid.n; ++j)
            if (d.density.at(i, j) > 0.0) {
                pts.push_back({d.density.v_grid.center(i), d.density.w_grid.center(j)});
                wts.push_back(d.density.at(i, j) * a / total);
            }
    return SampleSet::from_points(std::move(pts), std::move(wts));
}

int cmd_metrics(const Options& o) {
    if (o.a.empty() || o.b.empty()) throw Error(ErrorCode::InvalidConfig, "metrics needs --a and --b dump files");
    const Dump a = read_dump(o.a), b = read_dump(o.b);
    nlohmann::ordered_json j;
    j["w2_v_marginal"] = std::sqrt(w2_squared(marginal(a, true), marginal(b, true)));
    j["w2_w_marginal"] = std::sqrt(w2_squared(marginal(a, false), marginal(b, false)));
    const SampleSet sa = as_samples(a), sb = as_samples(b);
    if (sa.size() + sb.size() <= kMaxSupport) j["w2"] = w2_2d(sa, sb);
    else j["w2"] = nullptr;
    if (a.grid && b.grid && a.density.v_grid == b.density.v_grid && a.density.w_grid == b.density.w_grid) {
        j["l1"] = l1_distance(a.density, b.density);
        j["modified_relative_entropy_half"] = modified_relative_entropy(a.density, b.density, 0.5);
    }
    const std::string text = j.dump(2) + "\n";
    std::cout << text;
    if (!o.out.empty()) {
        fs::create_directories(o.out);
        write_text(out_dir(o) / "distance.json", text);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulator and convergence harness for mean-field FitzHugh-Nagumo neural fields"};
    app.require_subcommand(1);
    Options o;
    auto common = [&](CLI::App* s) {
        s->add_option("--config", o.config, "TOML configuration file");
        s->add_option("--seed", o.seed, "random seed");
        s->add_option("--out", o.out, "output directory");
        s->add_option("--eps", o.eps, "comma separated epsilon values");
        s->add_option("--particles", o.particles, "particles per node");
        s->add_option("--mode", o.mode, "kinetic or particle")->check(CLI::IsMember({"kinetic", "particle"}));
    };
    std::vector<std::pair<CLI::App*, int (*)(const Options&)>> cmds;
    auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
        CLI::App* s = app.add_subcommand(name, help);
        common(s);
        cmds.emplace_back(s, fn);
        return s;
    };
    add("validate", "check a configuration", cmd_validate);
    add("simulate-kinetic", "run the grid solver to t_end and dump every node", cmd_kinetic);
    add("simulate-particles", "run the particle solver to t_end and dump every node", cmd_particles);
    add("simulate-macro", "run the limit system to t_end", cmd_macro);
    auto* conv = add("converge", "epsilon sweep with rate fits", cmd_converge);
    conv->add_flag("--gate", o.gate, "exit 4 unless the order-1 and order-0 slopes fall in their bands");
    conv->add_option("--times", o.times, "comma separated sample times");
    auto* cpl = add("couple", "companion-coupling sweep", cmd_couple);
    cpl->add_option("--times", o.times, "comma separated sample times");
    auto* met = add("metrics", "distances between two dump files", cmd_metrics);
    met->add_option("--a", o.a, "first dump")->required();
    met->add_option("--b", o.b, "second dump")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }
    try {
        for (auto& [s, fn] : cmds)
            if (s->parsed()) return fn(o);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_validation(e.code()) ? kExitValidation : kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSolver;
    }
    return 0;
}
