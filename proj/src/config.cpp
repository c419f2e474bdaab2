#include "fhn/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "fhn/io.hpp"

namespace fhn {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw Error(ErrorCode::InvalidConfig, msg); }

void check_keys(const toml::table& t, const std::string& section, const std::set<std::string>& allowed) {
    for (const auto& [k, v] : t) {
        (void)v;
        if (!allowed.count(std::string(k.str()))) bad("unknown key '" + std::string(k.str()) + "' in [" + section + "]");
    }
}

double get_real(const toml::node& n, const std::string& key) {
    if (auto d = n.value<double>()) return *d;
    if (auto s = n.value<std::string>()) {
        if (*s == "inf") return std::numeric_limits<double>::infinity();
    }
    bad("key '" + key + "' must be a number");
}

long long get_int(const toml::node& n, const std::string& key) {
    if (!n.is_integer()) bad("key '" + key + "' must be an integer");
    return n.as_integer()->get();
}

std::size_t get_count(const toml::node& n, const std::string& key) {
    const long long v = get_int(n, key);
    if (v < 0) bad("key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
}

std::string get_string(const toml::node& n, const std::string& key) {
    if (auto s = n.value<std::string>()) return *s;
    bad("key '" + key + "' must be a string");
}

std::vector<double> get_reals(const toml::node& n, const std::string& key) {
    const auto* arr = n.as_array();
    if (!arr) bad("key '" + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& e : *arr) out.push_back(get_real(e, key));
    return out;
}

GaussianComponent parse_component(const toml::table& t, GaussianComponent c, const std::string& section) {
    check_keys(t, section, {"weight", "mean_v", "mean_w", "var_v", "var_w"});
    if (auto n = t.get("weight")) c.weight = get_real(*n, "weight");
    if (auto n = t.get("mean_v")) c.mean_v = get_real(*n, "mean_v");
    if (auto n = t.get("mean_w")) c.mean_w = get_real(*n, "mean_w");
    if (auto n = t.get("var_v")) c.var_v = get_real(*n, "var_v");
    if (auto n = t.get("var_w")) c.var_w = get_real(*n, "var_w");
    return c;
}

}  // namespace

ModelConfig parse_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << e.description() << " at line " << e.source().begin.line;
        bad(os.str());
    }
    check_keys(root, "root", {"drift", "adaptation", "kernel", "grid", "numerics", "initial"});
    auto section = [&](const char* name) -> const toml::table* {
        auto n = root.get(name);
        if (!n) return nullptr;
        if (!n->is_table()) bad(std::string("'") + name + "' must be a table");
        return n->as_table();
    };

    ModelConfig cfg = default_config();

    if (const auto* t = section("drift")) {
        check_keys(*t, "drift", {"kind", "coefficients", "p"});
        if (auto n = t->get("kind")) {
            const auto kind = get_string(*n, "kind");
            if (kind == "cubic_default") cfg.drift.kind = DriftSpec::Kind::CubicDefault;
            else if (kind == "polynomial") cfg.drift.kind = DriftSpec::Kind::Polynomial;
            else bad("unknown drift kind '" + kind + "'");
        }
        if (auto n = t->get("coefficients")) cfg.drift.coefficients = get_reals(*n, "coefficients");
        if (auto n = t->get("p")) cfg.drift.p = static_cast<int>(get_int(*n, "p"));
        if (cfg.drift.kind == DriftSpec::Kind::Polynomial && !t->get("coefficients"))
            bad("polynomial drift needs 'coefficients'");
    }

    if (const auto* t = section("adaptation")) {
        check_keys(*t, "adaptation", {"a", "b", "c"});
        if (auto n = t->get("a")) cfg.adaptation.a = get_real(*n, "a");
        if (auto n = t->get("b")) cfg.adaptation.b = get_real(*n, "b");
        if (auto n = t->get("c")) cfg.adaptation.c = get_real(*n, "c");
    }

    if (const auto* t = section("kernel")) {
        check_keys(*t, "kernel", {"kind", "kappa", "amplitude", "frequency", "values", "r"});
        if (auto n = t->get("kind")) {
            const auto kind = get_string(*n, "kind");
            if (kind == "zero") cfg.kernel.kind = KernelSpec::Kind::Zero;
            else if (kind == "constant") cfg.kernel.kind = KernelSpec::Kind::Constant;
            else if (kind == "separable_cosine") cfg.kernel.kind = KernelSpec::Kind::SeparableCosine;
            else if (kind == "tabulated") cfg.kernel.kind = KernelSpec::Kind::Tabulated;
            else bad("unknown kernel kind '" + kind + "'");
        }
        if (auto n = t->get("kappa")) cfg.kernel.kappa = get_real(*n, "kappa");
        if (auto n = t->get("amplitude")) cfg.kernel.amplitude = get_real(*n, "amplitude");
        if (auto n = t->get("frequency")) cfg.kernel.frequency = static_cast<int>(get_int(*n, "frequency"));
        if (auto n = t->get("r")) cfg.kernel.r = get_real(*n, "r");
        if (auto n = t->get("values")) {
            const auto* rows = n->as_array();
            if (!rows) bad("kernel 'values' must be an array of arrays");
            cfg.kernel.values.clear();
            for (const auto& row : *rows) cfg.kernel.values.push_back(get_reals(row, "values"));
        }
    }

    if (const auto* t = section("grid")) {
        check_keys(*t, "grid", {"n_nodes", "rho0", "m_star", "v_domain", "w_domain", "n_v", "n_w"});
        std::size_t n_nodes = cfg.grid.size();
        if (auto n = t->get("n_nodes")) n_nodes = get_count(*n, "n_nodes");
        double m_star = cfg.grid.m_star;
        if (auto n = t->get("m_star")) m_star = get_real(*n, "m_star");
        cfg.grid = SpatialGrid::uniform(n_nodes, 1.0, m_star);
        if (auto n = t->get("rho0")) {
            if (n->is_array()) {
                cfg.grid.rho0 = get_reals(*n, "rho0");
            } else {
                const double r = get_real(*n, "rho0");
                for (double& x : cfg.grid.rho0) x = r;
            }
        }
        if (auto n = t->get("v_domain")) cfg.v_domain = get_real(*n, "v_domain");
        if (auto n = t->get("w_domain")) cfg.w_domain = get_real(*n, "w_domain");
        if (auto n = t->get("n_v")) cfg.n_v = get_count(*n, "n_v");
        if (auto n = t->get("n_w")) cfg.n_w = get_count(*n, "n_w");
    }

    if (const auto* t = section("numerics")) {
        check_keys(*t, "numerics",
                   {"epsilon", "dt", "t_end", "test_mode", "n_quantiles", "frame_min_scale", "max_subcycles",
                    "boundary_tolerance", "limiter"});
        auto& nm = cfg.numerics;
        if (auto n = t->get("epsilon")) nm.epsilon = get_real(*n, "epsilon");
        if (auto n = t->get("dt")) nm.dt = get_real(*n, "dt");
        if (auto n = t->get("t_end")) nm.t_end = get_real(*n, "t_end");
        if (auto n = t->get("test_mode")) {
            if (!n->is_boolean()) bad("key 'test_mode' must be a boolean");
            nm.test_mode = n->as_boolean()->get();
        }
        if (auto n = t->get("n_quantiles")) nm.n_quantiles = get_count(*n, "n_quantiles");
        if (auto n = t->get("frame_min_scale")) nm.frame_min_scale = get_real(*n, "frame_min_scale");
        if (auto n = t->get("max_subcycles")) nm.max_subcycles = get_count(*n, "max_subcycles");
        if (auto n = t->get("boundary_tolerance")) nm.boundary_tolerance = get_real(*n, "boundary_tolerance");
        if (auto n = t->get("limiter")) nm.limiter = get_string(*n, "limiter");
    }

    if (const auto* t = section("initial")) {
        check_keys(*t, "initial",
                   {"kind", "weight", "mean_v", "mean_w", "var_v", "var_w", "mean_v_amplitude", "mean_w_amplitude",
                    "mean_frequency", "components", "path"});
        auto& init = cfg.initial;
        if (auto n = t->get("kind")) {
            const auto kind = get_string(*n, "kind");
            if (kind == "gaussian_product") init.kind = InitialSpec::Kind::GaussianProduct;
            else if (kind == "mixture") init.kind = InitialSpec::Kind::Mixture;
            else if (kind == "tabulated") init.kind = InitialSpec::Kind::Tabulated;
            else bad("unknown initial kind '" + kind + "'");
        }
        toml::table scalar_part;
        for (const char* k : {"weight", "mean_v", "mean_w", "var_v", "var_w"})
            if (auto n = t->get(k)) scalar_part.insert(k, *n);
        init.gaussian = parse_component(scalar_part, init.gaussian, "initial");
        if (auto n = t->get("mean_v_amplitude")) init.mean_v_amplitude = get_real(*n, "mean_v_amplitude");
        if (auto n = t->get("mean_w_amplitude")) init.mean_w_amplitude = get_real(*n, "mean_w_amplitude");
        if (auto n = t->get("mean_frequency")) init.mean_frequency = static_cast<int>(get_int(*n, "mean_frequency"));
        if (auto n = t->get("components")) {
            const auto* arr = n->as_array();
            if (!arr) bad("'components' must be an array of tables");
            init.components.clear();
            for (const auto& e : *arr) {
                if (!e.is_table()) bad("'components' must be an array of tables");
                init.components.push_back(parse_component(*e.as_table(), GaussianComponent{}, "initial.components"));
            }
        }
        if (auto n = t->get("path")) init.path = get_string(*n, "path");
        if (init.kind == InitialSpec::Kind::Tabulated) {
            if (init.path.empty()) bad("tabulated initial law needs 'path'");
            std::filesystem::path p(init.path);
            if (p.is_relative()) p = base_dir / p;
            init.table = load_density_table(p, cfg.v_grid(), cfg.w_grid());
        }
    }

    return cfg;
}

ModelConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.parent_path());
}

std::vector<double> load_density_table(const std::filesystem::path& path, const UniformGrid1D& v_grid,
                                       const UniformGrid1D& w_grid) {
    const auto table = read_csv(path);
    if (table.header != std::vector<std::string>{"v", "w", "density"})
        throw Error(ErrorCode::InvalidConfig, "'" + path.string() + "' must have header v,w,density");
    if (table.rows.size() != v_grid.n * w_grid.n)
        throw Error(ErrorCode::GridMismatch, "'" + path.string() + "' does not match the configured grid");
    std::vector<double> out(table.rows.size());
    const double tol = 1e-9 * (1.0 + v_grid.hi - v_grid.lo + w_grid.hi - w_grid.lo);
    for (std::size_t i = 0; i < v_grid.n; ++i)
        for (std::size_t j = 0; j < w_grid.n; ++j) {
            const auto& r = table.rows[i * w_grid.n + j];
            if (std::abs(r[0] - v_grid.center(i)) > tol || std::abs(r[1] - w_grid.center(j)) > tol)
                throw Error(ErrorCode::GridMismatch, "'" + path.string() + "' row order or coordinates differ from grid");
            out[i * w_grid.n + j] = r[2];
        }
    return out;
}

nlohmann::ordered_json config_to_json(const ModelConfig& cfg) {
    using J = nlohmann::ordered_json;
    J j;
    j["drift"] = {{"kind", cfg.drift.kind == DriftSpec::Kind::CubicDefault ? "cubic_default" : "polynomial"},
                  {"coefficients", cfg.drift.coefficients},
                  {"p", cfg.drift.p}};
    j["adaptation"] = {{"a", cfg.adaptation.a}, {"b", cfg.adaptation.b}, {"c", cfg.adaptation.c}};
    const char* kinds[] = {"zero", "constant", "separable_cosine", "tabulated"};
    j["kernel"] = {{"kind", kinds[static_cast<int>(cfg.kernel.kind)]},
                   {"kappa", cfg.kernel.kappa},
                   {"amplitude", cfg.kernel.amplitude},
                   {"frequency", cfg.kernel.frequency},
                   {"values", cfg.kernel.values},
                   {"r", std::isinf(cfg.kernel.r) ? J("inf") : J(cfg.kernel.r)}};
    j["grid"] = {{"n_nodes", cfg.grid.size()}, {"rho0", cfg.grid.rho0},    {"m_star", cfg.grid.m_star},
                 {"v_domain", cfg.v_domain},   {"w_domain", cfg.w_domain}, {"n_v", cfg.n_v},
                 {"n_w", cfg.n_w}};
    const auto& nm = cfg.numerics;
    j["numerics"] = {{"epsilon", nm.epsilon},
                     {"dt", nm.dt},
                     {"t_end", nm.t_end},
                     {"test_mode", nm.test_mode},
                     {"n_quantiles", nm.n_quantiles},
                     {"frame_min_scale", nm.frame_min_scale},
                     {"max_subcycles", nm.max_subcycles},
                     {"boundary_tolerance", nm.boundary_tolerance},
                     {"limiter", nm.limiter}};
    const char* ikinds[] = {"gaussian_product", "mixture", "tabulated"};
    const auto& in = cfg.initial;
    auto comp = [](const GaussianComponent& c) {
        return J{{"weight", c.weight}, {"mean_v", c.mean_v}, {"mean_w", c.mean_w}, {"var_v", c.var_v}, {"var_w", c.var_w}};
    };
    J comps = J::array();
    for (const auto& c : in.components) comps.push_back(comp(c));
    j["initial"] = {{"kind", ikinds[static_cast<int>(in.kind)]},
                    {"weight", in.gaussian.weight},
                    {"mean_v", in.gaussian.mean_v},
                    {"mean_w", in.gaussian.mean_w},
                    {"var_v", in.gaussian.var_v},
                    {"var_w", in.gaussian.var_w},
                    {"mean_v_amplitude", in.mean_v_amplitude},
                    {"mean_w_amplitude", in.mean_w_amplitude},
                    {"mean_frequency", in.mean_frequency},
                    {"components", comps},
                    {"path", in.path}};
    return j;
}

}  // namespace fhn
