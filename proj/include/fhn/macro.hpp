#pragma once

#include <vector>

#include "fhn/model.hpp"
#include "fhn/quantile.hpp"

namespace fhn {

struct MacroSample {
    double t;
    std::vector<double> V;
};

struct MacroState {
    double t = 0.0;
    std::vector<double> V;
    std::vector<double> W;
    std::vector<QuantileFunction> mubar;
    std::vector<MacroSample> V_path;
    /// Affine map w -> alpha w + beta[node] applied by the last step.
    double last_alpha = 1.0;
    std::vector<double> last_beta;
};

/// Limit initial data from the configured initial law: V = mean of v, mubar = w-marginal
/// as n_quantiles midpoint atoms, W = mean of the atoms.
MacroState init_macro(const Model& model);
/// Limit initial data given explicitly; W is set to each table's mean.
MacroState init_macro(std::vector<double> V, std::vector<QuantileFunction> mubar);

MacroState step_macro(const MacroState& s, const Model& model, double dt);
/// As step_macro, with (eps/2) rho0 N''(V) added to the V equation.
MacroState step_corrected_macro(const MacroState& s, const Model& model, double dt, double eps);

/// In-place step used by long drivers; eps = 0 gives the uncorrected system.
void advance_macro(MacroState& s, const Model& model, double dt, double eps);

struct PushforwardDensity {
    std::vector<double> density;
    bool spike = false;
};

PushforwardDensity mubar_pushforward_density(const MacroState& s, std::size_t node, const UniformGrid1D& w_grid);

/// Per-node mean of v under a Gaussian mixture, used for limit initial data.
double initial_mean_v(const InitialSpec& init, double x);
/// Quantile at probability u of the w-marginal of the initial law at x.
double initial_w_quantile(const InitialSpec& init, double x, double u);

}  // namespace fhn
