#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fhn/model.hpp"

namespace fhn {

enum class SolverMode { Kinetic, Particle };

/// Recognised metric names: order1_w2, order0_w2, D2, M2, Dq, error_E, entropy, coupling, macro_gap.
struct ExperimentPlan {
    ModelConfig base_config = default_config();
    std::vector<double> epsilons;  // strictly decreasing
    std::vector<double> times;     // within [0, t_end]
    std::size_t n_particles = 0;
    std::vector<std::string> metrics;
    std::uint64_t seed = 0;
    std::filesystem::path output_dir;
    SolverMode mode = SolverMode::Kinetic;
    /// Added to the limit V(0) to exercise a macroscopic initial error.
    double macro_offset_V = 0.0;
    /// Sample times at which slopes are fitted; empty fits every requested time.
    std::vector<double> fit_times;
    /// Upper bound on concurrent epsilon runs; 0 reads FHN_THREADS or the hardware count.
    std::size_t max_threads = 0;
};

/// node = -1 marks the maximum over nodes.
struct MetricRow {
    double epsilon;
    double t;
    long node;
    std::string metric;
    double value;
};

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t n_points = 0;
    bool saturated = false;
    bool exploratory = false;
    /// Fit time lies inside the relaxation transient of the largest epsilon.
    bool transient = false;
};

struct MetricsReport {
    std::vector<MetricRow> rows;
    std::map<std::string, SlopeFit> fitted_slopes;
    nlohmann::ordered_json manifest;

    /// Node-max value of a metric at (epsilon, t); throws InvalidConfig if absent.
    double node_max(const std::string& metric, double epsilon, double t) const;
    /// Rows of one metric at one epsilon, in time order.
    std::vector<MetricRow> series(const std::string& metric, double epsilon, long node = -1) const;
};

/// Validates a plan against its metric names, ordering, times and particle count.
void validate_plan(const ExperimentPlan& plan);

/// Least squares of ln y on ln x. Needs at least 3 positive points.
SlopeFit fit_loglog_slope(const std::vector<std::pair<double, double>>& points);
/// As fit_loglog_slope after dropping both members of every neighbouring pair (sorted by x)
/// whose values differ by less than 2%.
SlopeFit fit_loglog_slope_unsaturated(std::vector<std::pair<double, double>> points);

MetricsReport run_convergence_study(const ExperimentPlan& plan);
MetricsReport run_coupling_study(const ExperimentPlan& plan);

/// Writes metrics.csv, slopes.json and run_manifest.json into output_dir.
void emit_report(const MetricsReport& report, const std::filesystem::path& output_dir);

std::string metrics_csv(const MetricsReport& report);
std::string slopes_json(const MetricsReport& report);

std::size_t worker_count(std::size_t cap);

}  // namespace fhn
