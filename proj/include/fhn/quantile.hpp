#pragma once

#include <vector>

namespace fhn {

/// Quantile function of a probability law on the line.
///
/// Step mode: atoms x[k] carrying mass p[k] - p[k-1] (p is cumulative, p.back() == 1).
/// Linear mode: Q is piecewise linear through the knots (p[k], x[k]) with p.front() == 0,
/// p.back() == 1; repeated probabilities encode jumps, repeated values encode atoms.
struct QuantileFunction {
    enum class Mode { Step, Linear };
    Mode mode = Mode::Step;
    std::vector<double> p;
    std::vector<double> x;

    static QuantileFunction from_atoms(std::vector<double> values, std::vector<double> weights = {});
    /// m atoms at the midpoint probabilities (k + 0.5) / m, given their values.
    static QuantileFunction from_midpoint_atoms(std::vector<double> values);
    /// Law with uniform density inside each cell; masses are normalised internally.
    static QuantileFunction from_histogram(const std::vector<double>& faces, const std::vector<double>& masses);

    double eval(double prob) const;
    double mean() const;
    double second_moment() const;
    double variance() const;
    double min() const { return x.front(); }
    double max() const { return x.back(); }
    bool empty() const { return x.empty(); }
    /// Nondecreasing values and probabilities, finite entries.
    bool is_monotone() const;

    /// Pushforward under w -> alpha w + beta with alpha > 0.
    void apply_affine(double alpha, double beta);

    /// Probability labels for dumps: atom midpoints in step mode, knots in linear mode.
    std::vector<double> labels() const;
};

/// Exact squared W2 distance, integrating (Q1 - Q2)^2 over merged breakpoints.
double w2_squared(const QuantileFunction& a, const QuantileFunction& b);

/// Sum with the terms sorted ascending, so the result does not depend on input order.
double canonical_sum(std::vector<double> terms);

}  // namespace fhn
