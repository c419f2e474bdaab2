#pragma once

#include <cstddef>
#include <vector>

namespace fhn {

struct Point2 {
    double v = 0.0;
    double w = 0.0;
    bool operator==(const Point2&) const = default;
};

inline double sq_dist(const Point2& a, const Point2& b) {
    const double dv = a.v - b.v, dw = a.w - b.w;
    return dv * dv + dw * dw;
}

/// Minimum-cost perfect matching for squared Euclidean cost (shortest augmenting paths
/// with dual potentials). Returns col_of_row.
std::vector<std::size_t> solve_assignment(const std::vector<Point2>& a, const std::vector<Point2>& b);

/// Same algorithm on an explicit row-major n x n cost matrix.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n);

struct FlowEntry {
    std::size_t i;
    std::size_t j;
    double mass;
};

/// Balanced transportation problem with squared Euclidean cost, solved by successive
/// shortest paths with potentials. Weights of each side are normalised to 1.
std::vector<FlowEntry> solve_transport(const std::vector<Point2>& a, const std::vector<double>& wa,
                                       const std::vector<Point2>& b, const std::vector<double>& wb);

}  // namespace fhn
