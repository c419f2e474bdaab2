#include "fhn/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fhn/errors.hpp"

namespace fhn {

namespace {

struct Segment {
    double p0, p1, x0, x1;
    double at(double q) const {
        if (p1 == p0) return x0;
        return x0 + (x1 - x0) * ((q - p0) / (p1 - p0));
    }
};

std::vector<Segment> segments(const QuantileFunction& q) {
    std::vector<Segment> s;
    if (q.mode == QuantileFunction::Mode::Step) {
        double prev = 0.0;
        for (std::size_t k = 0; k < q.x.size(); ++k) {
            if (q.p[k] > prev) s.push_back({prev, q.p[k], q.x[k], q.x[k]});
            prev = q.p[k];
        }
    } else {
        for (std::size_t k = 0; k + 1 < q.x.size(); ++k)
            if (q.p[k + 1] > q.p[k]) s.push_back({q.p[k], q.p[k + 1], q.x[k], q.x[k + 1]});
    }
    return s;
}

}  // namespace

double canonical_sum(std::vector<double> terms) {
    std::sort(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms) acc += t;
    return acc;
}

QuantileFunction QuantileFunction::from_atoms(std::vector<double> values, std::vector<double> weights) {
    if (values.empty()) throw Error(ErrorCode::DegenerateQuantiles, "no atoms");
    if (weights.empty()) weights.assign(values.size(), 1.0 / static_cast<double>(values.size()));
    if (weights.size() != values.size()) throw Error(ErrorCode::DimensionMismatch, "atom weights differ in length");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    QuantileFunction q;
    q.mode = Mode::Step;
    double cum = 0.0;
    for (std::size_t k : idx) {
        cum += weights[k];
        q.x.push_back(values[k]);
        q.p.push_back(cum / total);
    }
    q.p.back() = 1.0;
    return q;
}

QuantileFunction QuantileFunction::from_midpoint_atoms(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    QuantileFunction q;
    q.mode = Mode::Step;
    const double m = static_cast<double>(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) q.p.push_back(static_cast<double>(k + 1) / m);
    if (!q.p.empty()) q.p.back() = 1.0;
    q.x = std::move(values);
    return q;
}

QuantileFunction QuantileFunction::from_histogram(const std::vector<double>& faces, const std::vector<double>& masses) {
    if (faces.size() != masses.size() + 1) throw Error(ErrorCode::DimensionMismatch, "histogram needs n+1 faces");
    double total = 0.0;
    for (double m : masses) total += m;
    if (!(total > 0.0)) throw Error(ErrorCode::EmptyNode, "histogram has no mass");
    std::size_t first = 0, last = masses.size();
    while (first < last && masses[first] <= 0.0) ++first;
    while (last > first && masses[last - 1] <= 0.0) --last;
    QuantileFunction q;
    q.mode = Mode::Linear;
    double cum = 0.0;
    q.p.push_back(0.0);
    q.x.push_back(faces[first]);
    for (std::size_t i = first; i < last; ++i) {
        cum += std::max(masses[i], 0.0);
        q.p.push_back(cum / total);
        q.x.push_back(faces[i + 1]);
    }
    q.p.back() = 1.0;
    return q;
}

double QuantileFunction::eval(double prob) const {
    if (x.empty()) throw Error(ErrorCode::DegenerateQuantiles, "empty quantile function");
    if (mode == Mode::Step) {
        auto it = std::lower_bound(p.begin(), p.end(), prob);
        if (it == p.end()) return x.back();
        return x[static_cast<std::size_t>(it - p.begin())];
    }
    if (prob <= p.front()) return x.front();
    if (prob >= p.back()) return x.back();
    auto it = std::upper_bound(p.begin(), p.end(), prob);
    const std::size_t k = static_cast<std::size_t>(it - p.begin());
    const double p0 = p[k - 1], p1 = p[k];
    if (p1 == p0) return x[k];
    return x[k - 1] + (x[k] - x[k - 1]) * (prob - p0) / (p1 - p0);
}

double QuantileFunction::mean() const {
    double acc = 0.0;
    for (const auto& s : segments(*this)) acc += (s.p1 - s.p0) * 0.5 * (s.x0 + s.x1);
    return acc;
}

double QuantileFunction::second_moment() const {
    double acc = 0.0;
    for (const auto& s : segments(*this)) acc += (s.p1 - s.p0) * (s.x0 * s.x0 + s.x0 * s.x1 + s.x1 * s.x1) / 3.0;
    return acc;
}

double QuantileFunction::variance() const {
    const double m = mean();
    double acc = 0.0;
    for (const auto& s : segments(*this)) {
        const double a = s.x0 - m, b = s.x1 - m;
        acc += (s.p1 - s.p0) * (a * a + a * b + b * b) / 3.0;
    }
    return acc;
}

bool QuantileFunction::is_monotone() const {
    if (x.empty() || x.size() != p.size()) return false;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!std::isfinite(x[k]) || !std::isfinite(p[k])) return false;
        if (k > 0 && (x[k] < x[k - 1] || p[k] < p[k - 1])) return false;
    }
    return true;
}

void QuantileFunction::apply_affine(double alpha, double beta) {
    for (double& v : x) v = alpha * v + beta;
}

std::vector<double> QuantileFunction::labels() const {
    if (mode == Mode::Linear) return p;
    std::vector<double> out(p.size());
    double prev = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        out[k] = 0.5 * (prev + p[k]);
        prev = p[k];
    }
    return out;
}

double w2_squared(const QuantileFunction& a, const QuantileFunction& b) {
    const auto sa = segments(a);
    const auto sb = segments(b);
    if (sa.empty() || sb.empty()) throw Error(ErrorCode::DegenerateQuantiles, "empty quantile function");
    std::vector<double> terms;
    terms.reserve(sa.size() + sb.size());
    std::size_t i = 0, j = 0;
    while (i < sa.size() && j < sb.size()) {
        const double lo = std::max(sa[i].p0, sb[j].p0);
        const double hi = std::min(sa[i].p1, sb[j].p1);
        if (hi > lo) {
            const double d0 = sa[i].at(lo) - sb[j].at(lo);
            const double d1 = sa[i].at(hi) - sb[j].at(hi);
            terms.push_back((hi - lo) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0);
        }
        if (sa[i].p1 < sb[j].p1) ++i;
        else if (sb[j].p1 < sa[i].p1) ++j;
        else { ++i; ++j; }
    }
    return canonical_sum(std::move(terms));
}

}  // namespace fhn
