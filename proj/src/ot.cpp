#include "fhn/ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fhn/errors.hpp"

namespace fhn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kNone = static_cast<std::size_t>(-1);

template <class Cost>
std::vector<std::size_t> lsap(std::size_t n, Cost cost) {
    std::vector<double> u(n, 0.0), v(n, 0.0), spc(n);
    std::vector<std::size_t> path(n, kNone), col4row(n, kNone), row4col(n, kNone), remaining(n);
    std::vector<char> SR(n), SC(n);

    for (std::size_t cur = 0; cur < n; ++cur) {
        double min_val = 0.0;
        std::size_t i = cur;
        std::size_t num_remaining = n;
        for (std::size_t it = 0; it < n; ++it) remaining[it] = n - it - 1;
        std::fill(SR.begin(), SR.end(), 0);
        std::fill(SC.begin(), SC.end(), 0);
        std::fill(spc.begin(), spc.end(), kInf);
        std::size_t sink = kNone;
        while (sink == kNone) {
            std::size_t index = kNone;
            double lowest = kInf;
            SR[i] = 1;
            const double ui = u[i];
            for (std::size_t it = 0; it < num_remaining; ++it) {
                const std::size_t j = remaining[it];
                const double r = min_val + cost(i, j) - ui - v[j];
                if (r < spc[j]) {
                    path[j] = i;
                    spc[j] = r;
                }
                if (spc[j] < lowest || (spc[j] == lowest && row4col[j] == kNone)) {
                    lowest = spc[j];
                    index = it;
                }
            }
            min_val = lowest;
            if (index == kNone || !std::isfinite(min_val))
                throw Error(ErrorCode::NonFinite, "assignment cost is not finite");
            const std::size_t j = remaining[index];
            if (row4col[j] == kNone) sink = j;
            else i = row4col[j];
            SC[j] = 1;
            remaining[index] = remaining[--num_remaining];
        }
        u[cur] += min_val;
        for (std::size_t r = 0; r < n; ++r)
            if (SR[r] && r != cur) u[r] += min_val - spc[col4row[r]];
        for (std::size_t c = 0; c < n; ++c)
            if (SC[c]) v[c] -= min_val - spc[c];
        std::size_t j = sink;
        while (true) {
            const std::size_t r = path[j];
            row4col[j] = r;
            std::swap(col4row[r], j);
            if (r == cur) break;
        }
    }
    return col4row;
}

}  // namespace

std::vector<std::size_t> solve_assignment(const std::vector<Point2>& a, const std::vector<Point2>& b) {
    if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "assignment needs equal sizes");
    return lsap(a.size(), [&](std::size_t i, std::size_t j) { return sq_dist(a[i], b[j]); });
}

std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
    if (cost.size() != n * n) throw Error(ErrorCode::DimensionMismatch, "cost matrix must be n x n");
    return lsap(n, [&](std::size_t i, std::size_t j) { return cost[i * n + j]; });
}

std::vector<FlowEntry> solve_transport(const std::vector<Point2>& a, const std::vector<double>& wa,
                                       const std::vector<Point2>& b, const std::vector<double>& wb) {
    const std::size_t na = a.size(), nb = b.size();
    if (wa.size() != na || wb.size() != nb) throw Error(ErrorCode::DimensionMismatch, "weights differ in length");
    if (na == 0 || nb == 0) throw Error(ErrorCode::DimensionMismatch, "empty transport problem");
    const double ta = std::accumulate(wa.begin(), wa.end(), 0.0);
    const double tb = std::accumulate(wb.begin(), wb.end(), 0.0);
    std::vector<double> supply(na), demand(nb);
    for (std::size_t i = 0; i < na; ++i) supply[i] = wa[i] / ta;
    for (std::size_t j = 0; j < nb; ++j) demand[j] = wb[j] / tb;
    constexpr double tol = 1e-15;

    std::vector<double> flow(na * nb, 0.0);
    std::vector<double> pot_s(na, 0.0), pot_t(nb, 0.0), dist_s(na), dist_t(nb);
    std::vector<std::size_t> parent_s(na), parent_t(nb);
    std::vector<char> done_s(na), done_t(nb);

    while (true) {
        bool any_supply = false;
        for (std::size_t i = 0; i < na; ++i) {
            dist_s[i] = supply[i] > tol ? 0.0 : kInf;
            any_supply = any_supply || supply[i] > tol;
            parent_s[i] = kNone;
        }
        if (!any_supply) break;
        std::fill(dist_t.begin(), dist_t.end(), kInf);
        std::fill(done_s.begin(), done_s.end(), 0);
        std::fill(done_t.begin(), done_t.end(), 0);

        std::size_t target = kNone;
        double target_dist = kInf;
        while (true) {
            double best = kInf;
            std::size_t node = kNone;
            bool is_sink = false;
            for (std::size_t i = 0; i < na; ++i)
                if (!done_s[i] && dist_s[i] < best) best = dist_s[i], node = i, is_sink = false;
            for (std::size_t j = 0; j < nb; ++j)
                if (!done_t[j] && dist_t[j] < best) best = dist_t[j], node = j, is_sink = true;
            if (node == kNone) break;
            if (is_sink) {
                done_t[node] = 1;
                if (demand[node] > tol) {
                    target = node;
                    target_dist = best;
                    break;
                }
                for (std::size_t i = 0; i < na; ++i) {
                    if (done_s[i] || flow[i * nb + node] <= 0.0) continue;
                    const double rc = -sq_dist(a[i], b[node]) + pot_t[node] - pot_s[i];
                    const double nd = best + std::max(rc, 0.0);
                    if (nd < dist_s[i]) dist_s[i] = nd, parent_s[i] = node;
                }
            } else {
                done_s[node] = 1;
                for (std::size_t j = 0; j < nb; ++j) {
                    if (done_t[j]) continue;
                    const double rc = sq_dist(a[node], b[j]) + pot_s[node] - pot_t[j];
                    const double nd = best + std::max(rc, 0.0);
                    if (nd < dist_t[j]) dist_t[j] = nd, parent_t[j] = node;
                }
            }
        }
        if (target == kNone) break;

        for (std::size_t i = 0; i < na; ++i) pot_s[i] += std::min(dist_s[i], target_dist);
        for (std::size_t j = 0; j < nb; ++j) pot_t[j] += std::min(dist_t[j], target_dist);

        double delta = demand[target];
        std::size_t j = target;
        std::size_t root;
        while (true) {
            const std::size_t i = parent_t[j];
            if (parent_s[i] == kNone) {
                root = i;
                break;
            }
            delta = std::min(delta, flow[i * nb + parent_s[i]]);
            j = parent_s[i];
        }
        delta = std::min(delta, supply[root]);
        j = target;
        while (true) {
            const std::size_t i = parent_t[j];
            flow[i * nb + j] += delta;
            if (parent_s[i] == kNone) break;
            const std::size_t jb = parent_s[i];
            flow[i * nb + jb] -= delta;
            if (flow[i * nb + jb] < tol) flow[i * nb + jb] = 0.0;
            j = jb;
        }
        supply[root] -= delta;
        demand[target] -= delta;
    }

    std::vector<FlowEntry> out;
    for (std::size_t i = 0; i < na; ++i)
        for (std::size_t j = 0; j < nb; ++j)
            if (flow[i * nb + j] > 0.0) out.push_back({i, j, flow[i * nb + j]});
    return out;
}

}  // namespace fhn
