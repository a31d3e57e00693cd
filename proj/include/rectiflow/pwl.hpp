#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rectiflow/measures.hpp"
#include "rectiflow/relu_net.hpp"

namespace rectiflow {

/// Piecewise-linear profile of a scalar-input network on [lo, hi]: a shared
/// sorted breakpoint grid and per-output values at the grid points. Between
/// grid points every output is affine.
struct pwl_profile {
    std::vector<double> xs;                // sorted, xs.front() = lo, xs.back() = hi
    std::vector<std::vector<double>> ys;   // [output coordinate][grid point]

    std::size_t outputs() const { return ys.size(); }

    double value(std::size_t coord, double x) const {
        const auto& y = ys[coord];
        if (x <= xs.front()) return y.front();
        if (x >= xs.back()) return y.back();
        auto it = std::upper_bound(xs.begin(), xs.end(), x);
        std::size_t hi_idx = static_cast<std::size_t>(it - xs.begin());
        std::size_t lo_idx = hi_idx - 1;
        double t = (x - xs[lo_idx]) / (xs[hi_idx] - xs[lo_idx]);
        return y[lo_idx] + t * (y[hi_idx] - y[lo_idx]);
    }
};

/// Pushes the breakpoint grid through the network layer by layer. Each
/// activation inserts the zero crossings of every unit into the shared grid.
inline pwl_profile propagate_1d(const relu_network& net, double lo, double hi) {
    if (net.input_dim() != 1)
        throw dimension_error("propagate_1d: net input dim", 1, net.input_dim());
    if (!(lo < hi)) throw precondition_error("propagate_1d: empty interval");

    std::vector<double> xs = {lo, hi};
    // unit values at grid points, [unit][point]
    std::vector<std::vector<double>> vals = {{lo, hi}};

    const auto& layers = net.layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        if (li > 0) {
            // collect zero crossings of every unit, refine the grid, clamp
            std::vector<double> cuts;
            for (const auto& u : vals) {
                for (std::size_t t = 0; t + 1 < xs.size(); ++t) {
                    double a = u[t], b = u[t + 1];
                    if ((a < 0.0 && b > 0.0) || (a > 0.0 && b < 0.0)) {
                        double xr = xs[t] + (0.0 - a) / (b - a) * (xs[t + 1] - xs[t]);
                        if (xr > xs[t] && xr < xs[t + 1]) cuts.push_back(xr);
                    }
                }
            }
            if (!cuts.empty()) {
                std::vector<double> merged;
                merged.reserve(xs.size() + cuts.size());
                std::sort(cuts.begin(), cuts.end());
                std::merge(xs.begin(), xs.end(), cuts.begin(), cuts.end(),
                           std::back_inserter(merged));
                merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
                std::vector<std::vector<double>> nv(vals.size());
                for (std::size_t ui = 0; ui < vals.size(); ++ui) {
                    nv[ui].resize(merged.size());
                    std::size_t seg = 0;
                    for (std::size_t p = 0; p < merged.size(); ++p) {
                        double x = merged[p];
                        while (seg + 1 < xs.size() && xs[seg + 1] < x) ++seg;
                        if (x == xs[seg]) {
                            nv[ui][p] = vals[ui][seg];
                        } else if (seg + 1 < xs.size() && x == xs[seg + 1]) {
                            nv[ui][p] = vals[ui][seg + 1];
                        } else {
                            double t = (x - xs[seg]) / (xs[seg + 1] - xs[seg]);
                            nv[ui][p] = vals[ui][seg] + t * (vals[ui][seg + 1] - vals[ui][seg]);
                        }
                    }
                }
                xs = std::move(merged);
                vals = std::move(nv);
            }
            for (auto& u : vals)
                for (double& v : u) v = v > 0.0 ? v : 0.0;
        }
        const affine_layer& l = layers[li];
        std::vector<std::vector<double>> next(l.rows, std::vector<double>(xs.size()));
        for (std::size_t i = 0; i < l.rows; ++i) {
            for (std::size_t p = 0; p < xs.size(); ++p) {
                double acc = l.b[i];
                for (std::size_t j = 0; j < l.cols; ++j) acc += l.at(i, j) * vals[j][p];
                next[i][p] = acc;
            }
        }
        vals = std::move(next);
    }
    pwl_profile out;
    out.xs = std::move(xs);
    out.ys = std::move(vals);
    return out;
}

/// Exact Lipschitz constant of a scalar-input network on [lo, hi], from the
/// breakpoint profile: the maximum over segments and output coordinates of the
/// absolute slope. For one input, the 1-norm and sup-norm constants coincide.
inline double exact_lipschitz_1d(const relu_network& net, double lo, double hi) {
    pwl_profile prof = propagate_1d(net, lo, hi);
    double lip = 0.0;
    for (const auto& y : prof.ys)
        for (std::size_t t = 0; t + 1 < prof.xs.size(); ++t) {
            double dx = prof.xs[t + 1] - prof.xs[t];
            if (dx <= 0.0) continue;
            lip = std::max(lip, std::fabs(y[t + 1] - y[t]) / dx);
        }
    return lip;
}

struct pushforward_atoms {
    discrete_measure atoms;
    double w1_slack = 0.0;  // certified W1(net#lambda, atoms) bound
};

/// Midpoint atomization of net#(Lebesgue on [0,1]) for a scalar-input network.
/// Linear segments get chunk budgets proportional to length * slope, so the
/// certified slack sum_s slope_s * len_s^2 / (4 q_s) stays near
/// (path length) / (4 * natoms).
inline pushforward_atoms atomize_pushforward_1d(const relu_network& net, std::size_t natoms) {
    if (natoms == 0) throw precondition_error("atomize_pushforward_1d: need atoms");
    pwl_profile prof = propagate_1d(net, 0.0, 1.0);
    const std::size_t segs = prof.xs.size() - 1;
    std::vector<double> slope(segs, 0.0);
    double total_cost = 0.0;
    for (std::size_t s = 0; s < segs; ++s) {
        double dx = prof.xs[s + 1] - prof.xs[s];
        double m = 0.0;
        for (const auto& y : prof.ys) m = std::max(m, std::fabs(y[s + 1] - y[s]) / dx);
        slope[s] = m;
        total_cost += m * dx;
    }

    pushforward_atoms out;
    out.atoms.dim = prof.outputs();
    std::vector<double> pt(prof.outputs());
    for (std::size_t s = 0; s < segs; ++s) {
        double x0 = prof.xs[s], x1 = prof.xs[s + 1];
        double h = x1 - x0;
        std::size_t q = 1;
        if (total_cost > 0.0 && slope[s] > 0.0)
            q = std::max<std::size_t>(
                1, static_cast<std::size_t>(std::llround(
                       static_cast<double>(natoms) * slope[s] * h / total_cost)));
        double hc = h / static_cast<double>(q);
        for (std::size_t c = 0; c < q; ++c) {
            double mid = x0 + (static_cast<double>(c) + 0.5) * hc;
            for (std::size_t j = 0; j < prof.outputs(); ++j) pt[j] = prof.value(j, mid);
            out.atoms.push_back(pt, hc);
        }
        out.w1_slack += slope[s] * h * hc / 4.0;
    }
    return out;
}

}  // namespace rectiflow
