#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "rectiflow/relu_net.hpp"
#include "rectiflow/rng.hpp"

namespace rectiflow {

/// The compactly supported bump max{1 + min{x_1..x_m, 0} - max{x_1..x_m, 0}, 0}
/// whose integer shifts form a partition of unity.
inline double spike_value(std::span<const double> x) {
    if (x.empty()) throw precondition_error("spike_value: dimension must be positive");
    double mn = 0.0, mx = 0.0;
    for (double v : x) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    return std::max(1.0 + mn - mx, 0.0);
}

namespace detail {

// a value in the running tree construction: a sum of units of the current layer
using unit_sum = std::vector<std::size_t>;

/// Appends one max-tree level for the value lists in `groups` (each group is
/// reduced independently but shares the layer). Two-input step for b >= 0:
/// max(a, b) = rho(a - b) + rho(b). All tree values stay nonnegative, so the
/// rho(-b) leg of the general gadget is never needed and weights stay in
/// {0, 1, -1}.
inline affine_layer max_tree_level(std::vector<std::vector<unit_sum>>& groups,
                                   std::size_t prev_units) {
    std::vector<std::vector<int>> rows;  // coefficient vectors over prev units
    std::vector<std::vector<unit_sum>> next(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& vals = groups[g];
        for (std::size_t i = 0; i + 1 < vals.size(); i += 2) {
            std::vector<int> diff(prev_units, 0), keep(prev_units, 0);
            for (std::size_t u : vals[i]) diff[u] += 1;
            for (std::size_t u : vals[i + 1]) {
                diff[u] -= 1;
                keep[u] += 1;
            }
            rows.push_back(std::move(diff));
            rows.push_back(std::move(keep));
            next[g].push_back({rows.size() - 2, rows.size() - 1});
        }
        if (vals.size() % 2 == 1) {  // unpaired value passes through one unit
            std::vector<int> pass(prev_units, 0);
            for (std::size_t u : vals.back()) pass[u] += 1;
            rows.push_back(std::move(pass));
            next[g].push_back({rows.size() - 1});
        }
    }
    affine_layer l = affine_layer::zeros(rows.size(), prev_units);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < prev_units; ++j)
            if (rows[i][j] != 0) l.set(i, j, rational(rows[i][j]));
    groups = std::move(next);
    return l;
}

}  // namespace detail

/// The Psi block: a 2m -> 1 network that, fed the rectified pairs
/// (rho(x_i), rho(-x_i)), outputs the pre-activation value
/// 1 + min{x,0} - max{x,0}. Uses that max{x_1..x_m, 0} = max_i rho(x_i) and
/// min{x_1..x_m, 0} = -max_i rho(-x_i), each realized by a balanced binary
/// tree of two-input max steps over nonnegative values.
inline relu_network spike_inner(std::size_t m) {
    if (m == 0) throw precondition_error("spike_inner: dimension must be positive");
    std::vector<affine_layer> layers;
    std::vector<std::vector<detail::unit_sum>> groups(2);
    for (std::size_t i = 0; i < m; ++i) groups[0].push_back({i});
    for (std::size_t i = 0; i < m; ++i) groups[1].push_back({m + i});
    std::size_t prev_units = 2 * m;
    while (groups[0].size() > 1) {
        affine_layer l = detail::max_tree_level(groups, prev_units);
        prev_units = l.rows;
        layers.push_back(std::move(l));
    }
    // 1 - max_i rho(x_i) - max_i rho(-x_i)
    affine_layer last = affine_layer::zeros(1, prev_units);
    last.set_offset(0, rational(1));
    for (std::size_t u : groups[0][0]) last.set(0, u, rational(-1));
    for (std::size_t u : groups[1][0]) last.set(0, u, rational(-1));
    layers.push_back(std::move(last));
    return relu_network(std::move(layers));
}

/// The spike realization W_2 o rho o Psi o rho o W_1 with W_1 = (I, -I)^T and
/// W_2 the scalar identity.
struct spike_network_result {
    relu_network net;    // m -> 1, equals spike_value everywhere
    relu_network inner;  // the Psi block, 2m -> 1
};

inline spike_network_result spike_network(std::size_t m) {
    if (m == 0) throw precondition_error("spike_network: dimension must be positive");
    relu_network psi = spike_inner(m);

    affine_layer w1 = affine_layer::zeros(2 * m, m);
    for (std::size_t i = 0; i < m; ++i) {
        w1.set(i, i, rational(1));
        w1.set(m + i, i, rational(-1));
    }
    affine_layer w2 = affine_layer::zeros(1, 1);
    w2.set(0, 0, rational(1));

    std::vector<affine_layer> layers;
    layers.push_back(std::move(w1));
    for (const auto& l : psi.layers()) layers.push_back(l);
    layers.push_back(std::move(w2));
    return {relu_network(std::move(layers)), std::move(psi)};
}

/// sum over n in Z^m of spike(N x - n); only the at most 2^m lattice points
/// with N x - n inside (-1,1)^m contribute. Equals 1 identically.
inline double partition_sum(std::span<const double> x, long long N) {
    if (N < 1) throw precondition_error("partition_sum: N must be positive");
    const std::size_t m = x.size();
    if (m == 0) throw precondition_error("partition_sum: dimension must be positive");
    std::vector<std::vector<long long>> cand(m);
    for (std::size_t j = 0; j < m; ++j) {
        double t = static_cast<double>(N) * x[j];
        long long lo = static_cast<long long>(std::ceil(t - 1.0));
        long long hi = static_cast<long long>(std::floor(t + 1.0));
        for (long long n = lo; n <= hi; ++n)
            if (t - static_cast<double>(n) > -1.0 && t - static_cast<double>(n) < 1.0)
                cand[j].push_back(n);
    }
    std::vector<std::size_t> pick(m, 0);
    std::vector<double> arg(m, 0.0);
    double sum = 0.0;
    while (true) {
        for (std::size_t j = 0; j < m; ++j)
            arg[j] = static_cast<double>(N) * x[j] - static_cast<double>(cand[j][pick[j]]);
        sum += spike_value(arg);
        std::size_t j = 0;
        for (; j < m; ++j) {
            if (++pick[j] < cand[j].size()) break;
            pick[j] = 0;
        }
        if (j == m) break;
    }
    return sum;
}

/// Max observed |spike(x)-spike(y)| / ||x-y||_inf over sampled pairs around the
/// support; a lower bound on the true constant (which is at most 2).
inline double spike_lipschitz_check(std::size_t m, std::size_t trials, std::uint64_t seed = 17) {
    if (trials == 0) throw precondition_error("spike_lipschitz_check: trials must be positive");
    rng gen(seed);
    std::vector<double> x(m), y(m);
    double best = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t j = 0; j < m; ++j) x[j] = gen.uniform(-1.5, 1.5);
        bool local = (t % 2) == 1;
        double dist = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            y[j] = local ? x[j] + gen.uniform(-1e-3, 1e-3) : gen.uniform(-1.5, 1.5);
            dist = std::max(dist, std::fabs(x[j] - y[j]));
        }
        if (dist < 1e-6) continue;  // (near-)degenerate pair, ratio undefined or pure noise
        best = std::max(best, std::fabs(spike_value(x) - spike_value(y)) / dist);
    }
    return best;
}

}  // namespace rectiflow
