#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rectiflow/measures.hpp"
#include "rectiflow/pwl.hpp"
#include "rectiflow/rational.hpp"
#include "rectiflow/relu_net.hpp"
#include "rectiflow/rng.hpp"
#include "rectiflow/spike.hpp"

namespace rectiflow {

/// Finite sample of a Lipschitz map A -> R^n, A inside [0,1]^m, with declared
/// sup-norm Lipschitz constant and magnitude bound. Pairwise consistency is
/// validated on construction.
struct lipschitz_sample {
    std::size_t m = 0;
    std::size_t n = 1;
    std::vector<double> points;  // count * m
    std::vector<double> values;  // count * n
    double lip = 0.0;
    double sup_norm = 0.0;

    lipschitz_sample(std::size_t dom_dim, std::size_t val_dim, std::vector<double> pts,
                     std::vector<double> vals, double lip_const, double sup_bound)
        : m(dom_dim), n(val_dim), points(std::move(pts)), values(std::move(vals)),
          lip(lip_const), sup_norm(sup_bound) {
        if (m == 0 || n == 0) throw precondition_error("lipschitz_sample: zero dimension");
        if (points.empty() || points.size() % m != 0 || values.size() / n != points.size() / m)
            throw precondition_error("lipschitz_sample: inconsistent sizes");
        if (lip < 0.0 || sup_norm < 0.0)
            throw precondition_error("lipschitz_sample: negative metadata");
        const std::size_t count = size();
        for (double v : values)
            if (std::fabs(v) > sup_norm + 1e-12)
                throw precondition_error("lipschitz_sample: value exceeds declared sup_norm");
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = i + 1; j < count; ++j) {
                double dx = 0.0, dv = 0.0;
                for (std::size_t t = 0; t < m; ++t)
                    dx = std::max(dx, std::fabs(points[i * m + t] - points[j * m + t]));
                for (std::size_t t = 0; t < n; ++t)
                    dv = std::max(dv, std::fabs(values[i * n + t] - values[j * n + t]));
                if (dv > lip * dx + 1e-9)
                    throw precondition_error(
                        "lipschitz_sample: pair " + std::to_string(i) + "," + std::to_string(j) +
                        " violates the declared Lipschitz constant");
            }
    }

    std::size_t size() const { return points.size() / m; }
    std::span<const double> point(std::size_t i) const { return {points.data() + i * m, m}; }

    /// CSV columns x1..xm,v1..vn; sidecar JSON: {"m":…, "lip":…, "sup_norm":…}
    /// ("m" defaults to columns-1, scalar-valued).
    static lipschitz_sample load(const std::string& csv_path, const std::string& meta_path) {
        std::ifstream meta(meta_path);
        if (!meta) throw parse_error("cannot open '" + meta_path + "'");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(meta);
        } catch (const nlohmann::json::parse_error& e) {
            throw parse_error(std::string("sample metadata: ") + e.what(), e.byte);
        }
        if (!j.contains("lip") || !j.contains("sup_norm"))
            throw parse_error("sample metadata: need keys lip and sup_norm");
        double lip = j["lip"].get<double>();
        double sup = j["sup_norm"].get<double>();

        std::ifstream in(csv_path);
        if (!in) throw parse_error("cannot open '" + csv_path + "'");
        std::vector<std::vector<double>> rows;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line[0] == '#') continue;
            auto row = detail::parse_csv_row(line);
            if (row.empty()) {
                if (lineno == 1) continue;
                throw parse_error("malformed csv row in '" + csv_path + "'", lineno);
            }
            rows.push_back(std::move(row));
        }
        if (rows.empty()) throw parse_error("no data rows in '" + csv_path + "'");
        std::size_t width = rows.front().size();
        std::size_t m = j.contains("m") ? j["m"].get<std::size_t>() : width - 1;
        if (m == 0 || m >= width)
            throw parse_error("sample metadata: domain dimension inconsistent with csv width");
        std::size_t n = width - m;
        std::vector<double> pts, vals;
        for (const auto& row : rows) {
            if (row.size() != width) throw parse_error("ragged csv in '" + csv_path + "'");
            pts.insert(pts.end(), row.begin(), row.begin() + m);
            vals.insert(vals.end(), row.begin() + m, row.end());
        }
        return lipschitz_sample(m, n, std::move(pts), std::move(vals), lip, sup);
    }
};

/// McShane extension value at x for one value coordinate:
/// min over sample points y of f(y) + lip * ||x-y||_inf. Agrees with the
/// sample on its domain and is lip-Lipschitz everywhere.
inline double mcshane_extend(const lipschitz_sample& s, std::span<const double> x,
                             std::size_t coord = 0) {
    if (x.size() != s.m) throw dimension_error("mcshane_extend: point dim", s.m, x.size());
    if (coord >= s.n) throw dimension_error("mcshane_extend: coord", s.n, coord);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < s.size(); ++i) {
        double d = 0.0;
        for (std::size_t t = 0; t < s.m; ++t)
            d = std::max(d, std::fabs(x[t] - s.points[i * s.m + t]));
        best = std::min(best, s.values[i * s.n + coord] + s.lip * d);
    }
    return best;
}

/// Nearest point of F_N = {k/N} to y, ties rounded away from zero;
/// |result - y| <= 1/(2N). Throws if the result leaves [-N, N].
inline rational quantize_codebook(double y, long long N) {
    if (N < 1) throw precondition_error("quantize_codebook: N must be positive");
    long long k = std::llround(static_cast<double>(N) * y);  // llround ties away from zero
    rational r(k, N);
    if (r.abs() > rational(N))
        throw domain_error("quantize_codebook: |" + r.str() + "| exceeds N = " +
                           std::to_string(N));
    return r;
}

inline bool in_F_N(const rational& r, long long N) {
    return (r * rational(N)).is_integer() && r.abs() <= rational(N);
}

/// The spike-combination network sum_n c_n * phi(N x - n) together with its
/// grid coefficients.
struct quantized_approximant {
    relu_network net;  // m -> n
    std::size_t m = 0;
    std::size_t n = 1;
    long long N = 0;
    double delta = 0.0;
    std::vector<std::vector<double>> grid_values;          // [coord][node]
    std::vector<std::vector<rational>> grid_values_exact;  // filled on the quantized path
};

using scalar_field = std::function<double(std::span<const double>)>;

namespace detail {

inline std::size_t grid_nodes(std::size_t m, long long N) {
    std::size_t total = 1;
    for (std::size_t j = 0; j < m; ++j) total *= static_cast<std::size_t>(N + 1);
    return total;
}

inline void decode_node(std::size_t flat, std::size_t m, long long N, std::span<long long> out) {
    for (std::size_t j = m; j-- > 0;) {
        out[j] = static_cast<long long>(flat % static_cast<std::size_t>(N + 1));
        flat /= static_cast<std::size_t>(N + 1);
    }
}

/// One scalar spike combination: final row W over rho of the shared-input
/// stack of blocks Psi o rho o W_{n,N}; W_{n,N}(x) = N (I,-I)^T x - (n,-n)^T.
inline relu_network spike_combination_net(std::size_t m, long long N,
                                          std::span<const double> coeffs,
                                          std::span<const rational> coeffs_exact) {
    const relu_network psi = spike_inner(m);
    const std::size_t nodes = grid_nodes(m, N);
    std::vector<relu_network> blocks;
    blocks.reserve(nodes);
    std::vector<long long> node(m);
    for (std::size_t g = 0; g < nodes; ++g) {
        decode_node(g, m, N, node);
        affine_layer w = affine_layer::zeros(2 * m, m);
        for (std::size_t i = 0; i < m; ++i) {
            w.set(i, i, rational(N));
            w.set(m + i, i, rational(-N));
            w.set_offset(i, rational(-node[i]));
            w.set_offset(m + i, rational(node[i]));
        }
        std::vector<affine_layer> layers;
        layers.push_back(std::move(w));
        for (const auto& l : psi.layers()) layers.push_back(l);
        blocks.push_back(relu_network(std::move(layers)));
    }
    relu_network stacked = parallelize_shared(blocks);
    affine_layer row = affine_layer::zeros(1, nodes, !coeffs_exact.empty());
    for (std::size_t g = 0; g < nodes; ++g) {
        if (!coeffs_exact.empty())
            row.set(0, g, coeffs_exact[g]);
        else
            row.at(0, g) = coeffs[g];
    }
    return compose_with_relu(affine_net(std::move(row)), stacked);
}

}  // namespace detail

/// Interpolant network for f on the (N+1)^m grid with an arbitrary codebook
/// map h obeying |h(y) - y| <= delta on the sampled values (probèd here).
/// Output satisfies sup_{[0,1]^m} |f - net| <= Lip(f)/N + delta.
inline quantized_approximant build_fN(const scalar_field& f, std::size_t m, long long N,
                                      const std::function<double(double)>& h, double delta) {
    if (m == 0 || N < 1) throw precondition_error("build_fN: need m >= 1, N >= 1");
    const std::size_t nodes = detail::grid_nodes(m, N);
    std::vector<double> vals(nodes);
    std::vector<long long> node(m);
    std::vector<double> x(m);
    for (std::size_t g = 0; g < nodes; ++g) {
        detail::decode_node(g, m, N, node);
        for (std::size_t j = 0; j < m; ++j)
            x[j] = static_cast<double>(node[j]) / static_cast<double>(N);
        double y = f(x);
        double hy = h ? h(y) : y;
        if (std::fabs(hy - y) > delta + 1e-12)
            throw precondition_error("build_fN: codebook map violates its delta contract at y = " +
                                     std::to_string(y));
        vals[g] = hy;
    }
    quantized_approximant out{detail::spike_combination_net(m, N, vals, {}),
                              m, 1, N, delta, {std::move(vals)}, {}};
    return out;
}

inline quantized_approximant build_fN(const scalar_field& f, std::size_t m, long long N) {
    return build_fN(f, m, N, nullptr, 0.0);
}

namespace detail {

/// Codebook route shared by the evaluable and the sample front ends. The
/// preconditions guaranteeing |values| <= N are the callers' business;
/// quantize_codebook still guards the range itself.
inline quantized_approximant quantized_builder(const scalar_field& f, std::size_t m,
                                               long long N) {
    if (m == 0 || N < 1)
        throw precondition_error("build_quantized_approximant: need m >= 1, N >= 1");
    const std::size_t nodes = grid_nodes(m, N);
    std::vector<double> vals(nodes);
    std::vector<rational> exact(nodes, rational(0));
    std::vector<long long> node(m);
    std::vector<double> x(m);
    for (std::size_t g = 0; g < nodes; ++g) {
        decode_node(g, m, N, node);
        for (std::size_t j = 0; j < m; ++j)
            x[j] = static_cast<double>(node[j]) / static_cast<double>(N);
        exact[g] = quantize_codebook(f(x), N);
        vals[g] = exact[g].to_double();
    }
    quantized_approximant out{spike_combination_net(m, N, vals, exact),
                              m, 1, N, 1.0 / (2.0 * static_cast<double>(N)),
                              {std::move(vals)}, {std::move(exact)}};
    return out;
}

inline void check_n_condition(double lip, double sup_norm, long long N) {
    if (sup_norm + lip > static_cast<double>(N) + 1e-12)
        throw precondition_error(
            "build_quantized_approximant: requires sup_norm + lip <= N, got sup_norm = " +
            std::to_string(sup_norm) + ", lip = " + std::to_string(lip) + ", N = " +
            std::to_string(N));
}

}  // namespace detail

/// Quantized approximant of a Lipschitz function given as an evaluable field
/// on [0,1]^m with declared metadata: codebook h(y) = [N y]/N, delta = 1/(2N),
/// last-layer weights in F_N. Requires sup_norm + lip <= N.
inline quantized_approximant build_quantized_approximant_fn(const scalar_field& f, std::size_t m,
                                                            double lip, double sup_norm,
                                                            long long N) {
    detail::check_n_condition(lip, sup_norm, N);
    return detail::quantized_builder(f, m, N);
}

/// Same construction for a finite sample: the McShane extension supplies the
/// grid-node values; vector-valued samples build one scalar approximant per
/// coordinate and stack them on the shared input. The extension magnitude is
/// at most sup_norm + lip <= N, so the codebook stays in range.
inline quantized_approximant build_quantized_approximant(const lipschitz_sample& s, long long N) {
    detail::check_n_condition(s.lip, s.sup_norm, N);
    std::vector<quantized_approximant> parts;
    parts.reserve(s.n);
    for (std::size_t c = 0; c < s.n; ++c) {
        scalar_field f = [&s, c](std::span<const double> x) { return mcshane_extend(s, x, c); };
        parts.push_back(detail::quantized_builder(f, s.m, N));
    }
    if (parts.size() == 1) return std::move(parts.front());
    std::vector<relu_network> nets;
    quantized_approximant out{parts.front().net, s.m, s.n, N, parts.front().delta, {}, {}};
    for (auto& p : parts) {
        nets.push_back(std::move(p.net));
        out.grid_values.push_back(std::move(p.grid_values.front()));
        out.grid_values_exact.push_back(std::move(p.grid_values_exact.front()));
    }
    out.net = parallelize_shared(nets);
    return out;
}

enum class lip_norm { sup, one };

/// Lipschitz estimate of a network on a box: exact from breakpoints for one
/// input dimension, sampled pair ratios otherwise. Always a certified lower
/// bound on the true constant.
inline double estimate_lipschitz(const relu_network& net, std::span<const double> lo,
                                 std::span<const double> hi, std::size_t trials = 4000,
                                 std::uint64_t seed = 23, lip_norm norm = lip_norm::sup) {
    const std::size_t m = net.input_dim();
    if (lo.size() != m || hi.size() != m)
        throw dimension_error("estimate_lipschitz: box dims", m, lo.size());
    if (m == 1) return exact_lipschitz_1d(net, lo[0], hi[0]);

    rng gen(seed);
    std::vector<double> x(m), y(m);
    double best = 0.0;
    auto ratio = [&](std::span<const double> p, std::span<const double> q) {
        double dx_inf = 0.0, dx_one = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            double d = std::fabs(p[j] - q[j]);
            dx_inf = std::max(dx_inf, d);
            dx_one += d;
        }
        double denom = norm == lip_norm::sup ? dx_inf : dx_one;
        if (denom < 1e-9) return 0.0;
        auto fp = evaluate(net, p);
        auto fq = evaluate(net, q);
        double dv = 0.0;
        for (std::size_t c = 0; c < fp.size(); ++c)
            dv = std::max(dv, std::fabs(fp[c] - fq[c]));
        return dv / denom;
    };
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t j = 0; j < m; ++j) x[j] = gen.uniform(lo[j], hi[j]);
        y = x;
        switch (t % 3) {
            case 0:  // independent pair
                for (std::size_t j = 0; j < m; ++j) y[j] = gen.uniform(lo[j], hi[j]);
                break;
            case 1: {  // short axis probe
                std::size_t j = gen.below(m);
                double h = (hi[j] - lo[j]) * 1e-4;
                y[j] = std::min(hi[j], x[j] + h);
                break;
            }
            default:  // short random direction
                for (std::size_t j = 0; j < m; ++j) {
                    double h = (hi[j] - lo[j]) * 1e-4;
                    y[j] = std::clamp(x[j] + gen.uniform(-h, h), lo[j], hi[j]);
                }
        }
        best = std::max(best, ratio(x, y));
    }
    return best;
}

}  // namespace rectiflow
