#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rectiflow/common.hpp"
#include "rectiflow/rational.hpp"
#include "rectiflow/relu_net.hpp"
#include "rectiflow/rng.hpp"

namespace rectiflow {

/// floor(x * scale) computed exactly from the IEEE mantissa; never trusts the
/// rounded double product. Requires x >= 0.
inline long long exact_floor_scale(double x, long long scale) {
    if (!(x >= 0.0)) throw domain_error("exact_floor_scale: negative input");
    if (x == 0.0) return 0;
    int e = 0;
    double fr = std::frexp(x, &e);          // x = fr * 2^e, fr in [0.5, 1)
    auto mant = static_cast<__int128>(std::ldexp(fr, 53));  // x = mant * 2^(e-53)
    __int128 prod = mant * scale;
    int shift = 53 - e;
    if (shift <= 0) {
        if (shift < -20) throw arithmetic_overflow("exact_floor_scale: value too large");
        return static_cast<long long>(prod << (-shift));
    }
    if (shift >= 127) return 0;
    return static_cast<long long>(prod >> shift);
}

/// Finite weighted point cloud in R^n; the universal currency for W1.
struct discrete_measure {
    std::size_t dim = 0;
    std::vector<double> coords;  // flat, size() * dim
    std::vector<double> masses;

    discrete_measure() = default;
    discrete_measure(std::size_t d, std::vector<double> xy, std::vector<double> m)
        : dim(d), coords(std::move(xy)), masses(std::move(m)) {
        if (dim == 0) throw precondition_error("discrete_measure: dimension 0");
        if (coords.size() != masses.size() * dim)
            throw dimension_error("discrete_measure: coords size", masses.size() * dim,
                                  coords.size());
        for (double v : masses)
            if (v < 0.0) throw precondition_error("discrete_measure: negative mass");
    }

    std::size_t size() const { return masses.size(); }
    std::span<const double> point(std::size_t i) const {
        return {coords.data() + i * dim, dim};
    }
    double total_mass() const {
        double s = 0.0, c = 0.0;
        for (double v : masses) {  // Kahan; totals feed exact-balance checks
            double y = v - c, t = s + y;
            c = (t - s) - y;
            s = t;
        }
        return s;
    }

    void push_back(std::span<const double> p, double mass) {
        coords.insert(coords.end(), p.begin(), p.end());
        masses.push_back(mass);
    }

    static discrete_measure from_csv(const std::string& path);
    void to_csv(const std::string& path, const std::string& comment = {}) const;
};

/// Atom images under a network; masses carried over unchanged.
inline discrete_measure pushforward(const relu_network& net, const discrete_measure& mu) {
    if (net.input_dim() != mu.dim)
        throw dimension_error("pushforward: measure dim vs net input", net.input_dim(), mu.dim);
    discrete_measure out;
    out.dim = net.output_dim();
    out.masses = mu.masses;
    out.coords.reserve(mu.size() * out.dim);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        auto y = evaluate(net, mu.point(i));
        out.coords.insert(out.coords.end(), y.begin(), y.end());
    }
    return out;
}

/// count equal-mass atoms net(u_i) with u_i i.i.d. uniform on [0,1] from the
/// seeded generator; byte-reproducible given the seed.
inline discrete_measure sample_pushforward(const relu_network& net, std::size_t count,
                                           std::uint64_t seed) {
    if (net.input_dim() != 1)
        throw dimension_error("sample_pushforward: net input dim", 1, net.input_dim());
    if (count == 0) throw precondition_error("sample_pushforward: count must be positive");
    rng gen(seed);
    discrete_measure out;
    out.dim = net.output_dim();
    out.masses.assign(count, 1.0 / static_cast<double>(count));
    out.coords.reserve(count * out.dim);
    for (std::size_t i = 0; i < count; ++i) {
        double u = gen.uniform();
        auto y = evaluate(net, std::span<const double>(&u, 1));
        out.coords.insert(out.coords.end(), y.begin(), y.end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// simplex quantization
// ---------------------------------------------------------------------------

/// Rounds a probability vector onto the grid N^(-1)*{1,2,...} with exact sum 1:
/// floor the first n-1 entries, give the remainder to the last, then repair
/// zero entries by moving 1/N units away from the currently largest entry.
/// L1 error is at most 4(n-1)/N. Requires N >= n.
inline std::vector<rational> quantize_simplex(std::span<const double> w, long long N) {
    const std::size_t n = w.size();
    if (n == 0) throw precondition_error("quantize_simplex: empty weight vector");
    if (N < static_cast<long long>(n))
        throw precondition_error("quantize_simplex: N = " + std::to_string(N) +
                                 " < n = " + std::to_string(n) +
                                 ", cannot make all entries >= 1/N");
    double sum = 0.0;
    for (double v : w) {
        if (v < -1e-12) throw precondition_error("quantize_simplex: negative weight");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw precondition_error("quantize_simplex: weights sum to " + std::to_string(sum));

    std::vector<long long> c(n, 0);
    long long partial = 0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        c[k] = exact_floor_scale(std::max(w[k], 0.0), N);
        partial += c[k];
    }
    while (partial > N) {  // only reachable when the input sum drifts above 1
        std::size_t j = static_cast<std::size_t>(
            std::max_element(c.begin(), c.end() - 1) - c.begin());
        --c[j];
        --partial;
    }
    c[n - 1] = N - partial;

    for (std::size_t k = 0; k < n; ++k) {
        if (c[k] > 0) continue;
        std::size_t donor = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) -
                                                     c.begin());
        if (c[donor] < 2)
            throw precondition_error("quantize_simplex: repair infeasible");  // N >= n rules this out
        --c[donor];
        c[k] = 1;
    }

    std::vector<rational> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.emplace_back(c[k], N);
    return out;
}

// ---------------------------------------------------------------------------
// uniform mixtures
// ---------------------------------------------------------------------------

/// Resolution-K cell weights on [0,1]^d. Cells are half-open slabs
/// [(l-1)/K, l/K) except the last, which is closed. Flat indexing puts k_1
/// most significant so prefix marginals are contiguous sums.
struct uniform_mixture {
    std::size_t d = 0;
    long long K = 0;
    std::vector<double> weights;           // K^d entries
    std::vector<rational> weights_exact;   // empty, or K^d entries

    uniform_mixture() = default;
    uniform_mixture(std::size_t dim, long long res, std::vector<double> w)
        : d(dim), K(res), weights(std::move(w)) {
        validate_();
    }
    uniform_mixture(std::size_t dim, long long res, std::vector<rational> w)
        : d(dim), K(res) {
        weights_exact = std::move(w);
        weights.reserve(weights_exact.size());
        for (const auto& r : weights_exact) weights.push_back(r.to_double());
        validate_();
        rational s(0);
        for (const auto& r : weights_exact) {
            if (r < rational(0)) throw precondition_error("uniform_mixture: negative weight");
            s += r;
        }
        if (s != rational(1))
            throw precondition_error("uniform_mixture: exact weights sum to " + s.str());
    }

    bool has_exact() const { return !weights_exact.empty(); }
    std::size_t cells() const { return weights.size(); }

    /// Flat index of 1-based multi-index (k_1,...,k_d), k_1 most significant.
    std::size_t flat(std::span<const long long> k) const {
        std::size_t idx = 0;
        for (std::size_t j = 0; j < d; ++j) {
            if (k[j] < 1 || k[j] > K) throw domain_error("uniform_mixture: index out of range");
            idx = idx * static_cast<std::size_t>(K) + static_cast<std::size_t>(k[j] - 1);
        }
        return idx;
    }

    /// Smallest nonnegative N with every weight in Z/N; exact mixtures only.
    long long quantization_denominator() const {
        if (!has_exact())
            throw precondition_error("quantization_denominator needs exact weights");
        long long l = 1;
        for (const auto& r : weights_exact) {
            long long g = std::gcd(l, r.den());
            __int128 nl = static_cast<__int128>(l / g) * r.den();
            if (nl > INT64_MAX) throw arithmetic_overflow("mixture denominator lcm overflow");
            l = static_cast<long long>(nl);
        }
        return l;
    }

    static std::size_t pow_cells(long long K, std::size_t d) {
        std::size_t n = 1;
        for (std::size_t j = 0; j < d; ++j) {
            if (n > (std::size_t(1) << 40) / static_cast<std::size_t>(K))
                throw arithmetic_overflow("K^d too large");
            n *= static_cast<std::size_t>(K);
        }
        return n;
    }

    std::string to_json() const;
    static uniform_mixture from_json(const std::string& text);

private:
    void validate_() {
        if (d == 0 || K < 1) throw precondition_error("uniform_mixture: need d >= 1, K >= 1");
        if (weights.size() != pow_cells(K, d))
            throw dimension_error("uniform_mixture: weight count", pow_cells(K, d),
                                  weights.size());
        double s = 0.0;
        for (double v : weights) {
            if (v < -1e-12) throw precondition_error("uniform_mixture: negative weight");
            s += v;
        }
        if (std::fabs(s - 1.0) > 1e-9)
            throw precondition_error("uniform_mixture: weights sum to " + std::to_string(s));
    }
};

/// 0-based cell index of coordinate x at resolution K; the right boundary
/// x = 1 belongs to the last cell.
inline long long cell_index(double x, long long K) {
    if (x < 0.0 || x > 1.0) throw domain_error("cell_index: coordinate outside [0,1]");
    long long i = exact_floor_scale(x, K);
    return std::min(i, K - 1);
}

/// Histogram projection of a discrete measure onto the resolution-K grid;
/// cell weights are the exact mass sums w_k = mu(J_k).
inline uniform_mixture histogram(const discrete_measure& mu, long long K) {
    if (K < 1) throw precondition_error("histogram: K must be positive");
    const std::size_t cells = uniform_mixture::pow_cells(K, mu.dim);
    std::vector<double> w(cells, 0.0);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        auto p = mu.point(i);
        std::size_t idx = 0;
        for (std::size_t j = 0; j < mu.dim; ++j) {
            double x = p[j];
            if (x < 0.0 || x > 1.0) {
                std::ostringstream os;
                os << "histogram: point (";
                for (std::size_t t = 0; t < mu.dim; ++t) os << (t ? "," : "") << p[t];
                os << ") outside [0,1]^" << mu.dim;
                throw domain_error(os.str());
            }
            idx = idx * static_cast<std::size_t>(K) +
                  static_cast<std::size_t>(cell_index(x, K));
        }
        w[idx] += mu.masses[i];
    }
    return uniform_mixture(mu.dim, K, std::move(w));
}

/// Rounds a mixture's weight vector onto the 1/N grid (strictly positive cells,
/// exact rational sum 1).
inline uniform_mixture quantize_mixture(const uniform_mixture& mix, long long N) {
    auto q = quantize_simplex(mix.weights, N);
    return uniform_mixture(mix.d, mix.K, std::move(q));
}

/// Histogram then simplex quantization: the (1/N)-quantized resolution-K
/// projection of mu. Requires N >= K^d.
inline uniform_mixture quantized_mixture(const discrete_measure& mu, long long K, long long N) {
    return quantize_mixture(histogram(mu, K), N);
}

struct mixture_atoms {
    discrete_measure atoms;
    double w1_error_bound = 0.0;  // <= 1/(2 K q), q = points_per_cell^(1/d)
};

/// Replaces each positive cell by a regular q x ... x q sub-grid of equal-mass
/// atoms, q^d = points_per_cell.
inline mixture_atoms mixture_to_discrete(const uniform_mixture& mix, std::size_t points_per_cell) {
    if (points_per_cell == 0)
        throw precondition_error("mixture_to_discrete: points_per_cell must be positive");
    std::size_t q = static_cast<std::size_t>(
        std::llround(std::pow(static_cast<double>(points_per_cell), 1.0 / mix.d)));
    std::size_t check = 1;
    for (std::size_t j = 0; j < mix.d; ++j) check *= q;
    if (q == 0 || check != points_per_cell)
        throw precondition_error("mixture_to_discrete: points_per_cell must be a d-th power, got " +
                                 std::to_string(points_per_cell));

    mixture_atoms out;
    out.atoms.dim = mix.d;
    out.w1_error_bound = 1.0 / (2.0 * static_cast<double>(mix.K) * static_cast<double>(q));
    std::vector<long long> k(mix.d, 1);
    std::vector<std::size_t> sub(mix.d, 0);
    std::vector<double> pt(mix.d, 0.0);
    for (std::size_t cell = 0; cell < mix.cells(); ++cell) {
        // decode flat index, k_1 most significant
        std::size_t rem = cell;
        for (std::size_t j = mix.d; j-- > 0;) {
            k[j] = static_cast<long long>(rem % static_cast<std::size_t>(mix.K)) + 1;
            rem /= static_cast<std::size_t>(mix.K);
        }
        double w = mix.weights[cell];
        if (w <= 0.0) continue;
        double atom_mass = w / static_cast<double>(points_per_cell);
        std::fill(sub.begin(), sub.end(), 0);
        while (true) {
            for (std::size_t j = 0; j < mix.d; ++j)
                pt[j] = (static_cast<double>(k[j] - 1) +
                         (2.0 * static_cast<double>(sub[j]) + 1.0) / (2.0 * static_cast<double>(q))) /
                        static_cast<double>(mix.K);
            out.atoms.push_back(pt, atom_mass);
            std::size_t j = 0;
            for (; j < mix.d; ++j) {
                if (++sub[j] < q) break;
                sub[j] = 0;
            }
            if (j == mix.d) break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV / JSON
// ---------------------------------------------------------------------------

namespace detail {
inline std::vector<double> parse_csv_row(const std::string& line) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        try {
            row.push_back(std::stod(field));
        } catch (...) {
            return {};  // header or malformed; caller decides
        }
    }
    return row;
}
}  // namespace detail

inline discrete_measure discrete_measure::from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open '" + path + "'");
    discrete_measure out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto row = detail::parse_csv_row(line);
        if (row.empty()) {
            if (lineno == 1) continue;  // header row
            throw parse_error("malformed csv row in '" + path + "'", lineno);
        }
        if (row.size() < 2) throw parse_error("csv row needs x1,...,xn,mass", lineno);
        if (out.dim == 0)
            out.dim = row.size() - 1;
        else if (row.size() - 1 != out.dim)
            throw parse_error("inconsistent csv width in '" + path + "'", lineno);
        out.coords.insert(out.coords.end(), row.begin(), row.end() - 1);
        out.masses.push_back(row.back());
    }
    if (out.size() == 0) throw parse_error("no data rows in '" + path + "'");
    for (double v : out.masses)
        if (v < 0.0) throw precondition_error("discrete_measure: negative mass in " + path);
    return out;
}

inline void discrete_measure::to_csv(const std::string& path, const std::string& comment) const {
    std::ofstream outf(path);
    if (!outf) throw error("cannot write '" + path + "'");
    outf.precision(17);
    if (!comment.empty()) outf << "# " << comment << "\n";
    for (std::size_t j = 0; j < dim; ++j) outf << "x" << (j + 1) << ",";
    outf << "mass\n";
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j = 0; j < dim; ++j) outf << coords[i * dim + j] << ",";
        outf << masses[i] << "\n";
    }
}

inline std::string uniform_mixture::to_json() const {
    if (!has_exact())
        throw precondition_error("uniform_mixture::to_json requires exact rational weights");
    nlohmann::json j;
    j["d"] = d;
    j["K"] = K;
    nlohmann::json w = nlohmann::json::object();
    std::vector<long long> k(d, 1);
    for (std::size_t cell = 0; cell < cells(); ++cell) {
        std::size_t rem = cell;
        for (std::size_t jj = d; jj-- > 0;) {
            k[jj] = static_cast<long long>(rem % static_cast<std::size_t>(K)) + 1;
            rem /= static_cast<std::size_t>(K);
        }
        if (weights_exact[cell] == rational(0)) continue;
        std::string key;
        for (std::size_t jj = 0; jj < d; ++jj)
            key += (jj ? "," : "") + std::to_string(k[jj]);
        w[key] = weights_exact[cell].str();
    }
    j["weights"] = std::move(w);
    return j.dump();
}

inline uniform_mixture uniform_mixture::from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("mixture json: ") + e.what(), e.byte);
    }
    if (!j.contains("d") || !j.contains("K") || !j.contains("weights"))
        throw parse_error("mixture json: need keys d, K, weights");
    std::size_t d = j["d"].get<std::size_t>();
    long long K = j["K"].get<long long>();
    if (d == 0 || K < 1) throw parse_error("mixture json: invalid d or K");
    std::vector<rational> w(pow_cells(K, d), rational(0));
    for (auto it = j["weights"].begin(); it != j["weights"].end(); ++it) {
        std::vector<long long> k;
        std::stringstream ss(it.key());
        std::string part;
        while (std::getline(ss, part, ',')) k.push_back(std::stoll(part));
        if (k.size() != d) throw parse_error("mixture json: key '" + it.key() + "' has wrong arity");
        std::size_t idx = 0;
        for (std::size_t jj = 0; jj < d; ++jj) {
            if (k[jj] < 1 || k[jj] > K)
                throw parse_error("mixture json: index out of range in '" + it.key() + "'");
            idx = idx * static_cast<std::size_t>(K) + static_cast<std::size_t>(k[jj] - 1);
        }
        w[idx] = it.value().is_string() ? rational::parse(it.value().get<std::string>())
                                        : rational(it.value().get<long long>());
    }
    return uniform_mixture(d, K, std::move(w));
}

}  // namespace rectiflow
