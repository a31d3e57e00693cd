#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rectiflow/common.hpp"
#include "rectiflow/rational.hpp"

namespace rectiflow {

/// One affine map W(x) = A x + b. Entries live as float64 and, for networks
/// assembled from exact formulas, as exact rationals alongside. Evaluation is
/// float64 only; the rational mirror feeds metrics and grid-membership tests.
struct affine_layer {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> w;  // row-major, rows*cols
    std::vector<double> b;  // rows
    std::vector<rational> w_exact;  // empty, or rows*cols
    std::vector<rational> b_exact;  // empty, or rows

    affine_layer() = default;

    static affine_layer zeros(std::size_t r, std::size_t c, bool exact = true) {
        affine_layer l;
        l.rows = r;
        l.cols = c;
        l.w.assign(r * c, 0.0);
        l.b.assign(r, 0.0);
        if (exact) {
            l.w_exact.assign(r * c, rational(0));
            l.b_exact.assign(r, rational(0));
        }
        return l;
    }

    bool has_exact() const { return !w_exact.empty(); }

    double& at(std::size_t i, std::size_t j) { return w[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return w[i * cols + j]; }

    /// Sets an entry in both representations.
    void set(std::size_t i, std::size_t j, const rational& v) {
        w[i * cols + j] = v.to_double();
        if (has_exact()) w_exact[i * cols + j] = v;
    }
    void set_offset(std::size_t i, const rational& v) {
        b[i] = v.to_double();
        if (has_exact()) b_exact[i] = v;
    }

    void drop_exact() {
        w_exact.clear();
        b_exact.clear();
    }

    friend bool operator==(const affine_layer& a, const affine_layer& c) {
        return a.rows == c.rows && a.cols == c.cols && a.w == c.w && a.b == c.b &&
               a.w_exact == c.w_exact && a.b_exact == c.b_exact;
    }
};

/// ReLU network W_L o rho o W_{L-1} o ... o rho o W_1. Immutable after
/// construction; all operations on it are pure.
class relu_network {
public:
    explicit relu_network(std::vector<affine_layer> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw precondition_error("network needs at least one layer");
        for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
            if (layers_[i + 1].cols != layers_[i].rows)
                throw dimension_error("layer " + std::to_string(i + 1) + " input dim mismatch",
                                      layers_[i].rows, layers_[i + 1].cols);
        }
        for (const auto& l : layers_) {
            if (l.rows == 0 || l.cols == 0) throw precondition_error("empty layer");
            if (l.w.size() != l.rows * l.cols || l.b.size() != l.rows)
                throw precondition_error("layer storage size mismatch");
            if (!l.w_exact.empty() &&
                (l.w_exact.size() != l.w.size() || l.b_exact.size() != l.b.size()))
                throw precondition_error("layer exact-mirror size mismatch");
        }
    }

    std::size_t depth() const { return layers_.size(); }
    std::size_t input_dim() const { return layers_.front().cols; }
    std::size_t output_dim() const { return layers_.back().rows; }
    const std::vector<affine_layer>& layers() const { return layers_; }

    bool all_exact() const {
        return std::all_of(layers_.begin(), layers_.end(),
                           [](const affine_layer& l) { return l.has_exact(); });
    }

    friend bool operator==(const relu_network& a, const relu_network& b) {
        return a.layers_ == b.layers_;
    }

private:
    std::vector<affine_layer> layers_;
};

/// Applies the network: affine, then componentwise max(.,0) between layers.
inline std::vector<double> evaluate(const relu_network& net, std::span<const double> x) {
    if (x.size() != net.input_dim())
        throw dimension_error("evaluate: input size", net.input_dim(), x.size());
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    const auto& layers = net.layers();
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const affine_layer& l = layers[li];
        if (li > 0)
            for (double& v : cur) v = v > 0.0 ? v : 0.0;
        next.assign(l.rows, 0.0);
        for (std::size_t i = 0; i < l.rows; ++i) {
            double acc = l.b[i];
            const double* row = &l.w[i * l.cols];
            for (std::size_t j = 0; j < l.cols; ++j) acc += row[j] * cur[j];
            next[i] = acc;
        }
        cur.swap(next);
    }
    return cur;
}

inline double evaluate_scalar(const relu_network& net, double x) {
    if (net.input_dim() != 1 || net.output_dim() != 1)
        throw dimension_error("evaluate_scalar needs a 1->1 network", 1,
                              net.input_dim() != 1 ? net.input_dim() : net.output_dim());
    double in[1] = {x};
    return evaluate(net, in)[0];
}

/// Two-layer network computing the identity on R^m:
/// W_1 = (I, -I)^T, W_2 = (I, -I), so x = rho(x) - rho(-x).
inline relu_network identity_net(std::size_t m) {
    if (m == 0) throw precondition_error("identity_net: dimension must be positive");
    affine_layer l1 = affine_layer::zeros(2 * m, m);
    affine_layer l2 = affine_layer::zeros(m, 2 * m);
    for (std::size_t i = 0; i < m; ++i) {
        l1.set(i, i, rational(1));
        l1.set(m + i, i, rational(-1));
        l2.set(i, i, rational(1));
        l2.set(i, m + i, rational(-1));
    }
    return relu_network({std::move(l1), std::move(l2)});
}

namespace detail {

inline void require_equal_depths(const std::vector<relu_network>& nets) {
    if (nets.empty()) throw precondition_error("parallelize: need at least one network");
    for (const auto& n : nets) {
        if (n.depth() != nets.front().depth()) {
            std::string depths;
            for (const auto& k : nets) depths += std::to_string(k.depth()) + " ";
            throw precondition_error("parallelize: depth mismatch, depths are " + depths);
        }
    }
}

inline relu_network stack_blocks(const std::vector<relu_network>& nets, bool shared_input) {
    require_equal_depths(nets);
    const std::size_t depth = nets.front().depth();
    bool exact = std::all_of(nets.begin(), nets.end(),
                             [](const relu_network& n) { return n.all_exact(); });
    if (shared_input)
        for (const auto& n : nets)
            if (n.input_dim() != nets.front().input_dim())
                throw dimension_error("parallelize_shared: input dims differ",
                                      nets.front().input_dim(), n.input_dim());

    std::vector<affine_layer> out;
    out.reserve(depth);
    for (std::size_t li = 0; li < depth; ++li) {
        std::size_t rows = 0, cols = 0;
        for (const auto& n : nets) {
            rows += n.layers()[li].rows;
            cols += n.layers()[li].cols;
        }
        if (shared_input && li == 0) cols = nets.front().input_dim();
        affine_layer merged = affine_layer::zeros(rows, cols, exact);
        std::size_t ro = 0, co = 0;
        for (const auto& n : nets) {
            const affine_layer& l = n.layers()[li];
            for (std::size_t i = 0; i < l.rows; ++i) {
                for (std::size_t j = 0; j < l.cols; ++j) {
                    merged.at(ro + i, co + j) = l.at(i, j);
                    if (exact) merged.w_exact[(ro + i) * merged.cols + co + j] =
                        l.w_exact[i * l.cols + j];
                }
                merged.b[ro + i] = l.b[i];
                if (exact) merged.b_exact[ro + i] = l.b_exact[i];
            }
            ro += l.rows;
            if (!(shared_input && li == 0)) co += l.cols;
        }
        out.push_back(std::move(merged));
    }
    return relu_network(std::move(out));
}

}  // namespace detail

/// Block-diagonal stacking of equal-depth networks; inputs are concatenated,
/// outputs are concatenated. Depth is preserved; connectivity and width add,
/// the weight set is the union plus {0}.
inline relu_network parallelize(const std::vector<relu_network>& nets) {
    return detail::stack_blocks(nets, false);
}

/// Same stacking but all networks read one common input vector (the first-layer
/// matrices stack vertically). Used wherever the constructions feed one point
/// through many parallel branches.
inline relu_network parallelize_shared(const std::vector<relu_network>& nets) {
    return detail::stack_blocks(nets, true);
}

/// Network computing outer(rho(inner(x))): layer lists concatenate, which puts
/// one activation between inner's last affine map and outer's first.
inline relu_network compose_with_relu(const relu_network& outer, const relu_network& inner) {
    if (inner.output_dim() != outer.input_dim())
        throw dimension_error("compose_with_relu: inner output vs outer input",
                              outer.input_dim(), inner.output_dim());
    std::vector<affine_layer> layers = inner.layers();
    for (const auto& l : outer.layers()) layers.push_back(l);
    return relu_network(std::move(layers));
}

enum class pad_mode {
    /// Append diag(1) pass-through layers; exact only when the padded value is
    /// nonnegative on the domain of interest.
    nonneg,
    /// Append rho(t) - rho(-t) gadgets; exact for all inputs, doubles the rows
    /// of the previous last layer per added level.
    identity_gadget,
};

/// Extends a network to exactly target_depth without changing its function
/// (on the declared range for pad_mode::nonneg).
inline relu_network pad_depth(const relu_network& net, std::size_t target_depth,
                              pad_mode mode = pad_mode::nonneg) {
    if (target_depth < net.depth())
        throw precondition_error("pad_depth: target depth " + std::to_string(target_depth) +
                                 " below current depth " + std::to_string(net.depth()));
    if (target_depth == net.depth()) return net;
    bool exact = net.all_exact();
    std::vector<affine_layer> layers = net.layers();
    const std::size_t n = net.output_dim();
    if (mode == pad_mode::nonneg) {
        for (std::size_t k = net.depth(); k < target_depth; ++k) {
            affine_layer eye = affine_layer::zeros(n, n, exact);
            for (std::size_t i = 0; i < n; ++i) eye.set(i, i, rational(1));
            layers.push_back(std::move(eye));
        }
    } else {
        for (std::size_t k = net.depth(); k < target_depth; ++k) {
            // duplicate the current last layer with negated sign, then recombine
            affine_layer& last = layers.back();
            affine_layer doubled = affine_layer::zeros(2 * n, last.cols, exact);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < last.cols; ++j) {
                    doubled.at(i, j) = last.at(i, j);
                    doubled.at(n + i, j) = -last.at(i, j);
                    if (exact) {
                        doubled.w_exact[i * last.cols + j] = last.w_exact[i * last.cols + j];
                        doubled.w_exact[(n + i) * last.cols + j] =
                            -last.w_exact[i * last.cols + j];
                    }
                }
                doubled.b[i] = last.b[i];
                doubled.b[n + i] = -last.b[i];
                if (exact) {
                    doubled.b_exact[i] = last.b_exact[i];
                    doubled.b_exact[n + i] = -last.b_exact[i];
                }
            }
            affine_layer recombine = affine_layer::zeros(n, 2 * n, exact);
            for (std::size_t i = 0; i < n; ++i) {
                recombine.set(i, i, rational(1));
                recombine.set(i, n + i, rational(-1));
            }
            layers.back() = std::move(doubled);
            layers.push_back(std::move(recombine));
        }
    }
    return relu_network(std::move(layers));
}

/// Architecture accounting per the network quantity definitions: depth L,
/// connectivity M (nonzero entries of all A_i and b_i), width W, the weight set
/// K (all entries, zeros included), and magnitude B.
struct network_metrics {
    std::size_t depth = 0;
    std::size_t connectivity = 0;
    std::size_t width = 0;
    bool exact = false;
    std::vector<rational> weight_set;      // sorted unique, only when exact
    std::vector<double> weight_set_float;  // sorted unique float values, always
    double magnitude = 0.0;

    bool weight_set_contains(const rational& v) const {
        return std::binary_search(weight_set.begin(), weight_set.end(), v);
    }
};

inline network_metrics metrics(const relu_network& net) {
    network_metrics m;
    m.depth = net.depth();
    m.width = net.input_dim();
    m.exact = net.all_exact();
    std::vector<rational> ws;
    std::vector<double> wsf;
    for (const auto& l : net.layers()) {
        m.width = std::max(m.width, l.rows);
        if (m.exact) {
            for (const auto& v : l.w_exact) {
                if (v != rational(0)) ++m.connectivity;
                ws.push_back(v);
            }
            for (const auto& v : l.b_exact) {
                if (v != rational(0)) ++m.connectivity;
                ws.push_back(v);
            }
        } else {
            for (double v : l.w)
                if (v != 0.0) ++m.connectivity;
            for (double v : l.b)
                if (v != 0.0) ++m.connectivity;
        }
        for (double v : l.w) wsf.push_back(v);
        for (double v : l.b) wsf.push_back(v);
    }
    if (m.exact) {
        std::sort(ws.begin(), ws.end());
        ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
        m.weight_set = std::move(ws);
    }
    std::sort(wsf.begin(), wsf.end());
    wsf.erase(std::unique(wsf.begin(), wsf.end()), wsf.end());
    m.weight_set_float = std::move(wsf);
    for (double v : m.weight_set_float) m.magnitude = std::max(m.magnitude, std::fabs(v));
    return m;
}

/// Single affine layer as a 1-layer network (no activation applied).
inline relu_network affine_net(affine_layer layer) { return relu_network({std::move(layer)}); }

/// 1 x k all-ones row; realizes a sum of k nonnegative branch outputs when
/// composed with compose_with_relu.
inline relu_network sum_row_net(std::size_t k) {
    affine_layer row = affine_layer::zeros(1, k);
    for (std::size_t j = 0; j < k; ++j) row.set(0, j, rational(1));
    return affine_net(std::move(row));
}

}  // namespace rectiflow
