#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rectiflow/common.hpp"
#include "rectiflow/measures.hpp"

namespace rectiflow {

/// Feasible transport plan between two discrete measures under the sup-norm
/// ground metric, with the optimality residual from the final pricing pass.
struct transport_plan {
    struct entry {
        std::size_t src = 0;
        std::size_t dst = 0;
        double mass = 0.0;
        double cost_contrib = 0.0;
    };
    std::vector<entry> entries;
    double cost = 0.0;
    double feasibility_residual = 0.0;  // max |row/col sum - mass|
    double optimality_residual = 0.0;   // |min reduced cost| clipped at 0

    void to_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw error("cannot write '" + path + "'");
        out.precision(17);
        out << "src_idx,dst_idx,mass,cost_contrib\n";
        for (const auto& e : entries)
            out << e.src << "," << e.dst << "," << e.mass << "," << e.cost_contrib << "\n";
    }
};

namespace detail {

inline double supdist(const double* a, const double* b, std::size_t dim) {
    double m = 0.0;
    for (std::size_t k = 0; k < dim; ++k) m = std::max(m, std::fabs(a[k] - b[k]));
    return m;
}

/// Network simplex specialized to the complete bipartite transportation
/// problem. Arcs are implicit (cost evaluated on demand from the point
/// coordinates); only the spanning-tree basis is stored. The initial basis is
/// the artificial-root big-M star, and the leaving-arc rule keeps the tree
/// strongly feasible (last blocking arc from the apex), which rules out
/// degenerate cycling.
class transportation_simplex {
public:
    transportation_simplex(const discrete_measure& mu, const discrete_measure& nu)
        : dim_(mu.dim), n_(mu.size()), m_(nu.size()), src_(&mu.coords), dst_(&nu.coords) {
        if (mu.dim != nu.dim)
            throw dimension_error("w1_discrete: point dimensions differ", mu.dim, nu.dim);
        if (n_ == 0 || m_ == 0) throw precondition_error("w1_discrete: empty support");
        if (n_ > 20000 || m_ > 20000)
            throw precondition_error(
                "w1_discrete: supports capped at 20000 atoms per side; coarsen the input");
        double ta = mu.total_mass(), tb = nu.total_mass();
        if (ta <= 0.0 || tb <= 0.0) throw precondition_error("w1_discrete: zero total mass");
        if (std::fabs(ta - tb) > 1e-10 * std::max({1.0, ta, tb}))
            throw precondition_error("w1_discrete: total masses differ (" + std::to_string(ta) +
                                     " vs " + std::to_string(tb) + ")");
        a_ = mu.masses;
        b_ = nu.masses;
        double scale = ta / tb;  // absorb the (tiny) imbalance on the sink side
        for (double& v : b_) v *= scale;
    }

    transport_plan solve() {
        init_star();
        pivot_loop();
        recompute_tree_flows();
        return extract();
    }

private:
    std::size_t dim_, n_, m_;
    const std::vector<double>* src_;
    const std::vector<double>* dst_;
    std::vector<double> a_, b_;
    double big_m_ = 0.0;

    // nodes 0..n-1 sources, n..n+m-1 sinks, n+m the artificial root.
    // Every tree arc "points up" exactly for source nodes: real arcs are
    // source->sink and artificial arcs are source->root / root->sink.
    std::vector<int> parent_;
    std::vector<double> flow_;  // flow on the arc to parent
    std::vector<double> pot_;
    std::vector<std::vector<int>> children_;

    int root_() const { return static_cast<int>(n_ + m_); }
    bool is_source(int v) const { return v < static_cast<int>(n_); }

    double cost_arc(std::size_t i, std::size_t j) const {
        return supdist(src_->data() + i * dim_, dst_->data() + j * dim_, dim_);
    }

    double parent_arc_cost(int v) const {
        if (parent_[v] == root_()) return big_m_;
        return is_source(v) ? cost_arc(static_cast<std::size_t>(v),
                                       static_cast<std::size_t>(parent_[v]) - n_)
                            : cost_arc(static_cast<std::size_t>(parent_[v]),
                                       static_cast<std::size_t>(v) - n_);
    }

    void attach(int child, int par, double f) {
        parent_[child] = par;
        flow_[child] = f;
        children_[par].push_back(child);
    }

    void init_star() {
        big_m_ = (max_cost_estimate() + 1.0) * 16.0;
        const int N = root_() + 1;
        parent_.assign(N, -1);
        flow_.assign(N, 0.0);
        pot_.assign(N, 0.0);
        children_.assign(N, {});
        for (std::size_t i = 0; i < n_; ++i) {
            attach(static_cast<int>(i), root_(), a_[i]);
            pot_[i] = -big_m_;  // arc i -> root with cost M is basic
        }
        for (std::size_t j = 0; j < m_; ++j) {
            attach(static_cast<int>(n_ + j), root_(), b_[j]);
            pot_[n_ + j] = big_m_;  // arc root -> sink with cost M is basic
        }
    }

    // reduced cost of arc (i, j): c - (pot_sink - pot_source)
    double reduced(std::size_t i, std::size_t j) const {
        return cost_arc(i, j) - pot_[n_ + j] + pot_[i];
    }

    void pivot_loop() {
        const std::size_t narcs = n_ * m_;
        const std::size_t block = std::max<std::size_t>(
            64, static_cast<std::size_t>(std::sqrt(static_cast<double>(narcs))));
        const double eps = 1e-13 * std::max(1.0, big_m_);
        std::size_t cursor = 0;
        std::uint64_t pivots = 0;
        const std::uint64_t pivot_cap = 4000ull * (n_ + m_) + 4000000ull;

        while (true) {
            std::size_t enter = narcs;
            double best = -eps;
            std::size_t scanned = 0;
            while (scanned < narcs) {
                std::size_t stop = std::min(cursor + block, narcs);
                for (std::size_t e = cursor; e < stop; ++e) {
                    double r = reduced(e / m_, e % m_);
                    if (r < best) {
                        best = r;
                        enter = e;
                    }
                }
                scanned += stop - cursor;
                cursor = stop == narcs ? 0 : stop;
                if (enter != narcs) break;
            }
            if (enter == narcs) return;  // optimal
            if (++pivots > pivot_cap)
                throw error("w1_discrete: pivot cap exceeded; solver stalled");
            pivot(enter / m_, enter % m_);
        }
    }

    double max_cost_estimate() const {
        double m = 0.0;
        std::size_t step_i = std::max<std::size_t>(1, n_ / 64);
        std::size_t step_j = std::max<std::size_t>(1, m_ / 64);
        for (std::size_t i = 0; i < n_; i += step_i)
            for (std::size_t j = 0; j < m_; j += step_j) m = std::max(m, cost_arc(i, j));
        return m;
    }

    static void path_to_root(const std::vector<int>& parent, int v, std::vector<int>& out) {
        out.clear();
        while (v != -1) {
            out.push_back(v);
            v = parent[v];
        }
    }

    void pivot(std::size_t ei, std::size_t ej) {
        int i = static_cast<int>(ei), j = static_cast<int>(n_ + ej);
        static thread_local std::vector<int> pi, pj;
        path_to_root(parent_, i, pi);
        path_to_root(parent_, j, pj);
        // find the lowest common ancestor by trimming the shared tail
        std::size_t li = pi.size(), lj = pj.size();
        while (li > 0 && lj > 0 && pi[li - 1] == pj[lj - 1]) {
            --li;
            --lj;
        }
        // theta flows apex -> i-leg -> entering arc -> j-leg -> apex.
        // Decreasing arcs: sources on the i-leg, sinks on the j-leg.
        double theta = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < li; ++t)
            if (is_source(pi[t])) theta = std::min(theta, flow_[pi[t]]);
        for (std::size_t t = 0; t < lj; ++t)
            if (!is_source(pj[t])) theta = std::min(theta, flow_[pj[t]]);
        if (!(theta < std::numeric_limits<double>::infinity()))
            throw error("w1_discrete: unbounded cycle (internal)");

        // strongly feasible leaving rule: the last blocking arc when walking
        // the cycle from the apex in the theta direction
        int leave = -1;
        bool leave_on_i_leg = false;
        for (std::size_t t = li; t-- > 0;) {  // apex down to i
            int v = pi[t];
            if (is_source(v) && flow_[v] <= theta) {
                leave = v;
                leave_on_i_leg = true;
            }
        }
        for (std::size_t t = 0; t < lj; ++t) {  // j up to apex
            int v = pj[t];
            if (!is_source(v) && flow_[v] <= theta) {
                leave = v;
                leave_on_i_leg = false;
            }
        }
        if (leave == -1) throw error("w1_discrete: no leaving arc (internal)");

        if (theta != 0.0) {
            for (std::size_t t = 0; t < lj; ++t) {  // v -> parent: aligned for sources
                int v = pj[t];
                flow_[v] += is_source(v) ? theta : -theta;
            }
            for (std::size_t t = 0; t < li; ++t) {  // parent -> v: aligned for sinks
                int v = pi[t];
                flow_[v] += is_source(v) ? -theta : theta;
            }
            flow_[leave] = 0.0;  // exact, kills residual dust on the leaving arc
        }

        // re-hang: reverse parent pointers from the entering endpoint up to the
        // node whose parent arc leaves the basis, then repair potentials below
        if (leave_on_i_leg) {
            rehang(i, j, leave, theta);
            refresh_subtree_potentials(i);
        } else {
            rehang(j, i, leave, theta);
            refresh_subtree_potentials(j);
        }
    }

    /// Reverses the parent chain from `start` up to `stop` (whose parent arc is
    /// the leaving arc), then attaches `start` below `anchor` with the entering
    /// arc carrying theta.
    void rehang(int start, int anchor, int stop, double theta) {
        static thread_local std::vector<int> chain;
        chain.clear();
        int v = start;
        while (true) {
            chain.push_back(v);
            if (v == stop) break;
            v = parent_[v];
        }
        static thread_local std::vector<double> oldflow;
        oldflow.assign(chain.size(), 0.0);
        for (std::size_t t = 0; t < chain.size(); ++t) oldflow[t] = flow_[chain[t]];
        // detach stop from its old parent
        detach(chain.back());
        for (std::size_t t = chain.size(); t-- > 1;) {
            detach(chain[t - 1]);
        }
        // rebuild reversed: parent(chain[t]) = chain[t-1], flow = old flow of chain[t-1]'s arc
        for (std::size_t t = chain.size(); t-- > 1;) {
            attach(chain[t], chain[t - 1], oldflow[t - 1]);
        }
        attach(start, anchor, theta);
    }

    void detach(int v) {
        int p = parent_[v];
        if (p == -1) return;
        auto& ch = children_[p];
        ch.erase(std::find(ch.begin(), ch.end(), v));
        parent_[v] = -1;
        flow_[v] = 0.0;
    }

    void refresh_subtree_potentials(int top) {
        static thread_local std::vector<int> stack;
        stack.assign(1, top);
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            pot_[v] = is_source(v) ? pot_[parent_[v]] - parent_arc_cost(v)
                                   : pot_[parent_[v]] + parent_arc_cost(v);
            for (int c : children_[v]) stack.push_back(c);
        }
    }

    /// Leaf-to-root elimination recomputes every tree flow from the exact
    /// supplies, wiping accumulated pivot drift. At each node the parent arc
    /// carries whatever the child arcs left uncovered.
    void recompute_tree_flows() {
        const int N = root_() + 1;
        std::vector<double> excess(N, 0.0);
        for (std::size_t i = 0; i < n_; ++i) excess[i] = a_[i];
        for (std::size_t j = 0; j < m_; ++j) excess[n_ + j] = b_[j];
        std::vector<int> order;
        order.reserve(N);
        std::vector<int> stack = {root_()};
        while (!stack.empty()) {
            int v = stack.back();
            stack.pop_back();
            order.push_back(v);
            for (int c : children_[v]) stack.push_back(c);
        }
        double total = std::accumulate(a_.begin(), a_.end(), 0.0);
        for (std::size_t t = order.size(); t-- > 1;) {
            int v = order[t];
            double f = excess[v];
            if (f < -1e-9 * std::max(1.0, total))
                throw error("w1_discrete: negative basic flow (internal)");
            flow_[v] = std::max(f, 0.0);
            excess[parent_[v]] -= flow_[v];
        }
        // a feasible instance drives every artificial arc to zero
        for (int v = 0; v < root_(); ++v)
            if (parent_[v] == root_() && flow_[v] > 1e-9 * std::max(1.0, total))
                throw error("w1_discrete: artificial arc kept positive flow (internal)");
    }

    transport_plan extract() {
        transport_plan plan;
        long double total = 0.0L;
        for (int v = 0; v < root_(); ++v) {
            if (parent_[v] == root_()) continue;  // artificial arc
            double f = flow_[v];
            if (f <= 0.0) continue;
            std::size_t i, j;
            if (is_source(v)) {
                i = static_cast<std::size_t>(v);
                j = static_cast<std::size_t>(parent_[v]) - n_;
            } else {
                i = static_cast<std::size_t>(parent_[v]);
                j = static_cast<std::size_t>(v) - n_;
            }
            double c = cost_arc(i, j);
            plan.entries.push_back({i, j, f, f * c});
            total += static_cast<long double>(f) * c;
        }
        plan.cost = static_cast<double>(total);

        // feasibility residual against the (rebalanced) masses
        std::vector<double> rs(n_, 0.0), cs(m_, 0.0);
        for (const auto& e : plan.entries) {
            rs[e.src] += e.mass;
            cs[e.dst] += e.mass;
        }
        double viol = 0.0;
        for (std::size_t i = 0; i < n_; ++i) viol = std::max(viol, std::fabs(rs[i] - a_[i]));
        for (std::size_t j = 0; j < m_; ++j) viol = std::max(viol, std::fabs(cs[j] - b_[j]));
        plan.feasibility_residual = viol;

        // optimality: one full exact pricing pass
        double minr = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < m_; ++j) minr = std::min(minr, reduced(i, j));
        plan.optimality_residual = -minr;
        return plan;
    }
};

}  // namespace detail

struct w1_result {
    double cost = 0.0;
    transport_plan plan;
};

/// Exact W1 between finite discrete measures under the sup-norm ground metric,
/// by network simplex on the complete bipartite graph.
inline w1_result w1_discrete(const discrete_measure& mu, const discrete_measure& nu) {
    detail::transportation_simplex solver(mu, nu);
    w1_result r;
    r.plan = solver.solve();
    r.cost = r.plan.cost;
    return r;
}

/// 1-D closed form: integral of |F_mu - F_nu|. Independent of the simplex
/// path; used as its oracle.
inline double w1_1d(const discrete_measure& mu, const discrete_measure& nu) {
    if (mu.dim != 1 || nu.dim != 1)
        throw dimension_error("w1_1d: needs 1-D measures", 1, mu.dim != 1 ? mu.dim : nu.dim);
    double ta = mu.total_mass(), tb = nu.total_mass();
    if (ta <= 0.0 || tb <= 0.0) throw precondition_error("w1_1d: zero total mass");
    if (std::fabs(ta - tb) > 1e-10 * std::max({1.0, ta, tb}))
        throw precondition_error("w1_1d: total masses differ");
    struct ev {
        double x;
        double dmu;
    };
    std::vector<ev> events;
    events.reserve(mu.size() + nu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) events.push_back({mu.coords[i], mu.masses[i] / ta});
    for (std::size_t j = 0; j < nu.size(); ++j)
        events.push_back({nu.coords[j], -nu.masses[j] / tb});
    std::sort(events.begin(), events.end(), [](const ev& a, const ev& b) { return a.x < b.x; });
    long double area = 0.0L, f = 0.0L;
    for (std::size_t t = 0; t + 1 <= events.size(); ++t) {
        f += events[t].dmu;
        if (t + 1 < events.size()) area += fabsl(f) * (events[t + 1].x - events[t].x);
    }
    return static_cast<double>(area) * ta;
}

/// Kantorovich dual witness: max over the given 1-Lipschitz test functions of
/// int psi dmu - int psi dnu. Each function is certified 1-Lipschitz on the
/// atom set before use; a violating pair rejects it.
struct dual_test_function {
    std::string name;
    std::function<double(std::span<const double>)> fn;
};

inline double dual_lower_bound(const discrete_measure& mu, const discrete_measure& nu,
                               const std::vector<dual_test_function>& fns) {
    if (mu.dim != nu.dim)
        throw dimension_error("dual_lower_bound: dims differ", mu.dim, nu.dim);
    if (fns.empty()) throw precondition_error("dual_lower_bound: no test functions");
    // pool of atoms for the pairwise Lipschitz certificate
    std::vector<const discrete_measure*> parts = {&mu, &nu};
    std::vector<std::span<const double>> pool;
    for (const auto* p : parts)
        for (std::size_t i = 0; i < p->size(); ++i) pool.push_back(p->point(i));

    double best = -std::numeric_limits<double>::infinity();
    for (const auto& tf : fns) {
        std::vector<double> vals(pool.size());
        for (std::size_t i = 0; i < pool.size(); ++i) vals[i] = tf.fn(pool[i]);
        for (std::size_t i = 0; i < pool.size(); ++i)
            for (std::size_t j = i + 1; j < pool.size(); ++j) {
                double dist = detail::supdist(pool[i].data(), pool[j].data(), mu.dim);
                if (std::fabs(vals[i] - vals[j]) > dist * (1.0 + 1e-9) + 1e-12)
                    throw precondition_error(
                        "dual_lower_bound: test function '" + tf.name +
                        "' is not 1-Lipschitz on atoms " + std::to_string(i) + "," +
                        std::to_string(j));
            }
        long double acc = 0.0L;
        std::size_t off = 0;
        for (std::size_t i = 0; i < mu.size(); ++i) acc += vals[off + i] * mu.masses[i];
        off = mu.size();
        for (std::size_t j = 0; j < nu.size(); ++j) acc -= vals[off + j] * nu.masses[j];
        best = std::max(best, static_cast<double>(acc));
    }
    return best;
}

}  // namespace rectiflow
