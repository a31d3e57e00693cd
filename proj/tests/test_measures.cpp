#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "rectiflow/measures.hpp"
#include "rectiflow/rng.hpp"
#include "rectiflow/wasserstein.hpp"

using namespace rectiflow;

TEST_CASE("quantize_simplex worked examples") {
    std::vector<double> w1 = {0.3, 0.7};
    auto q1 = quantize_simplex(w1, 4);
    CHECK(q1[0] == rational(1, 4));
    CHECK(q1[1] == rational(3, 4));

    // already on grid, no zeros: fixed point
    std::vector<double> w2 = {0.25, 0.5, 0.25};
    auto q2 = quantize_simplex(w2, 4);
    CHECK(q2[0] == rational(1, 4));
    CHECK(q2[1] == rational(1, 2));
    CHECK(q2[2] == rational(1, 4));

    // zero-repair path transfers one delta unit
    std::vector<double> w3 = {0.0, 1.0};
    auto q3 = quantize_simplex(w3, 4);
    CHECK(q3[0] == rational(1, 4));
    CHECK(q3[1] == rational(3, 4));

    CHECK_THROWS_AS(quantize_simplex(std::vector<double>{0.5, 0.25, 0.25}, 2),
                    precondition_error);
}

TEST_CASE("quantize_simplex random battery: exact grid, exact sum, L1 bound") {
    rng gen(1234);
    for (int rep = 0; rep < 1000; ++rep) {
        std::size_t n = 1 + gen.below(64);
        long long N = static_cast<long long>(n + gen.below(256));
        std::vector<double> w(n);
        double s = 0.0;
        for (auto& v : w) {
            v = gen.uniform() < 0.2 ? 0.0 : gen.uniform();
            s += v;
        }
        if (s == 0.0) {
            w[0] = 1.0;
            s = 1.0;
        }
        for (auto& v : w) v /= s;
        auto q = quantize_simplex(w, N);
        rational sum(0);
        double l1 = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            CHECK(q[k].num() >= 1);                     // strictly positive
            CHECK((rational(N) * q[k]).is_integer());   // on the grid
            sum += q[k];
            l1 += std::fabs(q[k].to_double() - w[k]);
        }
        CHECK(sum == rational(1));
        CHECK(l1 <= 4.0 * static_cast<double>(n - 1) / static_cast<double>(N) + 1e-12);
    }
}

TEST_CASE("histogram cell assignment") {
    discrete_measure atom(2, {0.1, 0.9}, {1.0});
    auto h = histogram(atom, 2);
    std::vector<long long> idx = {1, 2};
    CHECK(h.weights[h.flat(idx)] == 1.0);

    // boundary x = 1 lands in the last (closed) cell
    discrete_measure edge(1, {1.0}, {1.0});
    auto he = histogram(edge, 4);
    CHECK(he.weights[3] == 1.0);

    // uniform grid measure with K dividing the grid: equal weights
    std::vector<double> xs;
    std::vector<double> ms;
    for (int i = 0; i < 8; ++i) {
        xs.push_back((i + 0.5) / 8.0);
        ms.push_back(1.0 / 8.0);
    }
    auto hu = histogram(discrete_measure(1, xs, ms), 4);
    for (double w : hu.weights) CHECK(w == Catch::Approx(0.25));

    discrete_measure outside(1, {1.5}, {1.0});
    CHECK_THROWS_AS(histogram(outside, 2), domain_error);

    // mass conserved exactly
    rng gen(3);
    std::vector<double> xs2, ms2;
    double total = 0.0;
    for (int i = 0; i < 100; ++i) {
        xs2.push_back(gen.uniform());
        double m = gen.uniform();
        ms2.push_back(m);
        total += m;
    }
    for (auto& m : ms2) m /= total;
    auto h2 = histogram(discrete_measure(1, xs2, ms2), 7);
    double ws = 0.0;
    for (double w : h2.weights) ws += w;
    double ms_sum = 0.0;
    for (double m : ms2) ms_sum += m;
    CHECK(ws == Catch::Approx(ms_sum).margin(1e-15));
}

TEST_CASE("quantized_mixture worked example") {
    // d=1, K=2, N=4, atom at 0.25: floors give (1,0), repair moves one delta
    discrete_measure atom(1, {0.25}, {1.0});
    auto qm = quantized_mixture(atom, 2, 4);
    REQUIRE(qm.has_exact());
    CHECK(qm.weights_exact[0] == rational(3, 4));
    CHECK(qm.weights_exact[1] == rational(1, 4));
    rational s(0);
    for (const auto& r : qm.weights_exact) s += r;
    CHECK(s == rational(1));

    // an already quantized mixture is a fixed point
    uniform_mixture mix(1, 2, std::vector<rational>{rational(3, 4), rational(1, 4)});
    auto qm2 = quantize_mixture(mix, 4);
    CHECK(qm2.weights_exact == mix.weights_exact);
}

TEST_CASE("mixture json round trip") {
    uniform_mixture mix(2, 2,
                        std::vector<rational>{rational(1, 2), rational(1, 4), rational(1, 4),
                                              rational(0)});
    auto text = mix.to_json();
    auto back = uniform_mixture::from_json(text);
    CHECK(back.d == 2);
    CHECK(back.K == 2);
    CHECK(back.weights_exact == mix.weights_exact);
    CHECK(back.quantization_denominator() == 4);
    CHECK_THROWS_AS(uniform_mixture::from_json("{\"d\":1}"), parse_error);
}

TEST_CASE("sample_pushforward determinism and laws") {
    auto i1 = identity_net(1);
    auto a = sample_pushforward(i1, 4000, 9);
    auto b = sample_pushforward(i1, 4000, 9);
    CHECK(a.coords == b.coords);

    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a.coords[i] * a.masses[i];
    CHECK(std::fabs(mean - 0.5) <= 3.0 / std::sqrt(4000.0));

    // constant net: all atoms at the offset
    affine_layer zero = affine_layer::zeros(1, 1);
    zero.set_offset(0, rational(7, 10));
    auto c = sample_pushforward(relu_network({zero}), 50, 1);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c.coords[i] == 0.7);

    CHECK_THROWS_AS(sample_pushforward(i1, 0, 1), precondition_error);
}

TEST_CASE("mixture_to_discrete") {
    uniform_mixture one(1, 1, std::vector<rational>{rational(1)});
    auto atoms = mixture_to_discrete(one, 1);
    CHECK(atoms.atoms.size() == 1);
    CHECK(atoms.atoms.coords[0] == 0.5);
    CHECK(atoms.atoms.masses[0] == 1.0);
    CHECK(atoms.w1_error_bound == 0.5);

    uniform_mixture mix(1, 2, std::vector<rational>{rational(1), rational(0)});
    auto a2 = mixture_to_discrete(mix, 4);
    CHECK(a2.atoms.size() == 4);  // zero-weight cells produce no atoms
    for (std::size_t i = 0; i < a2.atoms.size(); ++i) CHECK(a2.atoms.coords[i] < 0.5);

    // refining the grid tightens the measured distance to a reference
    uniform_mixture m2(1, 2, std::vector<rational>{rational(1, 4), rational(3, 4)});
    auto coarse = mixture_to_discrete(m2, 2);
    auto fine = mixture_to_discrete(m2, 32);
    discrete_measure ref(1, {0.25, 0.75}, {0.25, 0.75});
    double dc = w1_1d(ref, coarse.atoms);
    double df = w1_1d(ref, fine.atoms);
    CHECK(df <= dc + 1e-9);

    CHECK_THROWS_AS(mixture_to_discrete(uniform_mixture(2, 2, std::vector<rational>{
                                            rational(1, 4), rational(1, 4), rational(1, 4),
                                            rational(1, 4)}),
                                        3),
                    precondition_error);
}

TEST_CASE("mixture restriction bound for two-component mixtures") {
    rng gen(21);
    for (int rep = 0; rep < 10; ++rep) {
        auto make = [&](double lo, double hi, std::size_t n) {
            std::vector<double> xs(n), ms(n, 1.0 / static_cast<double>(n));
            for (auto& v : xs) v = gen.uniform(lo, hi);
            return discrete_measure(1, std::move(xs), std::move(ms));
        };
        auto mu1 = make(0.0, 0.5, 8), nu1 = make(0.0, 0.5, 8);
        auto mu2 = make(0.5, 1.0, 8), nu2 = make(0.5, 1.0, 8);
        double a = 0.3;
        discrete_measure mu(1, {}, {}), nu(1, {}, {});
        auto append = [](discrete_measure& dst, const discrete_measure& src, double scale) {
            for (std::size_t i = 0; i < src.size(); ++i)
                dst.push_back(src.point(i), src.masses[i] * scale);
        };
        append(mu, mu1, a);
        append(mu, mu2, 1.0 - a);
        append(nu, nu1, a);
        append(nu, nu2, 1.0 - a);
        double whole = w1_discrete(mu, nu).cost;
        double parts = a * w1_discrete(mu1, nu1).cost + (1.0 - a) * w1_discrete(mu2, nu2).cost;
        CHECK(whole <= parts + 1e-9);
    }
}

TEST_CASE("discrete measure csv round trip") {
    auto path = std::filesystem::temp_directory_path() / "rectiflow_dm_test.csv";
    discrete_measure dm(2, {0.1, 0.2, 0.3, 0.4}, {0.5, 0.5});
    dm.to_csv(path.string());
    auto back = discrete_measure::from_csv(path.string());
    CHECK(back.dim == 2);
    CHECK(back.coords == dm.coords);
    CHECK(back.masses == dm.masses);
    std::remove(path.string().c_str());
    CHECK_THROWS_AS(discrete_measure::from_csv("/nonexistent/file.csv"), parse_error);
}
