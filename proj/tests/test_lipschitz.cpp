#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "rectiflow/lipschitz_approx.hpp"
#include "rectiflow/rng.hpp"

using namespace rectiflow;

TEST_CASE("mcshane extension") {
    lipschitz_sample s(1, 1, {0.0, 0.5, 1.0}, {0.2, 0.7, 0.2}, 1.0, 0.7);
    // exact at sample points
    for (std::size_t i = 0; i < s.size(); ++i)
        CHECK(mcshane_extend(s, s.point(i)) == s.values[i]);

    lipschitz_sample single(1, 1, {0.5}, {1.0}, 2.0, 1.0);
    double x = 0.7;
    CHECK(mcshane_extend(single, std::span<const double>(&x, 1)) ==
          Catch::Approx(1.0 + 2.0 * 0.2));

    lipschitz_sample flat(1, 1, {0.0, 1.0}, {0.4, 0.4}, 0.0, 0.4);
    double q = 0.3;
    CHECK(mcshane_extend(flat, std::span<const double>(&q, 1)) == 0.4);

    // the extension never exceeds the declared constant
    rng gen(4);
    lipschitz_sample s2(2, 1, {0.1, 0.1, 0.9, 0.2, 0.4, 0.8}, {0.1, 0.5, 0.3}, 1.0, 0.5);
    for (int rep = 0; rep < 300; ++rep) {
        std::vector<double> a = {gen.uniform(), gen.uniform()};
        std::vector<double> b = {gen.uniform(), gen.uniform()};
        double d = std::max(std::fabs(a[0] - b[0]), std::fabs(a[1] - b[1]));
        CHECK(std::fabs(mcshane_extend(s2, a) - mcshane_extend(s2, b)) <= d + 1e-12);
    }

    CHECK_THROWS_AS(lipschitz_sample(1, 1, {0.0, 0.1}, {0.0, 0.9}, 1.0, 1.0),
                    precondition_error);  // pair violates declared lip
}

TEST_CASE("quantize_codebook") {
    CHECK(quantize_codebook(0.234, 10) == rational(1, 5));  // [2.34] = 2
    CHECK(quantize_codebook(0.3, 10) == rational(3, 10));   // grid fixed point
    CHECK(quantize_codebook(0.375, 4) == rational(1, 2));   // tie 1.5 away from zero
    CHECK(quantize_codebook(-0.375, 4) == rational(-1, 2));
    for (long long N : {1, 2, 3, 7, 16}) {
        rng gen(6);
        for (int rep = 0; rep < 200; ++rep) {
            double y = gen.uniform(-static_cast<double>(N), static_cast<double>(N));
            auto r = quantize_codebook(y, N);
            CHECK(in_F_N(r, N));
            CHECK(std::fabs(r.to_double() - y) <= 0.5 / static_cast<double>(N) + 1e-15);
        }
    }
    CHECK_THROWS_AS(quantize_codebook(12.0, 3), domain_error);
}

TEST_CASE("build_fN reproduces constants and interpolates") {
    auto constf = [](std::span<const double>) { return 0.4; };
    auto a = build_fN(constf, 2, 3);
    rng gen(2);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> x = {gen.uniform(), gen.uniform()};
        CHECK(evaluate(a.net, x)[0] == Catch::Approx(0.4).margin(1e-12));
    }

    auto ramp = [](std::span<const double> x) { return x[0]; };
    auto b = build_fN(ramp, 1, 2);
    double p = 0.25;
    CHECK(evaluate(b.net, std::span<const double>(&p, 1))[0] == Catch::Approx(0.25).margin(1e-15));

    // sup error over a dense grid <= Lip/N + delta (delta = 0 here)
    auto tentf = [](std::span<const double> x) { return std::fabs(x[0] - 0.5); };
    for (long long N : {2, 4, 8}) {
        auto c = build_fN(tentf, 1, N);
        double worst = 0.0;
        for (long long t = 0; t <= 10 * N; ++t) {
            double x = static_cast<double>(t) / (10.0 * static_cast<double>(N));
            worst = std::max(worst, std::fabs(tentf(std::span<const double>(&x, 1)) -
                                              evaluate_scalar(c.net, x)));
        }
        CHECK(worst <= 1.0 / static_cast<double>(N) + 1e-9);
    }

    // a codebook violating its contract is rejected
    auto badh = [](double y) { return y + 1.0; };
    CHECK_THROWS_AS(build_fN(ramp, 1, 2, badh, 0.1), precondition_error);
}

TEST_CASE("quantized approximant error bound and grid membership") {
    // constant 1/2: error <= 1/(2N)
    auto constf = [](std::span<const double>) { return 0.5; };
    for (long long N : {1, 2, 5}) {
        auto a = build_quantized_approximant_fn(constf, 1, 0.0, 0.5, N);
        for (int t = 0; t <= 50; ++t) {
            double x = t / 50.0;
            CHECK(std::fabs(evaluate_scalar(a.net, x) - 0.5) <=
                  0.5 / static_cast<double>(N) + 1e-12);
        }
    }

    // |x - 1/2| with lip 1, N = 8: bound (1 + 1/2)/8
    auto tentf = [](std::span<const double> x) { return std::fabs(x[0] - 0.5); };
    auto b = build_quantized_approximant_fn(tentf, 1, 1.0, 0.5, 8);
    double worst = 0.0;
    for (int t = 0; t <= 800; ++t) {
        double x = t / 800.0;
        worst = std::max(worst,
                         std::fabs(tentf(std::span<const double>(&x, 1)) -
                                   evaluate_scalar(b.net, x)));
    }
    CHECK(worst <= 1.5 / 8.0 + 1e-9);

    // every final-layer weight lies in F_N, magnitude <= N
    auto mm = metrics(b.net);
    CHECK(mm.exact);
    for (const auto& c : b.grid_values_exact[0]) CHECK(in_F_N(c, 8));
    CHECK(mm.magnitude <= 8.0);

    CHECK_THROWS_AS(build_quantized_approximant_fn(tentf, 1, 1.0, 0.5, 1), precondition_error);
}

TEST_CASE("grid node interpolation collapses the partition") {
    auto f = [](std::span<const double> x) { return 0.25 * x[0] + 0.1 * x[1]; };
    for (long long N : {2, 3}) {
        auto a = build_fN(f, 2, N);
        for (long long i = 0; i <= N; ++i)
            for (long long j = 0; j <= N; ++j) {
                std::vector<double> x = {static_cast<double>(i) / static_cast<double>(N),
                                         static_cast<double>(j) / static_cast<double>(N)};
                std::size_t flat = static_cast<std::size_t>(i) *
                                       static_cast<std::size_t>(N + 1) +
                                   static_cast<std::size_t>(j);
                CHECK(std::fabs(evaluate(a.net, x)[0] - a.grid_values[0][flat]) <= 1e-12);
            }
    }
}

TEST_CASE("architecture bounds for the quantized corollary") {
    auto f = [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v;
        return 0.3 * s / static_cast<double>(x.size());
    };
    for (std::size_t m : {1u, 2u, 3u}) {
        for (long long N = 1; N <= (m == 3 ? 4 : 6); ++N) {
            auto a = build_quantized_approximant_fn(f, m, 0.3, 0.3, N);
            auto mm = metrics(a.net);
            std::size_t nodes = 1;
            for (std::size_t j = 0; j < m; ++j) nodes *= static_cast<std::size_t>(N + 1);
            CHECK(mm.depth <= static_cast<std::size_t>(
                                  std::ceil(std::log2(static_cast<double>(m + 1)))) + 4);
            CHECK(mm.connectivity <= nodes * (62 * m - 28));
            CHECK(mm.width <= nodes * 6 * m);
            CHECK(mm.magnitude <= static_cast<double>(N));
            for (const auto& w : mm.weight_set) CHECK(in_F_N(w, N));
        }
    }
}

TEST_CASE("lipschitz control of the approximant") {
    // 1-D: exact breakpoint constant <= lip + 1
    auto tentf = [](std::span<const double> x) { return std::fabs(x[0] - 0.5); };
    for (long long N : {2, 4, 8, 16}) {
        auto a = build_quantized_approximant_fn(tentf, 1, 1.0, 0.5, N);
        double lip = exact_lipschitz_1d(a.net, 0.0, 1.0);
        CHECK(lip <= 1.0 + 1.0 + 1e-9);
    }

    // 2-D: sampled estimate respects m (lip + 1); 1-norm form respects lip + 2 N delta
    auto saddle = [](std::span<const double> x) { return 0.5 * std::fabs(x[0] - x[1]); };
    auto b = build_quantized_approximant_fn(saddle, 2, 0.5, 0.5, 4);
    std::vector<double> lo = {0.0, 0.0}, hi = {1.0, 1.0};
    double lip_sup = estimate_lipschitz(b.net, lo, hi, 6000, 5, lip_norm::sup);
    CHECK(lip_sup <= 2.0 * (0.5 + 1.0) + 1e-6);
    double lip_one = estimate_lipschitz(b.net, lo, hi, 6000, 5, lip_norm::one);
    CHECK(lip_one <= 0.5 + 1.0 + 1e-6);  // lip + 2 N delta with delta = 1/(2N)
}

TEST_CASE("estimate_lipschitz exact cases") {
    std::vector<double> lo = {0.0}, hi = {1.0};
    CHECK(estimate_lipschitz(identity_net(1), lo, hi) == 1.0);
    // scaled spike phi(N x): tent with slope N
    auto sn = spike_network(1);
    affine_layer scale = affine_layer::zeros(1, 1);
    scale.set(0, 0, rational(4));
    auto scaled = compose_with_relu(sn.net, affine_net(scale));
    CHECK(estimate_lipschitz(scaled, lo, hi) == Catch::Approx(4.0));
}

TEST_CASE("sample loading and vector targets") {
    namespace fs = std::filesystem;
    auto csv = fs::temp_directory_path() / "rectiflow_sample.csv";
    auto meta = fs::temp_directory_path() / "rectiflow_sample.json";
    {
        std::ofstream c(csv);
        c << "x1,v1,v2\n0.0,0.0,0.5\n0.5,0.25,0.5\n1.0,0.5,0.5\n";
        std::ofstream m(meta);
        m << "{\"m\":1,\"lip\":0.5,\"sup_norm\":0.5}";
    }
    auto s = lipschitz_sample::load(csv.string(), meta.string());
    CHECK(s.m == 1);
    CHECK(s.n == 2);
    CHECK(s.size() == 3);

    auto a = build_quantized_approximant(s, 4);
    CHECK(a.net.input_dim() == 1);
    CHECK(a.net.output_dim() == 2);
    // close to the sample's own values within the corollary bound
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto y = evaluate(a.net, s.point(i));
        for (std::size_t c = 0; c < 2; ++c)
            CHECK(std::fabs(y[c] - s.values[i * 2 + c]) <= (0.5 + 0.5) / 4.0 + 1e-9);
    }
    std::remove(csv.string().c_str());
    std::remove(meta.string().c_str());
}
