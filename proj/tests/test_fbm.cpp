/*
 Copyright 2026 The mfbm Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

// Unit tests for the fbm module: covariance, kernel, generators, export.

#include <catch_amalgamated.hpp>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <sstream>
#include <vector>

#include "mfbm/fbm.hpp"

using namespace mfbm;
using Catch::Approx;

namespace {

// Independent route for Z_H: adaptive tanh-sinh quadrature of the defining
// integral (endpoint singularities handled by the rule itself).
double kernel_z_quadrature(double t, double s, double H) {
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double a = H - 0.5;
    const double inner = integrator.integrate(
        [&](double u) { return std::pow(u, H - 1.5) * std::pow(u - s, a); }, s, t, 1e-14);
    return kappa_h(Hurst(H)) * (std::pow(t / s, a) * std::pow(t - s, a) - a * std::pow(s, -a) * inner);
}

}  // namespace

TEST_CASE("philox4x32-10 known answers", "[rng]") {
    using rng::Counter;
    using rng::Key;
    CHECK(rng::philox4x32(Counter{0, 0, 0, 0}, Key{0, 0}) ==
          Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    CHECK(rng::philox4x32(Counter{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                          Key{0xffffffffu, 0xffffffffu}) ==
          Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    CHECK(rng::philox4x32(Counter{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                          Key{0xa4093822u, 0x299f31d0u}) ==
          Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("normal stream draws are addressable", "[rng]") {
    rng::NormalStream s(7, 3, 1);
    std::vector<double> a(11), b(6);
    s.fill(a);
    s.fill(b, 5);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i] == a[5 + i]);
    CHECK(s.at(4) == a[4]);
    rng::NormalStream other(7, 4, 1);
    CHECK(other.at(0) != a[0]);
}

TEST_CASE("Hurst rejects values outside (1/2, 1)", "[fbm][types]") {
    CHECK_THROWS_AS(Hurst(0.5), DomainError);
    CHECK_THROWS_AS(Hurst(0.4), DomainError);
    CHECK_THROWS_AS(Hurst(1.0), DomainError);
    CHECK_THROWS_AS(Hurst(std::nan("")), DomainError);
    CHECK(Hurst(0.75).value() == 0.75);
}

TEST_CASE("time grid nodes", "[fbm][types]") {
    TimeGrid g(2.0, 8);
    CHECK(g.node(0) == 0.0);
    CHECK(g.node(8) == 2.0);
    CHECK(g.dt() == 0.25);
    for (std::size_t i = 0; i < 8; ++i) CHECK(g.node(i + 1) > g.node(i));
    CHECK_THROWS_AS(TimeGrid(0.0, 4), DomainError);
    CHECK_THROWS_AS(TimeGrid(1.0, 0), DomainError);
    CHECK(g.coarsened(4).n_steps() == 2);
    CHECK_THROWS_AS(g.coarsened(3), DomainError);
}

TEST_CASE("fbm covariance", "[fbm]") {
    for (double H : {0.6, 0.75, 0.9}) {
        CHECK(fbm_covariance(1, 1, Hurst(H)) == Approx(1.0).epsilon(1e-15));
        CHECK(fbm_covariance(0.7, 0, Hurst(H)) == 0.0);
    }
    CHECK(fbm_covariance(1, 2, Hurst(0.75)) == Approx(1.4142135623730951).epsilon(1e-14));
    CHECK_THROWS_AS(fbm_covariance(-0.1, 1, Hurst(0.75)), DomainError);

    // symmetry and diagonal on a sweep
    for (double H : {0.55, 0.7, 0.95})
        for (double t = 0; t <= 2.0; t += 0.3)
            for (double s = 0; s <= 2.0; s += 0.35) {
                CHECK(fbm_covariance(t, s, Hurst(H)) == fbm_covariance(s, t, Hurst(H)));
                CHECK(fbm_covariance(t, t, Hurst(H)) == Approx(std::pow(t, 2 * H)).margin(1e-15));
            }
}

TEST_CASE("kappa_h fixtures", "[fbm]") {
    // 30-digit reference values (mpmath)
    CHECK(kappa_h(Hurst(0.75)) == Approx(1.0696446350319903241).epsilon(1e-13));
    CHECK(kappa_h(Hurst(0.6)) == Approx(1.0760051841318071863).epsilon(1e-13));
    CHECK(kappa_h(Hurst(0.9)) == Approx(0.81122064814335251477).epsilon(1e-13));
    for (double H = 0.51; H < 1.0; H += 0.04) CHECK(kappa_h(Hurst(H)) > 0.0);
    // the H -> 1/2 limit is 1 (all Gamma factors are Gamma(1))
    CHECK(kappa_h(Hurst(0.5 + 1e-9)) == Approx(1.0).epsilon(1e-7));
}

TEST_CASE("kernel_z", "[fbm][kernel]") {
    CHECK_THROWS_AS(kernel_z(1.0, 1.0, Hurst(0.75)), DomainError);
    CHECK_THROWS_AS(kernel_z(1.0, 1.5, Hurst(0.75)), DomainError);
    CHECK_THROWS_AS(kernel_z(1.0, 0.0, Hurst(0.75)), DomainError);

    // mpmath fixtures
    CHECK(kernel_z(1.0, 0.5, Hurst(0.75)) == Approx(0.9375919636980572333).epsilon(1e-11));
    CHECK(kernel_z(1.0, 0.1, Hurst(0.6)) == Approx(1.104311054719638731).epsilon(1e-11));
    CHECK(kernel_z(2.0, 1.9, Hurst(0.9)) == Approx(0.32487778320822172711).epsilon(1e-11));
    CHECK(kernel_z(0.5, 0.01, Hurst(0.75)) == Approx(1.3995833800910372898).epsilon(1e-11));

    // against adaptive quadrature of the defining integral
    for (double H : {0.55, 0.7, 0.85, 0.95})
        for (double t : {0.3, 1.0, 3.0})
            for (double x : {0.01, 0.2, 0.5, 0.9, 0.999}) {
                const double s = x * t;
                CHECK(kernel_z(t, s, Hurst(H)) == Approx(kernel_z_quadrature(t, s, H)).epsilon(1e-9));
            }
}

TEST_CASE("kernel square integral reproduces Var B^H(t)", "[fbm][kernel]") {
    boost::math::quadrature::tanh_sinh<double> integrator;
    for (double H : {0.6, 0.75, 0.9})
        for (double t : {0.25, 0.5, 1.0}) {
            const Hurst h(H);
            const double v = integrator.integrate(
                [&](double s) {
                    if (s <= 0.0 || s >= t) return 0.0;
                    const double z = kernel_z(t, s, h);
                    return z * z;
                },
                0.0, t, 1e-12);
            INFO("H=" << H << " t=" << t);
            CHECK(std::fabs(v - std::pow(t, 2 * H)) / std::pow(t, 2 * H) <= 1e-6);
        }
}

TEST_CASE("kernel primitive integrates Z_H", "[fbm][kernel]") {
    boost::math::quadrature::tanh_sinh<double> integrator;
    for (double H : {0.6, 0.75, 0.9}) {
        const Hurst h(H);
        for (double x : {0.05, 0.3, 0.77, 1.0}) {
            const double t = 1.3;
            const double quad = integrator.integrate(
                [&](double s) { return (s <= 0.0 || s >= t) ? 0.0 : kernel_z(t, s, h); }, 0.0, x * t, 1e-12);
            CHECK(std::pow(t, H + 0.5) * kernel_primitive(x, h) == Approx(quad).epsilon(1e-9));
        }
    }
}

TEST_CASE("kernel weights: discrete variance approaches t^{2H} under refinement", "[fbm][kernel]") {
    const Hurst h(0.75);
    double prev_gap = 1.0;
    for (std::size_t n : {32, 128, 512}) {
        KernelWeights w(TimeGrid(1.0, n), h);
        const double gap = 1.0 - w.discrete_variance(n);
        CHECK(gap > 0.0);  // cell averaging can only lose variance
        CHECK(gap < prev_gap);
        prev_gap = gap;
    }
    CHECK(prev_gap < 5e-3);
}

TEST_CASE("generate_bm increments", "[fbm][generator]") {
    const TimeGrid grid(1.0, 4);
    const std::size_t n = 100000;
    const PathSet ps = generate_bm(grid, 2, n, 42);
    std::vector<double> x(n), y(n);
    for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = ps.dB(p, 0)[k];
            y[p] = ps.dB(p, 1)[k];
        }
        const auto v = variance_estimate(x);
        CHECK(std::fabs(v.mean - grid.dt()) <= 4 * v.stderr_);
        const auto m = mean_estimate(x);
        CHECK(std::fabs(m.mean) <= 4 * m.stderr_);
        const auto c = covariance_estimate(x, y);
        CHECK(std::fabs(c.mean) <= 4 * c.stderr_);
    }
    for (std::size_t p = 0; p < 10; ++p) {
        CHECK(ps.B(p, 0)[0] == 0.0);
        CHECK(ps.B(p, 1)[4] == Approx(ps.dB(p, 1)[0] + ps.dB(p, 1)[1] + ps.dB(p, 1)[2] + ps.dB(p, 1)[3]));
    }
}

TEST_CASE("generators are deterministic and block-decomposable", "[fbm][generator]") {
    const TimeGrid grid(1.0, 16);
    const Hurst h(0.7);
    const PathSet a = generate_mixed(grid, h, 2, 50, 9);
    const PathSet b = generate_mixed(grid, h, 2, 50, 9);
    CHECK(a == b);

    const PathSet tail = generate_mixed(grid, h, 2, 20, 9, 30);
    for (std::size_t p = 0; p < 20; ++p)
        for (std::size_t d = 0; d < 2; ++d)
            for (std::size_t k = 0; k <= 16; ++k) {
                CHECK(tail.B(p, d)[k] == a.B(p + 30, d)[k]);
                CHECK(tail.BH(p, d)[k] == a.BH(p + 30, d)[k]);
            }

    set_worker_count(4);
    const PathSet c = generate_mixed(grid, h, 2, 50, 9);
    set_worker_count(1);
    CHECK(a == c);

    const PathSet other = generate_mixed(grid, h, 2, 50, 10);
    CHECK_FALSE(a == other);
}

TEST_CASE("kernel generator matches its exact discrete covariance", "[fbm][generator]") {
    const TimeGrid grid(1.0, 64);
    const Hurst h(0.75);
    const std::size_t n = 20000;
    const PathSet ps = generate_mixed(grid, h, 1, n, 123);
    const KernelWeights& w = *ps.kernel();
    for (std::size_t p = 0; p < n; ++p) CHECK(ps.BH(p, 0)[0] == 0.0);

    const std::vector<std::pair<std::size_t, std::size_t>> probes{{64, 64}, {32, 64}, {8, 8}, {1, 64}, {16, 48}};
    std::vector<double> x(n), y(n);
    for (auto [k, l] : probes) {
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = ps.BH(p, 0)[k];
            y[p] = ps.BH(p, 0)[l];
        }
        double exact = 0.0;
        for (std::size_t i = 0; i < std::min(k, l); ++i) exact += w.coeff(k, i) * w.coeff(l, i) * grid.dt();
        const auto c = covariance_estimate(x, y);
        INFO("nodes " << k << "," << l);
        CHECK(std::fabs(c.mean - exact) <= 4 * c.stderr_);
        // discretization gap against the analytic covariance
        const double analytic = fbm_covariance(grid.node(k), grid.node(l), h);
        CHECK(std::fabs(exact - analytic) <= 1e-2);
    }
}

TEST_CASE("kernel generator requires Brownian increments and matching grids", "[fbm][generator]") {
    const TimeGrid grid(1.0, 8);
    PathSet chol = fbm_from_cholesky(grid, Hurst(0.7), 1, 3, 1);
    CHECK_THROWS_AS(fbm_from_kernel(chol, Hurst(0.7)), DomainError);
    auto w = std::make_shared<const KernelWeights>(TimeGrid(1.0, 16), Hurst(0.7));
    CHECK_THROWS_AS(fbm_from_kernel(generate_bm(grid, 1, 3, 1), Hurst(0.7), w), GridMismatch);
}

TEST_CASE("Cholesky generator", "[fbm][generator]") {
    {
        CholeskyFactor one(TimeGrid(1.0, 1), Hurst(0.8));
        CHECK(one.lower()(0, 0) == Approx(1.0));
    }
    const TimeGrid grid(2.0, 32);
    const Hurst h(0.8);
    const std::size_t n = 40000;
    const PathSet ps = fbm_from_cholesky(grid, h, 1, n, 5);
    CHECK_FALSE(ps.has_b());
    std::vector<double> x(n), y(n);
    for (auto [k, l] : std::vector<std::pair<int, int>>{{32, 32}, {16, 32}, {1, 2}, {8, 24}}) {
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = ps.BH(p, 0)[k];
            y[p] = ps.BH(p, 0)[l];
        }
        const auto c = covariance_estimate(x, y);
        CHECK(std::fabs(c.mean - fbm_covariance(grid.node(k), grid.node(l), h)) <= 4 * c.stderr_);
    }
    // self-similarity: Var B^H(a t) / a^{2H} matches Var B^H(t)
    std::vector<double> at(n), t(n);
    for (std::size_t p = 0; p < n; ++p) {
        at[p] = ps.BH(p, 0)[32];
        t[p] = ps.BH(p, 0)[8];
    }
    const auto va = variance_estimate(at), vt = variance_estimate(t);
    const double scale = std::pow(4.0, 2 * h.value());
    CHECK(std::fabs(va.mean / scale - vt.mean) <= 4 * std::hypot(va.stderr_ / scale, vt.stderr_));
}

TEST_CASE("Cholesky failure is reported, not regularized", "[fbm][generator]") {
    Eigen::MatrixXd singular(2, 2);
    singular << 1.0, 1.0, 1.0, 1.0 - 1e-3;
    CHECK_THROWS_AS(CholeskyFactor::factorize(singular, "test"), NumericalError);
    CHECK_NOTHROW(CholeskyFactor(TimeGrid(1.0, 256), Hurst(0.95)));
}

TEST_CASE("coarsen keeps the Brownian path", "[fbm]") {
    const PathSet fine = generate_mixed(TimeGrid(1.0, 32), Hurst(0.75), 1, 5, 77);
    const PathSet coarse = coarsen(fine, 4);
    CHECK(coarse.grid().n_steps() == 8);
    for (std::size_t p = 0; p < 5; ++p)
        for (std::size_t k = 0; k <= 8; ++k) CHECK(coarse.B(p, 0)[k] == Approx(fine.B(p, 0)[4 * k]).margin(1e-14));
    CHECK(coarse.has_bh());
}

TEST_CASE("path CSV export", "[fbm][io]") {
    const PathSet ps = generate_mixed(TimeGrid(1.0, 4), Hurst(0.75), 2, 3, 1);
    std::ostringstream os;
    write_paths_csv(os, ps);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    CHECK(line == "path,dim,node,t,B,BH");
    std::size_t rows = 0;
    while (std::getline(is, line)) ++rows;
    CHECK(rows == 3 * 2 * 5);
}
