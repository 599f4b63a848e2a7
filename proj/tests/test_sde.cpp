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

// Unit tests for the sde module.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "mfbm/sde.hpp"

using namespace mfbm;
using Catch::Approx;

namespace {

CoefficientModel zero_model() {
    return linear_model("zero", LinearCoefficients::constant(0.0, 0.0), {LinearCoefficients::constant(0.0, 0.0)},
                        {LinearCoefficients::constant(0.0, 0.0)});
}

CoefficientModel mixed_linear() {
    return linear_model("mixed", LinearCoefficients::constant(-1.0, 1.0), {LinearCoefficients::constant(0.2, 0.3)},
                        {LinearCoefficients::constant(0.3, 0.5)});
}

double mean_sq(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("partial derivatives agree with finite differences", "[model]") {
    CHECK(check_partials(mixed_linear(), 1.0, 3).passed());
    CHECK(check_partials(nonlinear_fixture(), 1.0, 3).passed());
    auto bad = nonlinear_fixture();
    bad.sigma_x[0] = [](double, double x, double) { return std::sin(x); };
    const auto r = check_partials(bad, 1.0, 3);
    CHECK_FALSE(r.passed());
    CHECK(r.worst == "sigma_x[0]");
}

TEST_CASE("model validation", "[model]") {
    auto m = mixed_linear();
    m.lipschitz = 0.0;
    CHECK_THROWS_AS(m.validate(), DomainError);
    auto g = mixed_linear();
    g.gamma_x.clear();
    CHECK_THROWS_AS(g.validate(), DomainError);
    const auto paths = generate_bm(TimeGrid(1.0, 8), 1, 4, 1);
    CHECK_THROWS_AS(euler_mixed(mixed_linear(), ControlProcess::zero(), 1.0, paths), DomainError);
    const auto two = generate_mixed(TimeGrid(1.0, 8), Hurst(0.7), 2, 4, 1);
    CHECK_THROWS_AS(euler_mixed(mixed_linear(), ControlProcess::zero(), 1.0, two), GridMismatch);
}

TEST_CASE("euler: trivial dynamics", "[euler]") {
    const TimeGrid g(1.0, 64);
    const auto paths = generate_mixed(g, Hurst(0.75), 1, 16, 5);
    const auto xs = euler_mixed(zero_model(), ControlProcess::zero(), 1.5, paths);
    for (double x : xs.x) CHECK(x == 1.5);

    auto drift = zero_model();
    drift.b = [](double, double, double) { return 1.0; };
    const auto xd = euler_mixed(drift, ControlProcess::zero(), 0.25, paths);
    for (std::size_t p = 0; p < xd.n_paths; ++p)
        for (std::size_t k = 0; k < g.n_nodes(); ++k) CHECK(xd.at(p, k) == Approx(0.25 + g.node(k)).epsilon(1e-14));
    CHECK(xd.model_id == "zero");
    CHECK(xd.seed == 5);
}

TEST_CASE("euler: realized control is recorded", "[euler]") {
    const TimeGrid g(1.0, 16);
    const auto paths = generate_mixed(g, Hurst(0.75), 1, 8, 5);
    const auto fb = ControlProcess::feedback([](std::size_t, double, double x) { return -0.5 * x; },
                                             [](std::size_t, double, double) { return -0.5; });
    const auto xs = euler_mixed(mixed_linear(), fb, 1.0, paths);
    for (std::size_t p = 0; p < xs.n_paths; ++p)
        for (std::size_t k = 0; k < g.n_nodes(); ++k) CHECK(xs.control(p, k) == -0.5 * xs.at(p, k));
}

TEST_CASE("euler: gamma = 0 reproduces Euler-Maruyama bit for bit", "[euler]") {
    const TimeGrid g(1.0, 128);
    const auto paths = generate_mixed(g, Hurst(0.75), 1, 64, 21);
    auto m = nonlinear_fixture();
    m.gamma.clear();
    m.gamma_x.clear();
    m.gamma_u.clear();
    const auto u = ControlProcess::constant(0.3);
    const auto xs = euler_mixed(m, u, 0.7, paths);
    for (std::size_t p = 0; p < paths.n_paths(); ++p) {
        double x = 0.7;
        const auto db = paths.dB(p, 0);
        for (std::size_t k = 0; k < g.n_steps(); ++k) {
            x = x + (std::sin(x) + 0.3) * g.dt() + std::cos(x) * db[k];
            REQUIRE(xs.at(p, k + 1) == x);
        }
    }
}

TEST_CASE("euler: pathwise exponential of the fBm", "[euler][refinement]") {
    const double c = 0.8;
    auto m = zero_model();
    m.gamma = {[c](double, double x, double) { return c * x; }};
    const auto fine = generate_mixed(TimeGrid(1.0, 2048), Hurst(0.75), 1, 400, 8);
    double prev = 1e9;
    for (std::size_t factor : {8u, 4u, 2u, 1u}) {
        const auto ps = coarsen(fine, factor);
        const auto xs = euler_mixed(m, ControlProcess::zero(), 1.0, ps);
        std::vector<double> err(ps.n_paths());
        for (std::size_t p = 0; p < ps.n_paths(); ++p) {
            const double exact = std::exp(c * ps.BH(p, 0).back());
            err[p] = (xs.X(p).back() - exact) / exact;
        }
        const double e = std::sqrt(mean_sq(err));
        INFO("steps " << ps.grid().n_steps() << " rms rel err " << e);
        CHECK(e < prev);
        prev = e;
    }
    CHECK(prev < 0.05);
}

TEST_CASE("euler: blowup guard", "[euler]") {
    auto m = zero_model();
    m.b = [](double, double, double) { return 1e10; };
    const auto paths = generate_mixed(TimeGrid(1.0, 4), Hurst(0.75), 1, 3, 1, 10);
    try {
        euler_mixed(m, ControlProcess::zero(), 0.0, paths);
        FAIL("expected blowup");
    } catch (const BlowupError& e) {
        CHECK(e.path_index == 10);
        CHECK(e.step_index == 0);
    }
}

TEST_CASE("fundamental solutions", "[fundamental]") {
    const auto fine = generate_mixed(TimeGrid(1.0, 2048), Hurst(0.75), 1, 400, 17);
    SECTION("zero coefficients") {
        const auto ps = coarsen(fine, 16);
        const auto xs = euler_mixed(zero_model(), ControlProcess::zero(), 1.0, ps);
        for (double v : fundamental_phi(zero_model(), xs, ps).x) CHECK(v == 1.0);
        for (double v : fundamental_psi(zero_model(), xs, ps).x) CHECK(v == 1.0);
    }
    SECTION("Ito exponential and its reciprocal") {
        const double c = 0.6;
        const auto m = linear_model("ito", LinearCoefficients::constant(0.0, 0.0),
                                    {LinearCoefficients::constant(c, 0.0)});
        double prev_phi = 1e9, prev_psi = 1e9;
        for (std::size_t factor : {8u, 4u, 2u, 1u}) {
            const auto ps = coarsen(fine, factor);
            const auto xs = euler_mixed(m, ControlProcess::zero(), 1.0, ps);
            const auto phi = fundamental_phi(m, xs, ps), psi = fundamental_psi(m, xs, ps);
            std::vector<double> ephi(ps.n_paths()), epsi(ps.n_paths());
            for (std::size_t p = 0; p < ps.n_paths(); ++p) {
                const double b = ps.B(p, 0).back();
                ephi[p] = phi.X(p).back() - std::exp(c * b - 0.5 * c * c);
                epsi[p] = psi.X(p).back() - std::exp(-c * b + 0.5 * c * c);
            }
            const double a = std::sqrt(mean_sq(ephi)), b = std::sqrt(mean_sq(epsi));
            INFO("steps " << ps.grid().n_steps() << " phi " << a << " psi " << b);
            CHECK(a < prev_phi);
            CHECK(b < prev_psi);
            prev_phi = a;
            prev_psi = b;
        }
    }
    SECTION("pathwise exponential") {
        const double c = 0.5;
        const auto m = linear_model("young", LinearCoefficients::constant(0.0, 0.0),
                                    {LinearCoefficients::constant(0.0, 0.0)}, {LinearCoefficients::constant(c, 0.0)});
        double prev = 1e9;
        for (std::size_t factor : {8u, 4u, 2u, 1u}) {
            const auto ps = coarsen(fine, factor);
            const auto xs = euler_mixed(m, ControlProcess::zero(), 1.0, ps);
            const auto phi = fundamental_phi(m, xs, ps);
            std::vector<double> e(ps.n_paths());
            for (std::size_t p = 0; p < ps.n_paths(); ++p) e[p] = phi.X(p).back() - std::exp(c * ps.BH(p, 0).back());
            const double r = std::sqrt(mean_sq(e));
            CHECK(r < prev);
            prev = r;
        }
    }
    SECTION("product Phi Psi tends to one") {
        double prev = 1e9;
        for (std::size_t factor : {8u, 4u, 2u, 1u}) {
            const auto ps = coarsen(fine, factor);
            const auto xs = euler_mixed(mixed_linear(), ControlProcess::zero(), 1.0, ps);
            const auto phi = fundamental_phi(mixed_linear(), xs, ps), psi = fundamental_psi(mixed_linear(), xs, ps);
            double worst = 0.0;
            for (std::size_t i = 0; i < phi.x.size(); ++i) worst = std::max(worst, std::fabs(phi.x[i] * psi.x[i] - 1.0));
            CHECK(worst < prev);
            prev = worst;
        }
    }
}

TEST_CASE("variation processes", "[variation]") {
    const TimeGrid g(1.0, 128);
    const auto paths = generate_mixed(g, Hurst(0.75), 1, 200, 4);
    const auto m = mixed_linear();
    const auto xs = euler_mixed(m, ControlProcess::zero(), 1.0, paths);
    const auto phi = fundamental_phi(m, xs, paths), psi = fundamental_psi(m, xs, paths);

    SECTION("zero direction") {
        for (double v : variation_direct(m, xs, ControlProcess::zero(), paths).x) CHECK(v == 0.0);
        for (double v : variation_explicit(phi, psi, m, xs, ControlProcess::zero(), paths).x) CHECK(v == 0.0);
    }
    SECTION("pure control drift integrates v") {
        const auto bu = linear_model("bu", LinearCoefficients::constant(0.0, 1.0),
                                     {LinearCoefficients::constant(0.0, 0.0)});
        const auto xb = euler_mixed(bu, ControlProcess::zero(), 0.0, paths);
        const auto v = ControlProcess::deterministic(GridFunction::sample(g, [](double t) { return std::cos(t); }));
        const auto y = variation_direct(bu, xb, v, paths);
        double acc = 0.0;
        for (std::size_t k = 0; k < g.n_steps(); ++k) {
            acc += std::cos(g.node(k)) * g.dt();
            CHECK(y.at(3, k + 1) == Approx(acc).epsilon(1e-13));
        }
    }
    SECTION("deterministic linear ODE") {
        // y' = a y + v, v = 1: y(t) = (e^{a t} - 1) / a
        const double a = -0.7;
        const auto ode = linear_model("ode", LinearCoefficients::constant(a, 1.0),
                                      {LinearCoefficients::constant(0.0, 0.0)});
        const auto xo = euler_mixed(ode, ControlProcess::zero(), 1.0, paths);
        const auto pho = fundamental_phi(ode, xo, paths), pso = fundamental_psi(ode, xo, paths);
        const auto y = variation_explicit(pho, pso, ode, xo, ControlProcess::constant(1.0), paths);
        const auto yd = variation_direct(ode, xo, ControlProcess::constant(1.0), paths);
        CHECK(y.X(0).back() == Approx((std::exp(a) - 1.0) / a).epsilon(1e-2));
        CHECK(yd.X(0).back() == Approx((std::exp(a) - 1.0) / a).epsilon(1e-2));
    }
    SECTION("direct and explicit agree under refinement") {
        const auto fine = generate_mixed(TimeGrid(1.0, 1024), Hurst(0.75), 1, 300, 9);
        const auto v = ControlProcess::constant(1.0);
        double prev = 1e9;
        for (std::size_t factor : {4u, 2u, 1u}) {
            const auto ps = coarsen(fine, factor);
            const auto x = euler_mixed(m, ControlProcess::zero(), 1.0, ps);
            const auto yd = variation_direct(m, x, v, ps);
            const auto ye = variation_explicit(fundamental_phi(m, x, ps), fundamental_psi(m, x, ps), m, x, v, ps);
            std::vector<double> gap(ps.n_paths());
            for (std::size_t p = 0; p < ps.n_paths(); ++p) gap[p] = yd.X(p).back() - ye.X(p).back();
            const double ms = mean_sq(gap);
            INFO("steps " << ps.grid().n_steps() << " gap " << ms);
            CHECK(ms < prev);
            prev = ms;
        }
    }
}

TEST_CASE("controls", "[control]") {
    const TimeGrid g(1.0, 8);
    const auto paths = generate_mixed(g, Hurst(0.75), 1, 3, 2);
    const auto u = ControlProcess::adapted(paths, [](const PathPrefix& pre) { return pre.B(0, pre.node()); });
    CHECK(u.value(1, 4, 0.5, 0.0) == paths.B(1, 0)[4]);
    CHECK_THROWS_AS(ControlProcess::adapted(paths, [](const PathPrefix& pre) { return pre.dB(0, pre.node()); }),
                    DomainError);
    const auto fb = ControlProcess::feedback([](std::size_t, double, double x) { return x * x; },
                                             [](std::size_t, double, double x) { return 2.0 * x; });
    const auto c = combine(2.0, fb, -1.0, u);
    CHECK(c.value(1, 4, 0.5, 3.0) == Approx(18.0 - paths.B(1, 0)[4]));
    CHECK(c.dx(4, 0.5, 3.0) == Approx(12.0));
    CHECK(c.has_feedback());
    CHECK_THROWS_AS(u.check(generate_mixed(g, Hurst(0.75), 1, 5, 2)), GridMismatch);
}

TEST_CASE("discrete alpha norm", "[alpha]") {
    const TimeGrid g(1.0, 256);
    const double alpha = 0.3;
    std::vector<double> c(g.n_nodes(), -2.0);
    for (double v : discrete_alpha_norm(c, g, alpha)) CHECK(v == Approx(2.0));
    std::vector<double> lin(g.n_nodes());
    for (std::size_t k = 0; k < lin.size(); ++k) lin[k] = g.node(k);
    const auto n = discrete_alpha_norm(lin, g, alpha);
    for (std::size_t k = 0; k < lin.size(); k += 17) {
        const double t = g.node(k);
        CHECK(n[k] == Approx(t + std::pow(t, 1.0 - alpha) / (1.0 - alpha)).epsilon(1e-12));
    }
    std::vector<double> mono(g.n_nodes());
    for (std::size_t k = 0; k < mono.size(); ++k) mono[k] = g.node(k) * g.node(k) + std::sin(g.node(k));
    const auto nm = discrete_alpha_norm(mono, g, alpha);
    for (std::size_t k = 1; k < nm.size(); ++k) CHECK(nm[k] >= nm[k - 1]);
    CHECK_THROWS_AS(discrete_alpha_norm(lin, g, 0.5), DomainError);
    CHECK_THROWS_AS(discrete_alpha_norm(lin, g, 0.0), DomainError);
    CHECK(default_alpha(Hurst(0.75)) == Approx(0.35));
}

TEST_CASE("linearization remainder experiment", "[lemma1]") {
    const TimeGrid g(1.0, 128);
    const Hurst h(0.75);
    const auto paths = generate_mixed(g, h, 1, 2000, 31);
    const std::vector<double> eps{0.2, 0.1, 0.05, 0.025};
    const auto metric = [](const std::vector<ExperimentRow>& rows, const std::string& name) {
        std::vector<double> v;
        for (const auto& r : rows)
            if (r.metric == name) v.push_back(r.value);
        return v;
    };
    SECTION("zero direction") {
        const auto rows = lemma1_experiment(nonlinear_fixture(), ControlProcess::zero(), ControlProcess::zero(), 0.5,
                                            eps, paths, default_alpha(h));
        for (const auto& r : rows) CHECK(r.value == 0.0);
    }
    SECTION("linear model has no remainder") {
        const auto rows = lemma1_experiment(mixed_linear(), ControlProcess::zero(), ControlProcess::constant(1.0), 1.0,
                                            eps, paths, default_alpha(h));
        for (const auto& r : rows) CHECK(r.value < 1e-20);
    }
    SECTION("nonlinear remainder decays like eps^2") {
        const auto rows = lemma1_experiment(nonlinear_fixture(), ControlProcess::zero(), ControlProcess::constant(1.0),
                                            0.5, eps, paths, default_alpha(h));
        for (const std::string name : {"terminal_l2", "sup_l2", "alpha_l2"}) {
            const auto v = metric(rows, name);
            REQUIRE(v.size() == 4);
            for (std::size_t i = 1; i < v.size(); ++i) {
                INFO(name << " ratio " << v[i - 1] / v[i]);
                CHECK(v[i] < v[i - 1]);
                CHECK(v[i - 1] / v[i] == Approx(4.0).margin(1.5));
            }
        }
        std::ostringstream os;
        write_experiment_csv(os, rows);
        CHECK(os.str().rfind("epsilon,metric,value,stderr\n0.20000000000000001,terminal_l2,", 0) == 0);
    }
    CHECK_THROWS_AS(lemma1_experiment(nonlinear_fixture(), ControlProcess::zero(), ControlProcess::zero(), 0.5, {1.5},
                                      paths, 0.3),
                    DomainError);
}

TEST_CASE("state path export", "[csv]") {
    const auto paths = generate_mixed(TimeGrid(1.0, 4), Hurst(0.75), 1, 2, 1, 7);
    const auto xs = euler_mixed(mixed_linear(), ControlProcess::zero(), 1.0, paths);
    std::ostringstream os;
    write_state_csv(os, xs);
    const std::string s = os.str();
    CHECK(s.rfind("path,node,t,X\n7,0,0,1\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 2 * 5);
}
