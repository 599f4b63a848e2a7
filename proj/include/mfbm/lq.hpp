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

#pragma once

// Scalar linear-quadratic problem
//
//   dX = (A X + At u) dt + (M X + Mt u) dB + N X dB^H,   X(0) = x0
//   J(u) = 1/2 E[ int (Q X^2 + R u^2) dt + G X(T)^2 ]
//
// solved by damped Picard iteration on the first-order condition
// u = -R^{-1} (At p + Mt q), with a Riccati oracle for N = 0.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mfbm/adjoint.hpp"
#include "mfbm/core.hpp"
#include "mfbm/fbm.hpp"
#include "mfbm/rng.hpp"
#include "mfbm/sde.hpp"

namespace mfbm {

struct LqSpec {
    TimeFn A, At, M, Mt, N, Q, R;
    double G = 1.0, x0 = 1.0, T = 1.0;
    std::optional<Hurst> hurst;   // required when N is not identically zero
    bool independent_driver = false;  // M, Mt act on a Brownian motion independent of B^H

    static LqSpec constant(double a, double at, double m, double mt, double n, double q, double r, double g,
                           double x0 = 1.0, double t = 1.0) {
        const auto c = [](double v) -> TimeFn { return [v](double) { return v; }; };
        LqSpec s{c(a), c(at), c(m), c(mt), c(n), c(q), c(r)};
        s.G = g;
        s.x0 = x0;
        s.T = t;
        return s;
    }

    bool fractional(const TimeGrid& g) const {
        for (std::size_t k = 0; k < g.n_nodes(); ++k)
            if (N(g.node(k)) != 0.0) return true;
        return false;
    }

    /// Checks Q >= 0, R >= delta > 0 on the grid and G > 0; returns delta = min R.
    double validate(const TimeGrid& g) const {
        for (const TimeFn* f : {&A, &At, &M, &Mt, &N, &Q, &R})
            if (!*f) throw DomainError("LQ spec: coefficient function missing");
        if (!(T > 0.0) || std::fabs(g.horizon() - T) > 1e-12 * T) throw DomainError("LQ spec: grid horizon differs from T");
        if (!(G > 0.0)) throw DomainError("LQ spec: G must be positive");
        double delta = INFINITY;
        for (std::size_t k = 0; k < g.n_nodes(); ++k) {
            const double t = g.node(k);
            if (!(Q(t) >= 0.0)) throw DomainError("LQ spec: Q must be nonnegative at t = " + std::to_string(t));
            delta = std::min(delta, R(t));
        }
        if (!(delta > 0.0)) throw DomainError("LQ spec: R must be bounded below by a positive constant");
        if (fractional(g) && !hurst) throw DomainError("LQ spec: N != 0 needs a Hurst exponent");
        return delta;
    }
};

namespace detail {

inline TimeFn zero_fn() {
    return [](double) { return 0.0; };
}

}  // namespace detail

/// Stacked two-driver form of a one-driver model whose Brownian part is
/// driven by W independent of B: drivers (B, W), sigma = (0, sigma),
/// gamma = (gamma, 0).
inline CoefficientModel independent_bm_scenario(const CoefficientModel& one) {
    one.validate();
    if (one.drivers() != 1) throw DomainError("independent_bm_scenario: expects a one-driver model");
    CoefficientModel m = one;
    m.id = one.id + "+W";
    const CoefFn zero = [](double, double, double) { return 0.0; };
    m.sigma = {zero, one.sigma[0]};
    m.sigma_x = {zero, one.sigma_x[0]};
    m.sigma_u = {zero, one.sigma_u[0]};
    if (one.has_gamma()) {
        m.gamma = {one.gamma[0], zero};
        m.gamma_x = {one.gamma_x[0], zero};
        m.gamma_u = {one.gamma_u[0], zero};
    }
    return m;
}

inline CoefficientModel lq_model(const LqSpec& s, const TimeGrid& g) {
    std::vector<LinearCoefficients> gam;
    if (s.fractional(g)) gam.push_back({s.N, detail::zero_fn()});
    auto m = linear_model("lq", {s.A, s.At}, {{s.M, s.Mt}}, gam);
    return s.independent_driver ? independent_bm_scenario(m) : m;
}

inline CostModel lq_cost_model(const LqSpec& s) {
    CostModel c;
    auto q = s.Q, r = s.R;
    const double g = s.G;
    c.f_x = [q](double t, double x, double) { return q(t) * x; };
    c.f_xx = [q](double t, double, double) { return q(t); };
    c.f_u = [r](double t, double, double u) { return r(t) * u; };
    c.g_x = [g](double x) { return g * x; };
    c.g_xx = [g](double) { return g; };
    return c;
}

/// Driving paths for the LQ problem: one Brownian dimension, plus B^H from the
/// kernel when N != 0; two dimensions for the independent-driver form.
inline PathSet lq_paths(const LqSpec& s, const TimeGrid& g, std::size_t n_paths, std::uint64_t seed) {
    const std::size_t dims = s.independent_driver ? 2 : 1;
    if (s.fractional(g)) {
        if (!s.hurst) throw DomainError("LQ spec: N != 0 needs a Hurst exponent");
        return generate_mixed(g, *s.hurst, dims, n_paths, seed);
    }
    return generate_bm(g, dims, n_paths, seed);
}

// ---------------------------------------------------------------------------
// Cost

struct CostEstimate {
    double J = 0.0, stderr_ = 0.0;
    std::vector<double> per_path;
};

namespace detail {

inline std::vector<double> path_costs(const LqSpec& s, const StatePath& xs) {
    const TimeGrid& g = xs.grid;
    const std::size_t n = g.n_steps();
    std::vector<double> c(xs.n_paths);
    parallel_for(xs.n_paths, [&](std::size_t i) {
        double run = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double t = g.node(k), x = xs.at(i, k), u = xs.control(i, k);
            run += (s.Q(t) * x * x + s.R(t) * u * u) * g.dt();
        }
        const double xT = xs.at(i, n);
        c[i] = 0.5 * (run + s.G * xT * xT);
    });
    return c;
}

inline CostEstimate summarize_cost(std::vector<double> per_path) {
    const auto m = mean_estimate(per_path);
    return {m.mean, m.stderr_, std::move(per_path)};
}

}  // namespace detail

/// J = 1/2 mean over paths of [sum (Q X^2 + R u^2) dt + G X(T)^2].
inline CostEstimate lq_cost(const LqSpec& s, const ControlProcess& u, const PathSet& ps) {
    const auto m = lq_model(s, ps.grid());
    return detail::summarize_cost(detail::path_costs(s, euler_mixed(m, u, s.x0, ps)));
}

// ---------------------------------------------------------------------------
// Riccati oracle

namespace detail {

/// Integrates P' = -rhs(t, P) backward from P(T) = terminal with classical
/// RK4, `sub` substeps per grid cell; values at the grid nodes.
inline std::vector<double> rk4_backward(const std::function<double(double, double)>& rhs, double terminal,
                                        const TimeGrid& g, std::size_t sub) {
    const double h = g.dt() / static_cast<double>(sub);
    std::vector<double> out(g.n_nodes());
    double p = terminal;
    out.back() = p;
    // d/ds P(T - s) = rhs(T - s, P)
    for (std::size_t k = g.n_steps(); k-- > 0;) {
        for (std::size_t j = 0; j < sub; ++j) {
            const double t = g.node(k + 1) - static_cast<double>(j) * h;
            const double k1 = rhs(t, p);
            const double k2 = rhs(t - 0.5 * h, p + 0.5 * h * k1);
            const double k3 = rhs(t - 0.5 * h, p + 0.5 * h * k2);
            const double k4 = rhs(t - h, p + h * k3);
            p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!std::isfinite(p) || std::fabs(p) > 1e12) throw NumericalError("Riccati solution blew up");
        }
        out[k] = p;
    }
    return out;
}

}  // namespace detail

struct RiccatiSolution {
    TimeGrid grid;
    std::vector<double> P, K;  // at nodes; u = -K x
    double J = 0.0;

    ControlProcess feedback() const {
        auto k = std::make_shared<const std::vector<double>>(K);
        return ControlProcess::feedback([k](std::size_t i, double, double x) { return -(*k)[i] * x; },
                                        [k](std::size_t i, double, double) { return -(*k)[i]; }, "riccati");
    }
};

/// -P' = (2A + M^2) P + Q - (At P + Mt M P)^2 / (R + Mt^2 P),  P(T) = G,
/// K = (At P + Mt M P) / (R + Mt^2 P),  J = P(0) x0^2 / 2.
inline RiccatiSolution riccati_oracle(const LqSpec& s, const TimeGrid& g, std::size_t sub = 16) {
    if (s.fractional(g)) throw DomainError("Riccati oracle needs N = 0");
    const auto rhs = [&s](double t, double p) {
        const double a = s.A(t), at = s.At(t), m = s.M(t), mt = s.Mt(t);
        const double den = s.R(t) + mt * mt * p;
        if (!(den > 0.0)) throw NumericalError("Riccati: R + Mt^2 P not positive");
        const double num = at * p + mt * m * p;
        return (2.0 * a + m * m) * p + s.Q(t) - num * num / den;
    };
    RiccatiSolution sol{g, detail::rk4_backward(rhs, s.G, g, sub), {}, 0.0};
    sol.K.resize(g.n_nodes());
    for (std::size_t k = 0; k < g.n_nodes(); ++k) {
        const double t = g.node(k), p = sol.P[k], mt = s.Mt(t);
        sol.K[k] = (s.At(t) * p + mt * s.M(t) * p) / (s.R(t) + mt * mt * p);
    }
    sol.J = 0.5 * sol.P[0] * s.x0 * s.x0;
    return sol;
}

// ---------------------------------------------------------------------------
// Picard iteration

/// Feedback control polynomial in the state, one coefficient vector per node.
struct PolyControl {
    TimeGrid grid;
    std::vector<std::vector<double>> coef;

    static PolyControl constant(const TimeGrid& g, double c) { return {g, std::vector<std::vector<double>>(g.n_nodes(), {c})}; }

    double operator()(std::size_t k, double x) const {
        double s = 0.0;
        for (std::size_t d = coef[k].size(); d-- > 0;) s = s * x + coef[k][d];
        return s;
    }
    double dx(std::size_t k, double x) const {
        double s = 0.0;
        for (std::size_t d = coef[k].size(); d-- > 1;) s = s * x + static_cast<double>(d) * coef[k][d];
        return s;
    }
    ControlProcess process(std::string id = "poly") const {
        auto self = std::make_shared<const PolyControl>(*this);
        return ControlProcess::feedback([self](std::size_t k, double, double x) { return (*self)(k, x); },
                                        [self](std::size_t k, double, double x) { return self->dx(k, x); },
                                        std::move(id));
    }
};

struct PicardOptions {
    double damping = 0.5;
    std::size_t max_iterations = 50;
    double tol = 1e-3;
    std::size_t burn_in = 3;
    RegressionBasis basis{};
};

struct IterationRecord {
    std::size_t iteration = 0;
    double control_change = 0.0;  // mean L2 distance between successive controls
    double J = 0.0, J_stderr = 0.0;
};

struct LqSolution {
    PolyControl control;
    ControlProcess process;
    CoefficientModel model;
    StatePath xs;
    AdjointEstimate adjoint;
    CostEstimate cost;
    std::vector<IterationRecord> log;
    bool converged = false;
    bool monotone = true;  // control change non-increasing after burn-in
    double delta = 0.0;    // min R
};

namespace detail {

/// sqrt(mean over paths of sum_k (a - b)^2 dt) along the state paths.
inline double control_distance(const PolyControl& a, const PolyControl& b, const StatePath& xs) {
    const std::size_t n = xs.grid.n_steps();
    std::vector<double> d(xs.n_paths);
    parallel_for(xs.n_paths, [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double e = a(k, xs.at(i, k)) - b(k, xs.at(i, k));
            s += e * e * xs.grid.dt();
        }
        d[i] = s;
    });
    return std::sqrt(mean_estimate(d).mean);
}

struct PicardState {
    StatePath xs, phi, psi;
    AdjointEstimate est;
};

inline PicardState adjoint_under(const LqSpec& s, const CoefficientModel& m, const ControlProcess& u,
                                 const PathSet& ps, const CostModel& cost, const RegressionBasis& basis) {
    StatePath xs = euler_mixed(m, u, s.x0, ps);
    StatePath phi = fundamental_phi(m, xs, ps);
    StatePath psi = fundamental_psi(m, xs, ps);
    bool need_q = false;
    for (std::size_t j = 0; j < m.drivers(); ++j)
        for (std::size_t k = 0; k < ps.grid().n_nodes() && !need_q; ++k)
            need_q = m.sigma_u[j](ps.grid().node(k), 0.0, 0.0) != 0.0;
    const AdjointInputs in{m, xs, u, phi, psi, cost, ps, basis};
    AdjointEstimate est = estimate_adjoint(in, need_q);
    return {std::move(xs), std::move(phi), std::move(psi), std::move(est)};
}

/// -R^{-1} (b_u p + sum_j sigma_u^j q_j) as a polynomial per node, with p the
/// one-step-ahead estimate; the last node uses p(T) = G X(T).
inline PolyControl first_order_control(const LqSpec& s, const CoefficientModel& m, const AdjointEstimate& est) {
    const TimeGrid& g = est.grid;
    PolyControl out{g, std::vector<std::vector<double>>(g.n_nodes())};
    for (std::size_t k = 0; k < g.n_nodes(); ++k) {
        const double t = g.node(k);
        std::vector<double> c = k < g.n_steps() ? est.p_ahead_fit[k].coef : std::vector<double>{0.0, s.G};
        for (double& v : c) v *= m.b_u(t, 0.0, 0.0);
        if (est.has_q() && k < g.n_steps()) {
            for (std::size_t j = 0; j < m.drivers(); ++j) {
                const double su = m.sigma_u[j](t, 0.0, 0.0);
                if (su == 0.0) continue;
                const auto& qc = est.q_fit[j][k].coef;
                if (qc.size() > c.size()) c.resize(qc.size(), 0.0);
                for (std::size_t d = 0; d < qc.size(); ++d) c[d] += su * qc[d];
            }
        }
        for (double& v : c) v *= -1.0 / s.R(t);
        out.coef[k] = std::move(c);
    }
    return out;
}

inline PolyControl blend(const PolyControl& a, double wa, const PolyControl& b, double wb) {
    PolyControl out{a.grid, std::vector<std::vector<double>>(a.coef.size())};
    for (std::size_t k = 0; k < a.coef.size(); ++k) {
        std::vector<double> c(std::max(a.coef[k].size(), b.coef[k].size()), 0.0);
        for (std::size_t d = 0; d < a.coef[k].size(); ++d) c[d] += wa * a.coef[k][d];
        for (std::size_t d = 0; d < b.coef[k].size(); ++d) c[d] += wb * b.coef[k][d];
        out.coef[k] = std::move(c);
    }
    return out;
}

}  // namespace detail

/// Damped Picard iteration u <- (1 - theta) u + theta (-R^{-1} (At p + Mt q)),
/// from the constant control u0, on fixed paths.
inline LqSolution lq_picard_solve(const LqSpec& s, const PathSet& ps, const PicardOptions& opt = {}, double u0 = 0.0) {
    const TimeGrid& g = ps.grid();
    const double delta = s.validate(g);
    if (!(opt.damping > 0.0 && opt.damping <= 1.0)) throw DomainError("Picard damping must lie in (0, 1]");
    if (!(opt.tol > 0.0)) throw DomainError("Picard tolerance must be positive");
    const CoefficientModel m = lq_model(s, g);
    const CostModel cost = lq_cost_model(s);
    PolyControl u = PolyControl::constant(g, u0);
    std::vector<IterationRecord> log;
    bool converged = false, monotone = true;
    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
        const ControlProcess proc = u.process();
        auto st = detail::adjoint_under(s, m, proc, ps, cost, opt.basis);
        const auto J = detail::summarize_cost(detail::path_costs(s, st.xs));
        const PolyControl target = detail::first_order_control(s, m, st.est);
        PolyControl next = detail::blend(u, 1.0 - opt.damping, target, opt.damping);
        const double change = detail::control_distance(next, u, st.xs);
        if (log.size() >= opt.burn_in && change > log.back().control_change) monotone = false;
        log.push_back({it, change, J.J, J.stderr_});
        u = std::move(next);
        if (change < opt.tol) {
            converged = true;
            break;
        }
    }
    ControlProcess proc = u.process("picard");
    auto st = detail::adjoint_under(s, m, proc, ps, cost, opt.basis);
    auto J = detail::summarize_cost(detail::path_costs(s, st.xs));
    LqSolution sol{std::move(u), std::move(proc), m, std::move(st.xs), std::move(st.est), std::move(J),
                   std::move(log), converged && monotone, monotone, delta};
    return sol;
}

/// Control change of one further Picard step from the solution.
inline double picard_step_change(const LqSpec& s, const PathSet& ps, const LqSolution& sol, const PicardOptions& opt = {}) {
    const auto target = detail::first_order_control(s, sol.model, sol.adjoint);
    const auto next = detail::blend(sol.control, 1.0 - opt.damping, target, opt.damping);
    (void)ps;
    return detail::control_distance(next, sol.control, sol.xs);
}

/// Mean L2 distance between two feedback controls along the states of `along`.
inline double control_distance(const PolyControl& a, const PolyControl& b, const StatePath& along) {
    return detail::control_distance(a, b, along);
}

// ---------------------------------------------------------------------------
// Optimality and convexity

/// Open-loop form of a control: its realized values along its own state.
inline ControlProcess realized_control(const LqSpec& s, const ControlProcess& u, const PathSet& ps) {
    const auto xs = euler_mixed(lq_model(s, ps.grid()), u, s.x0, ps);
    return ControlProcess::table(ps.grid(), ps.n_paths(), xs.u, u.id + "@realized");
}

/// Random adapted directions v(t) = a + b t + c B(t) / sqrt(T), coefficients
/// standard normal from the seed; tabulated on the paths.
inline std::vector<ControlProcess> random_directions(const PathSet& ps, std::size_t count, std::uint64_t seed) {
    std::vector<ControlProcess> out;
    const rng::NormalStream z(seed, 0x5eed, 0);
    const double T = ps.grid().horizon();
    for (std::size_t i = 0; i < count; ++i) {
        const double a = z.at(3 * i), b = z.at(3 * i + 1), c = z.at(3 * i + 2);
        out.push_back(ControlProcess::adapted(
            ps, [=](const PathPrefix& pre) { return a + b * pre.t() / T + c * pre.B(0, pre.node()) / std::sqrt(T); },
            "dir" + std::to_string(i)));
    }
    return out;
}

struct SweepRow {
    std::size_t direction = 0;
    double epsilon = 0.0;
    double difference = 0.0, difference_stderr = 0.0;   // J(u + eps v) - J(u)
    double derivative = 0.0, derivative_stderr = 0.0;   // central difference in eps
    bool difference_ok = true, derivative_ok = true;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    bool passed() const {
        return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.difference_ok && r.derivative_ok; });
    }
};

/// J(u + eps v) - J(u) >= -3 stderr and |dJ/d eps| <= 3 stderr for each
/// direction and eps, with common random numbers. u is used in open-loop form.
inline SweepReport optimality_sweep(const LqSpec& s, const ControlProcess& u, const std::vector<ControlProcess>& dirs,
                                    const std::vector<double>& eps, const PathSet& ps) {
    const auto m = lq_model(s, ps.grid());
    const ControlProcess base = realized_control(s, u, ps);
    const auto costs = [&](const ControlProcess& c) { return detail::path_costs(s, euler_mixed(m, c, s.x0, ps)); };
    const auto j0 = costs(base);
    SweepReport rep;
    std::vector<double> d(ps.n_paths()), c(ps.n_paths());
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        for (double e : eps) {
            const auto jp = costs(combine(1.0, base, e, dirs[i]));
            const auto jm = costs(combine(1.0, base, -e, dirs[i]));
            for (std::size_t p = 0; p < ps.n_paths(); ++p) {
                d[p] = jp[p] - j0[p];
                c[p] = (jp[p] - jm[p]) / (2.0 * e);
            }
            const auto dm = mean_estimate(d), cm = mean_estimate(c);
            SweepRow row{i, e, dm.mean, dm.stderr_, cm.mean, cm.stderr_};
            row.difference_ok = dm.mean >= -3.0 * dm.stderr_;
            row.derivative_ok = std::fabs(cm.mean) <= 3.0 * cm.stderr_;
            rep.rows.push_back(row);
        }
    }
    return rep;
}

struct ConvexityReport {
    double J1 = 0.0, J2 = 0.0, J_mid = 0.0;
    double spread = 0.0;         // E int |u1 - u2|^2 dt
    double delta = 0.0;
    double slack = 0.0;          // J1 + J2 - 2 J_mid - delta/4 spread
    double slack_stderr = 0.0;
    double midpoint_error = 0.0; // max |X_mid - (X1 + X2)/2|
    bool holds = false;
};

/// J(u1) + J(u2) >= 2 J((u1 + u2)/2) + (delta/4) E int |u1 - u2|^2 dt,
/// delta = min R, up to 3 standard errors, with common random numbers.
inline ConvexityReport convexity_check(const LqSpec& s, const ControlProcess& u1, const ControlProcess& u2,
                                       const PathSet& ps) {
    const TimeGrid& g = ps.grid();
    const double delta = s.validate(g);
    const auto m = lq_model(s, g);
    const auto x1 = euler_mixed(m, u1, s.x0, ps);
    const auto x2 = euler_mixed(m, u2, s.x0, ps);
    std::vector<double> mid(x1.u.size());
    for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = 0.5 * (x1.u[i] + x2.u[i]);
    const auto xm = euler_mixed(m, ControlProcess::table(g, ps.n_paths(), mid, "mid"), s.x0, ps);
    const auto c1 = detail::path_costs(s, x1), c2 = detail::path_costs(s, x2), cm = detail::path_costs(s, xm);
    const std::size_t nn = g.n_nodes();
    std::vector<double> slack(ps.n_paths()), spread(ps.n_paths());
    ConvexityReport rep;
    rep.delta = delta;
    for (std::size_t p = 0; p < ps.n_paths(); ++p) {
        double sp = 0.0;
        for (std::size_t k = 0; k < g.n_steps(); ++k) {
            const double e = x1.control(p, k) - x2.control(p, k);
            sp += e * e * g.dt();
        }
        for (std::size_t k = 0; k < nn; ++k)
            rep.midpoint_error =
                std::max(rep.midpoint_error, std::fabs(xm.at(p, k) - 0.5 * (x1.at(p, k) + x2.at(p, k))));
        spread[p] = sp;
        slack[p] = c1[p] + c2[p] - 2.0 * cm[p] - 0.25 * delta * sp;
    }
    rep.J1 = mean_estimate(c1).mean;
    rep.J2 = mean_estimate(c2).mean;
    rep.J_mid = mean_estimate(cm).mean;
    rep.spread = mean_estimate(spread).mean;
    const auto sl = mean_estimate(slack);
    rep.slack = sl.mean;
    rep.slack_stderr = sl.stderr_;
    rep.holds = sl.mean >= -3.0 * sl.stderr_;
    return rep;
}

// ---------------------------------------------------------------------------
// Export

/// `iteration,control_change,J,J_stderr`
inline void write_iteration_csv(std::ostream& os, const std::vector<IterationRecord>& log) {
    os << "iteration,control_change,J,J_stderr\n";
    char buf[128];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", r.iteration, r.control_change, r.J, r.J_stderr);
        os << buf;
    }
}

/// `node,t,c0,c1,...` feedback polynomial coefficients.
inline void write_control_csv(std::ostream& os, const PolyControl& u) {
    std::size_t width = 0;
    for (const auto& c : u.coef) width = std::max(width, c.size());
    os << "node,t";
    for (std::size_t d = 0; d < width; ++d) os << ",c" << d;
    os << '\n';
    char buf[64];
    for (std::size_t k = 0; k < u.coef.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g", k, u.grid.node(k));
        os << buf;
        for (std::size_t d = 0; d < width; ++d) {
            std::snprintf(buf, sizeof buf, ",%.17g", d < u.coef[k].size() ? u.coef[k][d] : 0.0);
            os << buf;
        }
        os << '\n';
    }
}

/// `direction,epsilon,difference,difference_stderr,derivative,derivative_stderr,pass`
inline void write_sweep_csv(std::ostream& os, const SweepReport& rep) {
    os << "direction,epsilon,difference,difference_stderr,derivative,derivative_stderr,pass\n";
    char buf[192];
    for (const auto& r : rep.rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", r.direction, r.epsilon, r.difference,
                      r.difference_stderr, r.derivative, r.derivative_stderr, r.difference_ok && r.derivative_ok);
        os << buf;
    }
}

}  // namespace mfbm
