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

// Scalar controlled SDEs driven by m Brownian motions and the m fBms built
// from them:
//
//   dX = b dt + sum_j sigma_j dB_j + sum_j gamma_j o dB^H_j
//
// The fractional integral is the pathwise (Young) integral, discretized by
// left-point Riemann sums.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mfbm/core.hpp"
#include "mfbm/fbm.hpp"
#include "mfbm/transforms.hpp"

namespace mfbm {

using CoefFn = std::function<double(double t, double x, double u)>;
using TimeFn = std::function<double(double t)>;

inline constexpr double kBlowupThreshold = 1e8;

/// Coefficients b, sigma_j, gamma_j and their partials in state and control.
/// Empty gamma lists mean gamma = 0.
struct CoefficientModel {
    std::string id = "model";
    CoefFn b, b_x, b_u;
    std::vector<CoefFn> sigma, sigma_x, sigma_u;
    std::vector<CoefFn> gamma, gamma_x, gamma_u;
    double lipschitz = 1.0;   // declared bound L
    double holder = 1.0;      // declared Hoelder exponent of gamma in time
    bool linear_in_state = false;  // coefficients of the form a(t) x + c(t) u
    bool gamma_u_zero = true;      // declared gamma_u == 0

    std::size_t drivers() const noexcept { return sigma.size(); }
    bool has_gamma() const noexcept { return !gamma.empty(); }

    void validate() const {
        const std::size_t m = sigma.size();
        if (!b || !b_x || !b_u) throw DomainError(id + ": drift and its partials are required");
        if (m == 0) throw DomainError(id + ": at least one driver required");
        if (sigma_x.size() != m || sigma_u.size() != m) throw DomainError(id + ": sigma partials per driver");
        if (has_gamma() && (gamma.size() != m || gamma_x.size() != m || gamma_u.size() != m))
            throw DomainError(id + ": gamma and partials per driver");
        if (!(lipschitz > 0.0)) throw DomainError(id + ": Lipschitz bound must be positive");
        if (!(holder > 0.0 && holder <= 1.0)) throw DomainError(id + ": Hoelder exponent must lie in (0, 1]");
    }

    double sig(std::size_t j, double t, double x, double u) const { return sigma[j](t, x, u); }
    double gam(std::size_t j, double t, double x, double u) const { return has_gamma() ? gamma[j](t, x, u) : 0.0; }
    double gam_x(std::size_t j, double t, double x, double u) const {
        return has_gamma() ? gamma_x[j](t, x, u) : 0.0;
    }
    double gam_u(std::size_t j, double t, double x, double u) const {
        return has_gamma() ? gamma_u[j](t, x, u) : 0.0;
    }
    bool gamma_u_vanishes() const { return !has_gamma() || gamma_u_zero; }
};

/// Coefficients of a model linear in state and control.
struct LinearCoefficients {
    TimeFn a, c;  // coefficient = a(t) x + c(t) u
    static LinearCoefficients constant(double a, double c) {
        return {[a](double) { return a; }, [c](double) { return c; }};
    }
    bool zero_control(const TimeGrid& g) const {
        for (std::size_t k = 0; k < g.n_nodes(); ++k)
            if (c(g.node(k)) != 0.0) return false;
        return true;
    }
};

/// b = a_b x + c_b u, sigma_j = a_j x + c_j u, gamma_j = n_j x + e_j u.
inline CoefficientModel linear_model(std::string id, LinearCoefficients drift, std::vector<LinearCoefficients> sig,
                                     std::vector<LinearCoefficients> gam = {}) {
    CoefficientModel m;
    m.id = std::move(id);
    m.linear_in_state = true;
    auto value = [](LinearCoefficients lc) -> CoefFn {
        return [lc](double t, double x, double u) { return lc.a(t) * x + lc.c(t) * u; };
    };
    auto dx = [](LinearCoefficients lc) -> CoefFn { return [lc](double t, double, double) { return lc.a(t); }; };
    auto du = [](LinearCoefficients lc) -> CoefFn { return [lc](double t, double, double) { return lc.c(t); }; };
    m.b = value(drift);
    m.b_x = dx(drift);
    m.b_u = du(drift);
    double bound = std::fabs(drift.a(0.0)) + std::fabs(drift.c(0.0));
    for (const auto& s : sig) {
        m.sigma.push_back(value(s));
        m.sigma_x.push_back(dx(s));
        m.sigma_u.push_back(du(s));
        bound = std::max(bound, std::fabs(s.a(0.0)) + std::fabs(s.c(0.0)));
    }
    bool gu_zero = true;
    for (const auto& g : gam) {
        m.gamma.push_back(value(g));
        m.gamma_x.push_back(dx(g));
        m.gamma_u.push_back(du(g));
        gu_zero = gu_zero && g.c(0.0) == 0.0;
        bound = std::max(bound, std::fabs(g.a(0.0)) + std::fabs(g.c(0.0)));
    }
    m.gamma_u_zero = gu_zero;
    m.lipschitz = std::max(bound, 1e-12);
    return m;
}

/// b = sin x + u, sigma = cos x, gamma = 0.5 + 0.1 sin x.
inline CoefficientModel nonlinear_fixture() {
    CoefficientModel m;
    m.id = "nonlinear";
    m.b = [](double, double x, double u) { return std::sin(x) + u; };
    m.b_x = [](double, double x, double) { return std::cos(x); };
    m.b_u = [](double, double, double) { return 1.0; };
    m.sigma = {[](double, double x, double) { return std::cos(x); }};
    m.sigma_x = {[](double, double x, double) { return -std::sin(x); }};
    m.sigma_u = {[](double, double, double) { return 0.0; }};
    m.gamma = {[](double, double x, double) { return 0.5 + 0.1 * std::sin(x); }};
    m.gamma_x = {[](double, double x, double) { return 0.1 * std::cos(x); }};
    m.gamma_u = {[](double, double, double) { return 0.0; }};
    m.lipschitz = 1.0;
    m.holder = 1.0;
    return m;
}

/// b = -x + u, sigma = 0.2 x + 0.3 u, gamma = 0.3 x + 0.5 u.
inline CoefficientModel linear_fixture() {
    return linear_model("linear", LinearCoefficients::constant(-1.0, 1.0), {LinearCoefficients::constant(0.2, 0.3)},
                        {LinearCoefficients::constant(0.3, 0.5)});
}

struct PartialCheck {
    double max_error = 0.0;  // |fd - d| / max(1, |d|)
    std::string worst;
    bool passed(double tol = 1e-4) const { return max_error <= tol; }
};

/// Compares every declared partial with a central difference of its parent
/// at random (t, x, u).
inline PartialCheck check_partials(const CoefficientModel& m, double horizon, std::uint64_t seed,
                                   std::size_t samples = 64, double step = 1e-5) {
    m.validate();
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> ut(0.0, horizon), ux(-2.0, 2.0);
    PartialCheck out;
    auto probe = [&](const std::string& name, const CoefFn& f, const CoefFn& df, bool in_x, double t, double x,
                     double u) {
        const double fd = in_x ? (f(t, x + step, u) - f(t, x - step, u)) / (2.0 * step)
                               : (f(t, x, u + step) - f(t, x, u - step)) / (2.0 * step);
        const double d = df(t, x, u);
        const double err = std::fabs(fd - d) / std::max(1.0, std::fabs(d));
        if (err > out.max_error) {
            out.max_error = err;
            out.worst = name;
        }
    };
    for (std::size_t s = 0; s < samples; ++s) {
        const double t = ut(gen), x = ux(gen), u = ux(gen);
        probe("b_x", m.b, m.b_x, true, t, x, u);
        probe("b_u", m.b, m.b_u, false, t, x, u);
        for (std::size_t j = 0; j < m.drivers(); ++j) {
            const std::string tag = "[" + std::to_string(j) + "]";
            probe("sigma_x" + tag, m.sigma[j], m.sigma_x[j], true, t, x, u);
            probe("sigma_u" + tag, m.sigma[j], m.sigma_u[j], false, t, x, u);
            if (m.has_gamma()) {
                probe("gamma_x" + tag, m.gamma[j], m.gamma_x[j], true, t, x, u);
                probe("gamma_u" + tag, m.gamma[j], m.gamma_u[j], false, t, x, u);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Controls

/// Read-only view of one path up to node k. Adapted control callbacks only
/// see increments with step index < k.
class PathPrefix {
public:
    PathPrefix(const PathSet& ps, std::size_t p, std::size_t k) : ps_(ps), p_(p), k_(k) {}
    std::size_t node() const noexcept { return k_; }
    double t() const noexcept { return ps_.grid().node(k_); }
    double dB(std::size_t d, std::size_t i) const {
        if (i >= k_) throw DomainError("PathPrefix: increment beyond the current node");
        return ps_.dB(p_, d)[i];
    }
    double B(std::size_t d, std::size_t i) const {
        if (i > k_) throw DomainError("PathPrefix: node beyond the current node");
        return ps_.B(p_, d)[i];
    }
    double BH(std::size_t d, std::size_t i) const {
        if (i > k_) throw DomainError("PathPrefix: node beyond the current node");
        return ps_.BH(p_, d)[i];
    }

private:
    const PathSet& ps_;
    std::size_t p_, k_;
};

/// Linear combination of tabulated adapted controls and feedback laws
/// u(node, t, x). Feedback terms carry their state derivative.
class ControlProcess {
public:
    using Feedback = std::function<double(std::size_t node, double t, double x)>;

    static ControlProcess zero() { return constant(0.0); }

    static ControlProcess constant(double c) {
        ControlProcess out;
        out.id = "const(" + std::to_string(c) + ")";
        out.terms_.push_back({1.0, nullptr, 0, 0, [c](std::size_t, double, double) { return c; },
                              [](std::size_t, double, double) { return 0.0; }});
        return out;
    }

    static ControlProcess deterministic(const GridFunction& f, std::string id = "deterministic") {
        ControlProcess out;
        out.id = std::move(id);
        out.grid_ = f.grid;
        auto vals = std::make_shared<const std::vector<double>>(f.values);
        out.terms_.push_back({1.0, nullptr, 0, 0, [vals](std::size_t k, double, double) { return (*vals)[k]; },
                              [](std::size_t, double, double) { return 0.0; }});
        return out;
    }

    static ControlProcess feedback(Feedback u, Feedback u_x, std::string id = "feedback") {
        ControlProcess out;
        out.id = std::move(id);
        out.terms_.push_back({1.0, nullptr, 0, 0, std::move(u), std::move(u_x)});
        return out;
    }

    /// values[p * n_nodes + k]
    static ControlProcess table(const TimeGrid& g, std::size_t n_paths, std::vector<double> values,
                                std::string id = "table") {
        if (values.size() != n_paths * g.n_nodes()) throw GridMismatch("control table size");
        ControlProcess out;
        out.id = std::move(id);
        out.grid_ = g;
        out.terms_.push_back(
            {1.0, std::make_shared<const std::vector<double>>(std::move(values)), n_paths, g.n_nodes(), {}, {}});
        return out;
    }

    /// Tabulates fn(prefix) for every path and node.
    static ControlProcess adapted(const PathSet& ps, const std::function<double(const PathPrefix&)>& fn,
                                  std::string id = "adapted") {
        const std::size_t nn = ps.grid().n_nodes();
        std::vector<double> v(ps.n_paths() * nn);
        parallel_for(ps.n_paths(), [&](std::size_t p) {
            for (std::size_t k = 0; k < nn; ++k) v[p * nn + k] = fn(PathPrefix(ps, p, k));
        });
        return table(ps.grid(), ps.n_paths(), std::move(v), std::move(id));
    }

    friend ControlProcess combine(double a, const ControlProcess& u, double b, const ControlProcess& v) {
        if (u.grid_ && v.grid_ && !(*u.grid_ == *v.grid_)) throw GridMismatch("combine: control grids differ");
        ControlProcess out;
        out.id = std::to_string(a) + "*" + u.id + "+" + std::to_string(b) + "*" + v.id;
        out.grid_ = u.grid_ ? u.grid_ : v.grid_;
        for (Term t : u.terms_) {
            t.weight *= a;
            out.terms_.push_back(std::move(t));
        }
        for (Term t : v.terms_) {
            t.weight *= b;
            out.terms_.push_back(std::move(t));
        }
        return out;
    }

    double value(std::size_t p, std::size_t k, double t, double x) const {
        double s = 0.0;
        for (const Term& term : terms_) {
            if (term.weight == 0.0) continue;
            s += term.weight * (term.table ? (*term.table)[p * term.n_nodes + k] : term.fb(k, t, x));
        }
        return s;
    }

    /// d u / d x; zero for tabulated terms.
    double dx(std::size_t k, double t, double x) const {
        double s = 0.0;
        for (const Term& term : terms_)
            if (!term.table && term.weight != 0.0) s += term.weight * term.fb_x(k, t, x);
        return s;
    }

    bool has_feedback() const {
        return std::any_of(terms_.begin(), terms_.end(), [](const Term& t) { return !t.table; });
    }

    /// Throws unless tabulated terms cover every path and node of ps.
    void check(const PathSet& ps) const {
        if (grid_ && !(*grid_ == ps.grid())) throw GridMismatch("control grid differs from path grid: " + id);
        for (const Term& t : terms_)
            if (t.table && t.n_paths != ps.n_paths()) throw GridMismatch("control table path count: " + id);
    }

    std::string id;

private:
    struct Term {
        double weight;
        std::shared_ptr<const std::vector<double>> table;
        std::size_t n_paths, n_nodes;
        Feedback fb, fb_x;
    };
    std::vector<Term> terms_;
    std::optional<TimeGrid> grid_;
};

// ---------------------------------------------------------------------------
// State paths

struct StatePath {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::vector<double> x;  // x[p * n_nodes + k]
    std::vector<double> u;  // realized control, same layout; empty when not applicable
    std::string model_id, control_id;
    std::uint64_t seed = 0;
    std::size_t first_path = 0;

    StatePath(TimeGrid g, std::size_t n) : grid(g), n_paths(n), x(n * g.n_nodes(), 0.0) {}

    std::size_t n_nodes() const noexcept { return grid.n_nodes(); }
    std::span<double> X(std::size_t p) { return {x.data() + p * n_nodes(), n_nodes()}; }
    std::span<const double> X(std::size_t p) const { return {x.data() + p * n_nodes(), n_nodes()}; }
    double at(std::size_t p, std::size_t k) const { return x[p * n_nodes() + k]; }
    double control(std::size_t p, std::size_t k) const { return u[p * n_nodes() + k]; }

    /// Values at node k across paths.
    std::vector<double> column(std::size_t k) const {
        std::vector<double> c(n_paths);
        for (std::size_t p = 0; p < n_paths; ++p) c[p] = at(p, k);
        return c;
    }
};

inline void write_state_csv(std::ostream& os, const StatePath& s, bool header = true) {
    if (header) os << "path,node,t,X\n";
    char buf[64];
    for (std::size_t p = 0; p < s.n_paths; ++p)
        for (std::size_t k = 0; k < s.n_nodes(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", s.at(p, k));
            os << s.first_path + p << ',' << k << ',' << s.grid.node(k) << ',' << buf << '\n';
        }
}

namespace detail {

inline void guard(double v, const PathSet& ps, std::size_t p, std::size_t k) {
    if (!std::isfinite(v) || std::fabs(v) > kBlowupThreshold) throw BlowupError(ps.first_path() + p, k, v);
}

inline void require_paths(const CoefficientModel& m, const PathSet& ps) {
    m.validate();
    if (!ps.has_b()) throw DomainError("paths carry no Brownian increments");
    if (ps.dims() != m.drivers()) throw GridMismatch(m.id + ": driver count differs from path dimension");
    if (m.has_gamma() && !ps.has_bh()) throw DomainError(m.id + ": fractional term needs B^H on the paths");
}

inline StatePath make_state(const PathSet& ps, std::string model, std::string control) {
    StatePath s(ps.grid(), ps.n_paths());
    s.model_id = std::move(model);
    s.control_id = std::move(control);
    s.seed = ps.seed();
    s.first_path = ps.first_path();
    return s;
}

/// Runs x_{k+1} = step(p, k, x_k) for every path.
template <class Step>
void integrate(const PathSet& ps, double x0, StatePath& out, Step&& step) {
    const std::size_t n = ps.grid().n_steps(), nn = ps.grid().n_nodes();
    parallel_for(ps.n_paths(), [&](std::size_t p) {
        double* xp = out.x.data() + p * nn;
        xp[0] = x0;
        for (std::size_t k = 0; k < n; ++k) {
            xp[k + 1] = step(p, k, xp[k]);
            guard(xp[k + 1], ps, p, k);
        }
    });
}

}  // namespace detail

/// Euler scheme with left-point Ito and Young sums. Records the realized
/// control in the result.
inline StatePath euler_mixed(const CoefficientModel& m, const ControlProcess& u, double x0, const PathSet& ps) {
    detail::require_paths(m, ps);
    u.check(ps);
    const TimeGrid& g = ps.grid();
    const double dt = g.dt();
    const std::size_t md = m.drivers(), nn = g.n_nodes();
    StatePath out = detail::make_state(ps, m.id, u.id);
    out.u.assign(ps.n_paths() * nn, 0.0);
    auto step = [&](std::size_t p, std::size_t k, double x) {
        const double t = g.node(k);
        const double uk = u.value(p, k, t, x);
        out.u[p * nn + k] = uk;
        double next = x + m.b(t, x, uk) * dt;
        for (std::size_t j = 0; j < md; ++j) next += m.sigma[j](t, x, uk) * ps.dB(p, j)[k];
        if (m.has_gamma())
            for (std::size_t j = 0; j < md; ++j) next += m.gamma[j](t, x, uk) * ps.dBH(p, j, k);
        if (k + 1 == g.n_steps()) out.u[p * nn + k + 1] = u.value(p, k + 1, g.node(k + 1), next);
        return next;
    };
    detail::integrate(ps, x0, out, step);
    return out;
}

namespace detail {

inline void require_along(const StatePath& xs, const PathSet& ps) {
    require_same_grid(xs.grid, ps.grid(), "state path vs paths");
    if (xs.n_paths != ps.n_paths()) throw GridMismatch("state path count differs from paths");
    if (xs.u.empty()) throw DomainError("state path carries no realized control");
}

}  // namespace detail

/// Phi: dPhi = b_x Phi dt + sum sigma_x Phi dB + sum gamma_x Phi o dB^H, Phi(0) = 1,
/// with partials evaluated along (X*, u*).
inline StatePath fundamental_phi(const CoefficientModel& m, const StatePath& xs, const PathSet& ps) {
    detail::require_paths(m, ps);
    detail::require_along(xs, ps);
    const TimeGrid& g = ps.grid();
    const double dt = g.dt();
    auto step = [&](std::size_t p, std::size_t k, double phi) {
        const double t = g.node(k), x = xs.at(p, k), u = xs.control(p, k);
        double f = 1.0 + m.b_x(t, x, u) * dt;
        for (std::size_t j = 0; j < m.drivers(); ++j) {
            f += m.sigma_x[j](t, x, u) * ps.dB(p, j)[k];
            f += m.gam_x(j, t, x, u) * (m.has_gamma() ? ps.dBH(p, j, k) : 0.0);
        }
        return phi * f;
    };
    StatePath out = detail::make_state(ps, m.id, "Phi");
    detail::integrate(ps, 1.0, out, step);
    return out;
}

/// Psi: dPsi = (-b_x + sum sigma_x^2) Psi dt - sum sigma_x Psi dB - sum gamma_x Psi o dB^H.
inline StatePath fundamental_psi(const CoefficientModel& m, const StatePath& xs, const PathSet& ps) {
    detail::require_paths(m, ps);
    detail::require_along(xs, ps);
    const TimeGrid& g = ps.grid();
    const double dt = g.dt();
    auto step = [&](std::size_t p, std::size_t k, double psi) {
        const double t = g.node(k), x = xs.at(p, k), u = xs.control(p, k);
        double drift = -m.b_x(t, x, u);
        double f = 1.0;
        for (std::size_t j = 0; j < m.drivers(); ++j) {
            const double sx = m.sigma_x[j](t, x, u);
            drift += sx * sx;
            f -= sx * ps.dB(p, j)[k];
            f -= m.gam_x(j, t, x, u) * (m.has_gamma() ? ps.dBH(p, j, k) : 0.0);
        }
        return psi * (f + drift * dt);
    };
    StatePath out = detail::make_state(ps, m.id, "Psi");
    detail::integrate(ps, 1.0, out, step);
    return out;
}

/// Variation y for the perturbation direction v along (X*, u*).
inline StatePath variation_direct(const CoefficientModel& m, const StatePath& xs, const ControlProcess& v,
                                  const PathSet& ps) {
    detail::require_paths(m, ps);
    detail::require_along(xs, ps);
    v.check(ps);
    const TimeGrid& g = ps.grid();
    const double dt = g.dt();
    auto step = [&](std::size_t p, std::size_t k, double y) {
        const double t = g.node(k), x = xs.at(p, k), u = xs.control(p, k);
        const double vk = v.value(p, k, t, x);
        double next = y + (m.b_x(t, x, u) * y + m.b_u(t, x, u) * vk) * dt;
        for (std::size_t j = 0; j < m.drivers(); ++j) {
            next += (m.sigma_x[j](t, x, u) * y + m.sigma_u[j](t, x, u) * vk) * ps.dB(p, j)[k];
            if (m.has_gamma())
                next += (m.gamma_x[j](t, x, u) * y + m.gamma_u[j](t, x, u) * vk) * ps.dBH(p, j, k);
        }
        return next;
    };
    StatePath out = detail::make_state(ps, m.id, "y:" + v.id);
    detail::integrate(ps, 0.0, out, step);
    return out;
}

/// y(t) = Phi(t) [ int Psi (b_u - sum sigma_x sigma_u) v ds + sum int Psi sigma_u v dB
///                 + sum int Psi gamma_u v o dB^H ], left-point sums.
inline StatePath variation_explicit(const StatePath& phi, const StatePath& psi, const CoefficientModel& m,
                                    const StatePath& xs, const ControlProcess& v, const PathSet& ps) {
    detail::require_paths(m, ps);
    detail::require_along(xs, ps);
    require_same_grid(phi.grid, ps.grid(), "Phi vs paths");
    require_same_grid(psi.grid, ps.grid(), "Psi vs paths");
    if (phi.n_paths != ps.n_paths() || psi.n_paths != ps.n_paths()) throw GridMismatch("Phi/Psi path count");
    v.check(ps);
    const TimeGrid& g = ps.grid();
    const double dt = g.dt();
    const std::size_t n = g.n_steps(), nn = g.n_nodes();
    StatePath out = detail::make_state(ps, m.id, "y_explicit:" + v.id);
    parallel_for(ps.n_paths(), [&](std::size_t p) {
        double acc = 0.0;
        out.x[p * nn] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double t = g.node(k), x = xs.at(p, k), u = xs.control(p, k);
            const double vk = v.value(p, k, t, x);
            const double ps_k = psi.at(p, k);
            double drift = m.b_u(t, x, u);
            double inc = 0.0;
            for (std::size_t j = 0; j < m.drivers(); ++j) {
                const double su = m.sigma_u[j](t, x, u);
                drift -= m.sigma_x[j](t, x, u) * su;
                inc += ps_k * su * vk * ps.dB(p, j)[k];
                if (m.has_gamma()) inc += ps_k * m.gamma_u[j](t, x, u) * vk * ps.dBH(p, j, k);
            }
            acc += ps_k * drift * vk * dt + inc;
            out.x[p * nn + k + 1] = phi.at(p, k + 1) * acc;
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Discrete alpha-norm

/// |f(t)| + int_0^t |f(t) - f(s)| / (t - s)^{alpha + 1} ds with f linear per
/// cell and the weight integrated exactly. Weights depend only on the cell
/// offset, so they are precomputed once per grid.
class AlphaNorm {
public:
    AlphaNorm(TimeGrid g, double alpha) : grid_(g), alpha_(alpha) {
        if (!(alpha > 0.0 && alpha < 0.5)) throw DomainError("alpha must lie in (0, 1/2)");
        const std::size_t n = g.n_steps();
        const double scale = std::pow(g.dt(), -alpha);
        near_ = scale / (1.0 - alpha);
        m0_.assign(n + 1, 0.0);
        m1_.assign(n + 1, 0.0);
        // cell at offset d >= 2 spans [k - d, k - d + 1] in units of dt
        for (std::size_t d = 2; d <= n; ++d) {
            const auto pm = power_moments(0.0, 1.0, static_cast<double>(d), -alpha - 1.0);
            m0_[d] = pm.m0 * scale;
            m1_[d] = pm.m1 * scale;
        }
    }

    double alpha() const noexcept { return alpha_; }

    /// Norm at every node.
    std::vector<double> evaluate(std::span<const double> f) const {
        if (f.size() != grid_.n_nodes()) throw GridMismatch("alpha norm: one value per node required");
        std::vector<double> out(f.size());
        for (std::size_t k = 0; k < f.size(); ++k) out[k] = at(f, k);
        return out;
    }

    double at(std::span<const double> f, std::size_t k) const {
        double s = std::fabs(f[k]);
        if (k == 0) return s;
        // adjacent cell: |f(t) - f(s)| vanishes linearly at s = t
        s += std::fabs(f[k] - f[k - 1]) * near_;
        for (std::size_t i = 0; i + 1 < k; ++i) {
            const std::size_t d = k - i;
            const double ga = std::fabs(f[k] - f[i]), gb = std::fabs(f[k] - f[i + 1]);
            s += m0_[d] * ga + m1_[d] * (gb - ga);
        }
        return s;
    }

    /// sup over nodes.
    double sup(std::span<const double> f) const {
        double s = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) s = std::max(s, at(f, k));
        return s;
    }

private:
    TimeGrid grid_;
    double alpha_;
    double near_ = 0.0;
    std::vector<double> m0_, m1_;
};

inline std::vector<double> discrete_alpha_norm(std::span<const double> f, const TimeGrid& g, double alpha) {
    return AlphaNorm(g, alpha).evaluate(f);
}

inline double default_alpha(Hurst h) { return 1.0 - h.value() + 0.4 * (h.value() - 0.5); }

// ---------------------------------------------------------------------------
// Linearization remainder experiment

struct ExperimentRow {
    double epsilon;
    std::string metric;
    double value;
    double stderr_;
};

inline void write_experiment_csv(std::ostream& os, const std::vector<ExperimentRow>& rows, bool header = true) {
    if (header) os << "epsilon,metric,value,stderr\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g\n", r.epsilon, r.metric.c_str(), r.value, r.stderr_);
        os << buf;
    }
}

/// For each eps: X~ = (X^eps - X*) / eps - y with X^eps driven by u* + eps v.
/// Metrics: terminal_l2 = E|X~(T)|^2, sup_l2 = E sup|X~|^2, alpha_l2 = E sup ||X~||_alpha^2.
inline std::vector<ExperimentRow> lemma1_experiment(const CoefficientModel& m, const ControlProcess& ustar,
                                                    const ControlProcess& v, double x0,
                                                    const std::vector<double>& epsilons, const PathSet& ps,
                                                    double alpha) {
    for (double e : epsilons)
        if (!(e > 0.0 && e < 1.0)) throw DomainError("lemma1_experiment: epsilon must lie in (0, 1)");
    const StatePath xs = euler_mixed(m, ustar, x0, ps);
    const StatePath y = variation_direct(m, xs, v, ps);
    const AlphaNorm norm(ps.grid(), alpha);
    const std::size_t np = ps.n_paths(), nn = ps.grid().n_nodes();
    std::vector<ExperimentRow> rows;
    for (double eps : epsilons) {
        const StatePath xe = euler_mixed(m, combine(1.0, ustar, eps, v), x0, ps);
        std::vector<double> term(np), sup(np), alpha_sup(np);
        parallel_for(np, [&](std::size_t p) {
            std::vector<double> r(nn);
            double s = 0.0;
            for (std::size_t k = 0; k < nn; ++k) {
                r[k] = (xe.at(p, k) - xs.at(p, k)) / eps - y.at(p, k);
                s = std::max(s, r[k] * r[k]);
            }
            term[p] = r.back() * r.back();
            sup[p] = s;
            const double a = norm.sup(r);
            alpha_sup[p] = a * a;
        });
        const auto t = mean_estimate(term), s = mean_estimate(sup), a = mean_estimate(alpha_sup);
        rows.push_back({eps, "terminal_l2", t.mean, t.stderr_});
        rows.push_back({eps, "sup_l2", s.mean, s.stderr_});
        rows.push_back({eps, "alpha_l2", a.mean, a.stderr_});
    }
    return rows;
}

}  // namespace mfbm
