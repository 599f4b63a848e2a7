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

// Adjoint pair (p, q) from its representation through the fundamental
// solutions, with conditional expectations estimated by cross-sectional
// least squares on polynomials of the state:
//
//   p(t_k) = E[ Psi(t_k) ( sum_{s >= k} f_x Phi(t_s) dt + g_x(X(T)) Phi(T) ) | X(t_k) ]
//   q(t_k) = E[ d p(t_{k+1}) / d dB(t_k) | X(t_k) ]
//
// Sums are left Riemann sums, matching the discretized cost, and Psi is by
// default the exact reciprocal of the discrete Phi, so the first-order
// condition built from (p, q) is the exact gradient of the discrete cost.
// The derivative in q is the exact derivative of the scheme with respect to
// one Brownian increment, i.e. the discrete Malliavin derivative.
// Standard errors of path means use the regression targets (the fit
// preserves sample means), so they carry the full sampling noise.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mfbm/core.hpp"
#include "mfbm/fbm.hpp"
#include "mfbm/sde.hpp"

namespace mfbm {

/// Running cost f(t, x, u) and terminal cost g(x), through the partials the
/// adjoint needs. f_x is assumed independent of u.
struct CostModel {
    CoefFn f_x, f_xx, f_u;
    std::function<double(double)> g_x, g_xx;
};

struct RegressionBasis {
    std::size_t degree = 2;
    double ridge = 1e-8;  // relative to the mean diagonal of the normal matrix
};

/// Least-squares polynomial in the state at one node, stored in raw monomials.
struct NodeFit {
    std::vector<double> coef{0.0};
    std::vector<double> cov;  // sandwich covariance of coef, row-major; empty when not estimated
    double condition = 1.0;

    double operator()(double x) const {
        double s = 0.0;
        for (std::size_t d = coef.size(); d-- > 0;) s = s * x + coef[d];
        return s;
    }
    double derivative(double x) const {
        double s = 0.0;
        for (std::size_t d = coef.size(); d-- > 1;) s = s * x + static_cast<double>(d) * coef[d];
        return s;
    }
};

/// Regresses y on 1, z, ..., z^degree with z the standardized state; the
/// intercept is not penalized, so fitted values keep the sample mean of y.
inline NodeFit fit_node(std::span<const double> x, std::span<const double> y, const RegressionBasis& basis) {
    if (x.size() != y.size() || x.empty()) throw std::invalid_argument("fit_node: size mismatch");
    if (basis.degree < 1) throw DomainError("regression degree must be at least 1");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double vx = 0.0;
    for (double v : x) vx += (v - mx) * (v - mx);
    const double sx = std::sqrt(vx / n);
    NodeFit fit;
    if (!(sx > 1e-12 * std::max(1.0, std::fabs(mx)))) {
        fit.coef = {my};
        return fit;
    }
    const std::size_t d1 = basis.degree + 1;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d1, d1);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d1);
    std::vector<double> pw(d1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = (x[i] - mx) / sx;
        pw[0] = 1.0;
        for (std::size_t d = 1; d < d1; ++d) pw[d] = pw[d - 1] * z;
        for (std::size_t r = 0; r < d1; ++r) {
            rhs(r) += pw[r] * y[i];
            for (std::size_t c = 0; c <= r; ++c) a(r, c) += pw[r] * pw[c];
        }
    }
    for (std::size_t r = 0; r < d1; ++r)
        for (std::size_t c = r + 1; c < d1; ++c) a(r, c) = a(c, r);
    a /= n;
    rhs /= n;
    const double lambda = basis.ridge * a.trace() / static_cast<double>(d1);
    for (std::size_t d = 1; d < d1; ++d) a(d, d) += lambda;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
    fit.condition = lo > 0.0 ? hi / lo : INFINITY;
    const Eigen::VectorXd beta = a.ldlt().solve(rhs);
    if (!beta.allFinite()) throw NumericalError("regression failed: condition number " + std::to_string(fit.condition));
    // heteroskedasticity-robust covariance A^-1 S A^-1 / n
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(d1, d1);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double z = (x[i] - mx) / sx;
        pw[0] = 1.0;
        for (std::size_t d = 1; d < d1; ++d) pw[d] = pw[d - 1] * z;
        double e = y[i];
        for (std::size_t d = 0; d < d1; ++d) e -= beta(d) * pw[d];
        for (std::size_t r = 0; r < d1; ++r)
            for (std::size_t c = 0; c < d1; ++c) meat(r, c) += e * e * pw[r] * pw[c];
    }
    const Eigen::MatrixXd ainv = a.ldlt().solve(Eigen::MatrixXd::Identity(d1, d1));
    const Eigen::MatrixXd cov_beta = ainv * (meat / n) * ainv / n;
    // expand sum_d beta_d ((x - mx) / sx)^d into powers of x: coef = T beta
    Eigen::MatrixXd tr = Eigen::MatrixXd::Zero(d1, d1);
    for (std::size_t d = 0; d < d1; ++d) {
        const double scale = 1.0 / std::pow(sx, static_cast<double>(d));
        double binom = 1.0;
        for (std::size_t e = 0; e <= d; ++e) {
            tr(e, d) += scale * binom * std::pow(-mx, static_cast<double>(d - e));
            binom = binom * static_cast<double>(d - e) / static_cast<double>(e + 1);
        }
    }
    const Eigen::VectorXd raw = tr * beta;
    const Eigen::MatrixXd cov_raw = tr * cov_beta * tr.transpose();
    fit.coef.assign(raw.data(), raw.data() + d1);
    fit.cov.resize(d1 * d1);
    for (std::size_t r = 0; r < d1; ++r)
        for (std::size_t c = 0; c < d1; ++c) fit.cov[r * d1 + c] = cov_raw(r, c);
    return fit;
}

/// Everything the adjoint estimators read: the model, the reference pair
/// (X*, u*), the fundamental solutions along it, the cost and the paths.
struct AdjointInputs {
    const CoefficientModel& model;
    const StatePath& xs;
    const ControlProcess& control;
    const StatePath& phi;
    const StatePath& psi;
    const CostModel& cost;
    const PathSet& paths;
    RegressionBasis basis{};
    bool reciprocal_psi = true;  // 1 / Phi in place of the integrated Psi
};

struct AdjointEstimate {
    TimeGrid grid;
    std::size_t n_paths = 0;
    std::size_t drivers = 0;
    RegressionBasis basis;
    std::vector<double> p, p_target;                // [path * n_nodes + k]
    std::vector<NodeFit> p_fit;                     // per node
    std::vector<double> p_ahead, p_ahead_target;    // E[p(t_{k+1}) | X(t_k)], node n unused
    std::vector<NodeFit> p_ahead_fit;
    std::vector<std::vector<double>> q, q_target;   // per driver, node n unused
    std::vector<std::vector<NodeFit>> q_fit;
    double max_condition = 1.0;

    AdjointEstimate(TimeGrid g, std::size_t n, std::size_t m) : grid(g), n_paths(n), drivers(m) {}

    std::size_t n_nodes() const noexcept { return grid.n_nodes(); }
    bool has_q() const noexcept { return !q.empty(); }
    double p_at(std::size_t path, std::size_t k) const { return p[path * n_nodes() + k]; }
    double q_at(std::size_t j, std::size_t path, std::size_t k) const { return q[j][path * n_nodes() + k]; }

    /// Mean of p at node k; standard error from the regression targets.
    MeanEstimate p_mean(std::size_t k) const { return node_mean(p, p_target, k); }
    MeanEstimate p_ahead_mean(std::size_t k) const { return node_mean(p_ahead, p_ahead_target, k); }
    MeanEstimate q_mean(std::size_t j, std::size_t k) const { return node_mean(q[j], q_target[j], k); }

private:
    MeanEstimate node_mean(const std::vector<double>& fitted, const std::vector<double>& target, std::size_t k) const {
        std::vector<double> f(n_paths), t(n_paths);
        for (std::size_t i = 0; i < n_paths; ++i) {
            f[i] = fitted[i * n_nodes() + k];
            t[i] = target[i * n_nodes() + k];
        }
        MeanEstimate m = mean_estimate(t);
        m.mean = mean_estimate(f).mean;
        return m;
    }
};

namespace detail {

inline void require_adjoint_inputs(const AdjointInputs& in) {
    require_same_grid(in.xs.grid, in.paths.grid(), "X* vs paths");
    require_same_grid(in.phi.grid, in.paths.grid(), "Phi vs paths");
    require_same_grid(in.psi.grid, in.paths.grid(), "Psi vs paths");
    if (in.xs.n_paths != in.paths.n_paths() || in.phi.n_paths != in.paths.n_paths() ||
        in.psi.n_paths != in.paths.n_paths())
        throw GridMismatch("adjoint inputs: path counts differ");
    if (in.xs.u.empty()) throw DomainError("adjoint inputs: X* carries no realized control");
    if (!in.cost.f_x || !in.cost.g_x) throw DomainError("adjoint inputs: cost partials f_x and g_x required");
}

inline std::vector<NodeFit> regress_columns(const StatePath& xs, const std::vector<double>& target,
                                            std::vector<double>& fitted, std::size_t last_node,
                                            const RegressionBasis& basis, double& max_condition) {
    const std::size_t nn = xs.n_nodes(), np = xs.n_paths;
    std::vector<NodeFit> fits(nn);
    std::vector<double> x(np), y(np);
    for (std::size_t k = 0; k < last_node; ++k) {
        for (std::size_t i = 0; i < np; ++i) {
            x[i] = xs.at(i, k);
            y[i] = target[i * nn + k];
        }
        fits[k] = fit_node(x, y, basis);
        max_condition = std::max(max_condition, fits[k].condition);
        for (std::size_t i = 0; i < np; ++i) fitted[i * nn + k] = fits[k](x[i]);
    }
    return fits;
}

/// Kernel increment d(dB^H_i) / d(dB_r) = c(i+1, r) - c(i, r).
inline double kernel_increment(const KernelWeights* w, std::size_t i, std::size_t r) {
    return w ? w->coeff(i + 1, r) - w->coeff(i, r) : 0.0;
}

}  // namespace detail

namespace detail {

/// Psi(t_k) along path i: the reciprocal of Phi or the integrated solution.
inline double inverse_phi(const AdjointInputs& in, std::size_t i, std::size_t k) {
    return in.reciprocal_psi ? 1.0 / in.phi.at(i, k) : in.psi.at(i, k);
}

}  // namespace detail

/// p by regression, plus the one-step-ahead E[p(t_{k+1}) | X(t_k)] used by
/// the first-order condition; terminal node set to g_x(X*(T)) exactly.
inline AdjointEstimate estimate_p(const AdjointInputs& in) {
    detail::require_adjoint_inputs(in);
    const TimeGrid& g = in.paths.grid();
    const std::size_t n = g.n_steps(), nn = g.n_nodes(), np = in.paths.n_paths();
    const double dt = g.dt();
    AdjointEstimate est(g, np, in.model.drivers());
    est.basis = in.basis;
    est.p.assign(np * nn, 0.0);
    est.p_target.assign(np * nn, 0.0);
    est.p_ahead.assign(np * nn, 0.0);
    est.p_ahead_target.assign(np * nn, 0.0);
    parallel_for(np, [&](std::size_t i) {
        const double xT = in.xs.at(i, n);
        double tail = in.cost.g_x(xT) * in.phi.at(i, n);
        est.p_target[i * nn + n] = in.cost.g_x(xT);
        for (std::size_t k = n; k-- > 0;) {
            tail += in.cost.f_x(g.node(k), in.xs.at(i, k), in.xs.control(i, k)) * in.phi.at(i, k) * dt;
            est.p_target[i * nn + k] = detail::inverse_phi(in, i, k) * tail;
            est.p_ahead_target[i * nn + k] = est.p_target[i * nn + k + 1];
        }
    });
    est.p_fit = detail::regress_columns(in.xs, est.p_target, est.p, n, in.basis, est.max_condition);
    est.p_ahead_fit = detail::regress_columns(in.xs, est.p_ahead_target, est.p_ahead, n, in.basis, est.max_condition);
    for (std::size_t i = 0; i < np; ++i) est.p[i * nn + n] = est.p_target[i * nn + n];
    est.p_fit[n].coef = {0.0};
    return est;
}

namespace detail {

/// Per-path quantities along the reference pair, for driver j.
struct PathCoefs {
    std::vector<double> phi_f, psi_f, tangent_f, sx, gx, sig, gam, a, fxx;
};

inline PathCoefs path_coefs(const AdjointInputs& in, std::size_t i, std::size_t j) {
    const CoefficientModel& m = in.model;
    const TimeGrid& g = in.paths.grid();
    const std::size_t n = g.n_steps();
    const double dt = g.dt();
    PathCoefs c;
    for (auto* v : {&c.phi_f, &c.psi_f, &c.tangent_f, &c.sx, &c.gx, &c.sig, &c.gam}) v->assign(n, 0.0);
    c.a.assign(n + 1, 0.0);
    c.fxx.assign(n + 1, 0.0);
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = g.node(k), x = in.xs.at(i, k), u = in.xs.control(i, k);
        c.a[k] = in.cost.f_x(t, x, u) * in.phi.at(i, k);
        c.fxx[k] = (in.cost.f_xx ? in.cost.f_xx(t, x, u) : 0.0) * in.phi.at(i, k);
        if (k == n) break;
        const double ux = in.control.dx(k, t, x);
        double phi_f = 1.0 + m.b_x(t, x, u) * dt;
        double psi_f = 1.0 - m.b_x(t, x, u) * dt;
        double tan_f = 1.0 + (m.b_x(t, x, u) + m.b_u(t, x, u) * ux) * dt;
        for (std::size_t l = 0; l < m.drivers(); ++l) {
            const double db = in.paths.dB(i, l)[k];
            const double dbh = m.has_gamma() ? in.paths.dBH(i, l, k) : 0.0;
            const double sx = m.sigma_x[l](t, x, u), gx = m.gam_x(l, t, x, u);
            phi_f += sx * db + gx * dbh;
            psi_f += sx * sx * dt - sx * db - gx * dbh;
            tan_f += (sx + m.sigma_u[l](t, x, u) * ux) * db + (gx + m.gam_u(l, t, x, u) * ux) * dbh;
            if (l == j) {
                c.sx[k] = sx;
                c.gx[k] = gx;
                c.sig[k] = m.sigma[l](t, x, u);
                c.gam[k] = m.gam(l, t, x, u);
            }
        }
        c.phi_f[k] = phi_f;
        c.psi_f[k] = psi_f;
        c.tangent_f[k] = tan_f;
    }
    return c;
}

}  // namespace detail

/// Discrete Malliavin derivative D_r^j X(t_s) for every path: the derivative
/// of the scheme with respect to dB_j(t_r), including the response of
/// feedback controls and of the fBm increments built from dB_j(t_r).
/// Zero for s <= r (adaptedness).
inline std::vector<double> malliavin_dx(const AdjointInputs& in, std::size_t r, std::size_t s, std::size_t j = 0) {
    if (!in.model.linear_in_state) throw UnsupportedModel(in.model.id + ": Malliavin derivative needs a model linear in state");
    detail::require_adjoint_inputs(in);
    const std::size_t n = in.paths.grid().n_steps();
    if (r >= n || s > n) throw DomainError("malliavin_dx: node out of range");
    if (in.model.has_gamma() && !in.paths.kernel())
        throw DomainError("malliavin_dx: fractional term needs paths built from the kernel");
    const KernelWeights* w = in.model.has_gamma() ? in.paths.kernel().get() : nullptr;
    std::vector<double> out(in.paths.n_paths(), 0.0);
    if (s <= r) return out;
    parallel_for(in.paths.n_paths(), [&](std::size_t i) {
        const auto c = detail::path_coefs(in, i, j);
        double d = c.sig[r] + c.gam[r] * detail::kernel_increment(w, r, r);
        for (std::size_t k = r + 1; k < s; ++k) d = d * c.tangent_f[k] + c.gam[k] * detail::kernel_increment(w, k, r);
        out[i] = d;
    });
    return out;
}

/// q by regressing the discrete Malliavin derivative of the p-target at
/// t_{k+1} on X(t_k). Requires a model linear in state.
inline void estimate_q_formula(const AdjointInputs& in, AdjointEstimate& est) {
    if (!in.model.linear_in_state)
        throw UnsupportedModel(in.model.id + ": q formula needs a model linear in state");
    detail::require_adjoint_inputs(in);
    const TimeGrid& g = in.paths.grid();
    const std::size_t n = g.n_steps(), nn = g.n_nodes(), np = in.paths.n_paths(), m = in.model.drivers();
    const double dt = g.dt();
    const bool frac = in.model.has_gamma();
    if (frac && !in.paths.kernel()) throw DomainError("q formula: fractional term needs paths built from the kernel");
    const KernelWeights* w = frac ? in.paths.kernel().get() : nullptr;
    est.q.assign(m, std::vector<double>(np * nn, 0.0));
    est.q_target.assign(m, std::vector<double>(np * nn, 0.0));
    est.q_fit.assign(m, {});
    for (std::size_t j = 0; j < m; ++j) {
        auto& target = est.q_target[j];
        parallel_for(np, [&](std::size_t i) {
            const auto c = detail::path_coefs(in, i, j);
            const double xT = in.xs.at(i, n);
            const double gX = in.cost.g_x(xT) * in.phi.at(i, n);
            const double gxx = in.cost.g_xx ? in.cost.g_xx(xT) : 0.0;
            const double gXX = gxx * in.phi.at(i, n);
            // suffix sums Y_k = sum_{s >= k} f_x Phi dt + g_x Phi(T), and C_k for f_xx Phi times the tangent product
            std::vector<double> y(n + 1, gX), tprod(n + 1, 1.0), cs(n + 1, 0.0);
            for (std::size_t k = 0; k < n; ++k) tprod[k + 1] = tprod[k] * c.tangent_f[k];
            cs[n] = gXX * tprod[n];
            for (std::size_t k = n; k-- > 0;) {
                y[k] = y[k + 1] + c.a[k] * dt;
                cs[k] = cs[k + 1] + c.fxx[k] * tprod[k] * dt;
            }
            for (std::size_t k = 0; k < n; ++k) {
                const double kk = detail::kernel_increment(w, k, k);
                const double delta0 = c.sig[k] + c.gam[k] * kk;
                if (k + 1 == n && !in.reciprocal_psi) {
                    // p(T) = g_x(X(T)) exactly
                    target[i * nn + k] = gxx * delta0;
                    continue;
                }
                const double l0 = (c.sx[k] + c.gx[k] * kk) / c.phi_f[k];  // d log Phi(t_{k+1})
                const double linv = in.reciprocal_psi ? l0 : (c.sx[k] + c.gx[k] * kk) / c.psi_f[k];
                double dy;
                if (!frac) {
                    dy = delta0 / tprod[k + 1] * cs[k + 1] + l0 * y[k + 1];
                } else {
                    double delta = delta0, l = l0;
                    dy = 0.0;
                    for (std::size_t s = k + 1; s < n; ++s) {
                        dy += dt * (c.fxx[s] * delta + c.a[s] * l);
                        const double ks = detail::kernel_increment(w, s, k);
                        delta = delta * c.tangent_f[s] + c.gam[s] * ks;
                        l += c.gx[s] * ks / c.phi_f[s];
                    }
                    dy += gXX * delta + gX * l;
                }
                target[i * nn + k] = detail::inverse_phi(in, i, k + 1) * (dy - linv * y[k + 1]);
            }
        });
        est.q_fit[j] = detail::regress_columns(in.xs, target, est.q[j], n, in.basis, est.max_condition);
    }
}

inline AdjointEstimate estimate_adjoint(const AdjointInputs& in, bool with_q = true) {
    AdjointEstimate est = estimate_p(in);
    if (with_q) estimate_q_formula(in, est);
    return est;
}

struct BumpEstimate {
    std::vector<MeanEstimate> q;  // per node, node n unused
    double h = 0.0;
};

/// Central difference of the frozen p regression at t_{k+1} with respect to
/// dB_j(t_k): X(t_{k+1}) moves by +-h (sigma_j + gamma_j c(k+1, k)).
/// The standard error adds the coefficient uncertainty of the frozen fit.
inline BumpEstimate estimate_q_bump(const AdjointInputs& in, const AdjointEstimate& est, double h, std::size_t j = 0) {
    detail::require_adjoint_inputs(in);
    if (!(h > 0.0)) throw DomainError("bump size must be positive");
    const TimeGrid& g = in.paths.grid();
    const std::size_t n = g.n_steps(), np = in.paths.n_paths();
    const CoefficientModel& m = in.model;
    if (m.has_gamma() && !in.paths.kernel()) throw DomainError("q bump: fractional term needs kernel-built paths");
    const KernelWeights* w = m.has_gamma() ? in.paths.kernel().get() : nullptr;
    BumpEstimate out;
    out.h = h;
    out.q.resize(n + 1);
    std::vector<double> vals(np);
    for (std::size_t k = 0; k < n; ++k) {
        const NodeFit& fit = est.p_fit[k + 1];
        const bool terminal = k + 1 == n;
        const std::size_t d1 = fit.coef.size();
        std::vector<double> grad(np * d1, 0.0);  // d vals[i] / d coef
        parallel_for(np, [&](std::size_t i) {
            const double t = g.node(k), x = in.xs.at(i, k), u = in.xs.control(i, k);
            const double move = h * (m.sigma[j](t, x, u) + m.gam(j, t, x, u) * detail::kernel_increment(w, k, k));
            const double xn = in.xs.at(i, k + 1);
            const auto pv = [&](double z) { return terminal ? in.cost.g_x(z) : fit(z); };
            vals[i] = (pv(xn + move) - pv(xn - move)) / (2.0 * h);
            double up = 1.0, dn = 1.0;
            for (std::size_t e = 0; e < d1; ++e) {
                grad[i * d1 + e] = (up - dn) / (2.0 * h);
                up *= xn + move;
                dn *= xn - move;
            }
        });
        out.q[k] = mean_estimate(vals);
        if (!terminal && !fit.cov.empty()) {
            std::vector<double> gm(d1, 0.0);
            for (std::size_t i = 0; i < np; ++i)
                for (std::size_t e = 0; e < d1; ++e) gm[e] += grad[i * d1 + e] / static_cast<double>(np);
            double v = 0.0;
            for (std::size_t r = 0; r < d1; ++r)
                for (std::size_t c = 0; c < d1; ++c) v += gm[r] * fit.cov[r * d1 + c] * gm[c];
            out.q[k].stderr_ = std::sqrt(out.q[k].stderr_ * out.q[k].stderr_ + std::max(v, 0.0));
        }
    }
    return out;
}

/// Path-bumped state: the whole path re-simulated with dB_j(t_r) shifted by
/// h and the fBm increments shifted accordingly.
inline std::vector<double> bumped_state(const CoefficientModel& m, const ControlProcess& u, double x0,
                                        const PathSet& ps, std::size_t path, std::size_t r, std::size_t j, double h) {
    const TimeGrid& g = ps.grid();
    const std::size_t n = g.n_steps();
    const KernelWeights* w = m.has_gamma() ? ps.kernel().get() : nullptr;
    if (m.has_gamma() && !w) throw DomainError("bumped_state: fractional term needs kernel-built paths");
    std::vector<double> x(n + 1);
    x[0] = x0;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = g.node(k);
        const double uk = u.value(path, k, t, x[k]);
        double next = x[k] + m.b(t, x[k], uk) * g.dt();
        for (std::size_t l = 0; l < m.drivers(); ++l) {
            const double db = ps.dB(path, l)[k] + (l == j && k == r ? h : 0.0);
            next += m.sigma[l](t, x[k], uk) * db;
            if (m.has_gamma()) {
                const double dbh = ps.dBH(path, l, k) + (l == j && k >= r ? h * detail::kernel_increment(w, k, r) : 0.0);
                next += m.gamma[l](t, x[k], uk) * dbh;
            }
        }
        x[k + 1] = next;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Residuals

/// sum_j gamma_u^j p at each node.
inline std::vector<MeanEstimate> constraint_residual_gamma(const AdjointInputs& in, const AdjointEstimate& est) {
    const TimeGrid& g = in.paths.grid();
    const std::size_t nn = g.n_nodes(), np = in.paths.n_paths();
    std::vector<MeanEstimate> out(nn);
    std::vector<double> fitted(np), infl(np);
    for (std::size_t k = 0; k < nn; ++k) {
        for (std::size_t i = 0; i < np; ++i) {
            const double t = g.node(k), x = in.xs.at(i, k), u = in.xs.control(i, k);
            double gu = 0.0;
            for (std::size_t j = 0; j < in.model.drivers(); ++j) gu += in.model.gam_u(j, t, x, u);
            fitted[i] = gu * est.p_at(i, k);
            infl[i] = gu * est.p_target[i * nn + k];
        }
        out[k] = mean_estimate(infl);
        out[k].mean = mean_estimate(fitted).mean;
    }
    return out;
}

/// b_u p + sum_j sigma_u^j q_j + f_u at nodes 0..n-1, with p the
/// one-step-ahead estimate E[p(t_{k+1}) | X(t_k)] that the control at t_k acts on.
inline std::vector<MeanEstimate> stationarity_residual(const AdjointInputs& in, const AdjointEstimate& est) {
    if (!in.model.gamma_u_vanishes())
        throw UnsupportedModel(in.model.id +
                               ": stationarity with gamma_u != 0 needs the fractional Malliavin correction terms "
                               "(phi_{1,H} double integrals), which are not implemented");
    if (!in.cost.f_u) throw DomainError("stationarity residual: cost partial f_u required");
    const TimeGrid& g = in.paths.grid();
    const std::size_t n = g.n_steps(), nn = g.n_nodes(), np = in.paths.n_paths();
    const std::size_t m = in.model.drivers();
    std::vector<MeanEstimate> out(n);
    std::vector<double> fitted(np), infl(np);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < np; ++i) {
            const double t = g.node(k), x = in.xs.at(i, k), u = in.xs.control(i, k);
            const double bu = in.model.b_u(t, x, u), fu = in.cost.f_u(t, x, u);
            double f = bu * est.p_ahead[i * nn + k] + fu;
            double v = bu * est.p_ahead_target[i * nn + k] + fu;
            for (std::size_t j = 0; j < m; ++j) {
                const double su = in.model.sigma_u[j](t, x, u);
                if (su == 0.0) continue;
                if (!est.has_q()) throw DomainError("stationarity residual: sigma_u != 0 but q was not estimated");
                f += su * est.q_at(j, i, k);
                v += su * est.q_target[j][i * nn + k];
            }
            fitted[i] = f;
            infl[i] = v;
        }
        out[k] = mean_estimate(infl);
        out[k].mean = mean_estimate(fitted).mean;
    }
    return out;
}

struct BsdeReport {
    std::vector<MeanEstimate> residual;  // per step k = 0..n-1
    std::vector<double> mean_square;     // per step
    double mean_square_avg = 0.0;        // average over steps
    double terminal_error = 0.0;         // max |p(T) - g_x(X(T))|
};

/// r_k = p_{k+1} - p_k + [b_x p + sum sigma_x q + f_x]_k dt + sum gamma_x p_k dB^H_k - sum q_k dB_k.
inline BsdeReport bsde_residual(const AdjointInputs& in, const AdjointEstimate& est) {
    if (!est.has_q()) throw DomainError("bsde residual needs q");
    const TimeGrid& g = in.paths.grid();
    const std::size_t n = g.n_steps(), nn = g.n_nodes(), np = in.paths.n_paths();
    const std::size_t m = in.model.drivers();
    const double dt = g.dt();
    BsdeReport rep;
    rep.residual.resize(n);
    rep.mean_square.resize(n);
    std::vector<double> r(np), infl(np), sq(np);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < np; ++i) {
            const double t = g.node(k), x = in.xs.at(i, k), u = in.xs.control(i, k);
            const double p0 = est.p_at(i, k), p1 = est.p_at(i, k + 1);
            const double z0 = est.p_target[i * nn + k], z1 = est.p_target[i * nn + k + 1];
            const double bx = in.model.b_x(t, x, u), fx = in.cost.f_x(t, x, u);
            double a = p1 - p0 + (bx * p0 + fx) * dt;
            double b = z1 - z0 + (bx * z0 + fx) * dt;
            for (std::size_t j = 0; j < m; ++j) {
                const double sx = in.model.sigma_x[j](t, x, u);
                const double qk = est.q_at(j, i, k);
                a += sx * qk * dt - qk * in.paths.dB(i, j)[k];
                b += sx * est.q_target[j][i * nn + k] * dt - qk * in.paths.dB(i, j)[k];
                if (in.model.has_gamma()) {
                    const double gterm = in.model.gam_x(j, t, x, u) * p0 * in.paths.dBH(i, j, k);
                    a += gterm;
                    b += gterm;
                }
            }
            r[i] = a;
            infl[i] = b;
            sq[i] = a * a;
        }
        rep.residual[k] = mean_estimate(infl);
        rep.residual[k].mean = mean_estimate(r).mean;
        rep.mean_square[k] = mean_estimate(sq).mean;
    }
    rep.mean_square_avg = pairwise_sum(rep.mean_square) / static_cast<double>(n);
    for (std::size_t i = 0; i < np; ++i)
        rep.terminal_error = std::max(rep.terminal_error, std::fabs(est.p_at(i, n) - in.cost.g_x(in.xs.at(i, n))));
    return rep;
}

// ---------------------------------------------------------------------------
// Export

/// `node,t,p_mean,p_stderr,q_mean,q_stderr`; q columns empty at the last node.
inline void write_adjoint_csv(std::ostream& os, const AdjointEstimate& est, std::size_t driver = 0) {
    os << "node,t,p_mean,p_stderr,q_mean,q_stderr\n";
    char buf[160];
    const std::size_t n = est.grid.n_steps();
    for (std::size_t k = 0; k <= n; ++k) {
        const auto p = est.p_mean(k);
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,", k, est.grid.node(k), p.mean, p.stderr_);
        os << buf;
        if (est.has_q() && k < n) {
            const auto q = est.q_mean(driver, k);
            std::snprintf(buf, sizeof buf, "%.17g,%.17g", q.mean, q.stderr_);
            os << buf;
        } else {
            os << ',';
        }
        os << '\n';
    }
}

/// `node,t,mean,stderr`
inline void write_residual_csv(std::ostream& os, const TimeGrid& g, const std::vector<MeanEstimate>& r) {
    os << "node,t,mean,stderr\n";
    char buf[128];
    for (std::size_t k = 0; k < r.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g\n", k, g.node(k), r[k].mean, r[k].stderr_);
        os << buf;
    }
}

}  // namespace mfbm
