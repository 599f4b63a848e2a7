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

// Deterministic operators attached to fBm: the transfer operator Gamma*_{H,T}
// that maps integrands against dB^H to integrands against dB, the phi kernel
// and its induced norm, and the phi_{1,H} kernel.
//
// All weakly singular integrals use product integration: the singular power
// is integrated in closed form over each cell against the linear interpolant
// of the smooth factor.

#include <cmath>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mfbm/core.hpp"
#include "mfbm/fbm.hpp"

namespace mfbm {

/// Values of a function at the nodes of a grid.
struct GridFunction {
    TimeGrid grid;
    std::vector<double> values;

    GridFunction(TimeGrid g, std::vector<double> v) : grid(g), values(std::move(v)) {
        if (values.size() != grid.n_nodes()) throw GridMismatch("GridFunction: one value per node required");
    }

    static GridFunction sample(TimeGrid g, const std::function<double(double)>& fn) {
        std::vector<double> v(g.n_nodes());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(g.node(i));
        return {g, std::move(v)};
    }

    /// Piecewise-linear interpolation.
    double at(double t) const {
        const double x = t / grid.dt();
        if (x <= 0.0) return values.front();
        const std::size_t i = std::min(static_cast<std::size_t>(x), grid.n_steps() - 1);
        const double w = std::min(x - static_cast<double>(i), 1.0);
        return (1.0 - w) * values[i] + w * values[i + 1];
    }
};

// ---------------------------------------------------------------------------
// Product integration

/// Moments of a power weight over [a, b] for linear interpolation of the
/// smooth factor: integral of w(u) g(u) = m0 * g(a) + m1 * (g(b) - g(a)),
/// with w(u) = |u - c|^beta and c outside (a, b).
struct PowerMoments {
    double m0 = 0.0;  // int w
    double m1 = 0.0;  // int w * (u - a) / (b - a)
};

inline PowerMoments power_moments(double a, double b, double c, double beta) {
    PowerMoments m;
    const double h = b - a;
    if (h <= 0.0) return m;
    const double e1 = beta + 1.0, e2 = beta + 2.0;
    if (c <= a) {
        // x = u - c on [p, q]
        const double p = a - c, q = b - c;
        m.m0 = (std::pow(q, e1) - (p > 0.0 ? std::pow(p, e1) : 0.0)) / e1;
        const double x1 = (std::pow(q, e2) - (p > 0.0 ? std::pow(p, e2) : 0.0)) / e2;  // int x^{beta+1}
        m.m1 = (x1 - p * m.m0) / h;
    } else if (c >= b) {
        // x = c - u on [p, q], p = c - b, u - a = q - x
        const double p = c - b, q = c - a;
        m.m0 = (std::pow(q, e1) - (p > 0.0 ? std::pow(p, e1) : 0.0)) / e1;
        const double x1 = (std::pow(q, e2) - (p > 0.0 ? std::pow(p, e2) : 0.0)) / e2;
        m.m1 = (q * m.m0 - x1) / h;
    } else {
        throw DomainError("power_moments: singular point inside the cell");
    }
    return m;
}

/// int_a^b |u - c|^beta g(u) du with g linear between g(a) = ga and g(b) = gb.
inline double product_integrate(double a, double b, double c, double beta, double ga, double gb) {
    const PowerMoments m = power_moments(a, b, c, beta);
    return m.m0 * ga + m.m1 * (gb - ga);
}

// ---------------------------------------------------------------------------
// Kernels

inline double phi_kernel(double s, double t, Hurst h) {
    if (s == t) throw DomainError("phi_kernel: singular on the diagonal s = t");
    const double H = h.value();
    return H * (2.0 * H - 1.0) * std::pow(std::fabs(s - t), 2.0 * H - 2.0);
}

inline double kappa_1(Hurst h) {
    const double H = h.value();
    return 1.0 / (2.0 * H * std::tgamma(H - 0.5) * std::tgamma(1.5 - H));
}

inline double phi_1h(double s, double t, Hurst h) {
    if (!(s > 0.0)) throw DomainError("phi_1h: requires s > 0");
    if (s == t) throw DomainError("phi_1h: singular on the diagonal s = t");
    const double H = h.value();
    return 2.0 * H * H * (2.0 * H - 1.0) * kappa_1(h) / kappa_h(h) * std::pow(s, 0.5 - H) *
           std::pow(std::fabs(t - s), 2.0 * H - 2.0);
}

/// ||f||_T^2 = int int f(s) f(r) phi(s, r) ds dr, with f replaced by its cell
/// averages and phi integrated exactly over every pair of cells.
inline double phi_norm_sq(const GridFunction& f, Hurst h) {
    const std::size_t n = f.grid.n_steps();
    const double two_h = 2.0 * h.value();
    std::vector<double> avg(n), rho(n);
    for (std::size_t i = 0; i < n; ++i) avg[i] = 0.5 * (f.values[i] + f.values[i + 1]);
    // exact double integral of phi over two unit cells at offset d
    for (std::size_t d = 0; d < n; ++d) {
        const double x = static_cast<double>(d);
        rho[d] = 0.5 * (std::pow(x + 1.0, two_h) - 2.0 * std::pow(x, two_h) + std::pow(std::fabs(x - 1.0), two_h));
    }
    std::vector<double> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = rho[0] * avg[i];
        for (std::size_t j = 0; j < i; ++j) s += 2.0 * rho[i - j] * avg[j];
        rows[i] = avg[i] * s;
    }
    return pairwise_sum(rows) * std::pow(f.grid.dt(), two_h);
}

// ---------------------------------------------------------------------------
// Transfer operator Gamma*_{H,T}

/// t^{H-1/2} (Gamma* f)(t), i.e. the transfer operator without its t^{1/2-H}
/// prefactor. Finite on [0, T]; vanishes at T.
inline double gamma_star_scaled(const GridFunction& f, Hurst h, double t) {
    const TimeGrid& g = f.grid;
    const double T = g.horizon();
    if (t < 0.0 || t > T) throw DomainError("gamma_star: t outside [0, T]");
    if (t >= T) return 0.0;
    const double H = h.value();
    const double beta = H - 1.5;
    const double dt = g.dt();
    const double prefactor = (H - 0.5) * kappa_h(h);
    double sum = 0.0;
    if (t == 0.0) {
        // weight u^{2H-2} against f directly
        for (std::size_t j = 0; j < g.n_steps(); ++j)
            sum += product_integrate(g.node(j), g.node(j + 1), 0.0, 2.0 * H - 2.0, f.values[j], f.values[j + 1]);
        return prefactor * sum;
    }
    auto smooth = [&](double u, double fu) { return std::pow(u, H - 0.5) * fu; };
    std::size_t j = static_cast<std::size_t>(std::floor(t / dt));
    double a = t;
    double ga = smooth(t, f.at(t));
    for (; j < g.n_steps(); ++j) {
        const double b = g.node(j + 1);
        if (b <= a) continue;
        // u^{H-1/2} varies on the scale u; split cells that are long relative to a
        const double fa = f.at(a), fb = f.values[j + 1];
        const std::size_t m = std::min<std::size_t>(512, static_cast<std::size_t>(std::ceil(16.0 * (b - a) / a)));
        double lo = a, glo = ga;
        for (std::size_t q = 1; q <= m; ++q) {
            const double w = static_cast<double>(q) / static_cast<double>(m);
            const double hi = q == m ? b : a + w * (b - a);
            const double ghi = smooth(hi, (1.0 - w) * fa + w * fb);
            sum += product_integrate(lo, hi, t, beta, glo, ghi);
            lo = hi;
            glo = ghi;
        }
        a = b;
        ga = glo;
    }
    return prefactor * sum;
}

inline double gamma_star_at(const GridFunction& f, Hurst h, double t) {
    if (t <= 0.0) throw DomainError("gamma_star_at: unbounded at t = 0");
    return std::pow(t, 0.5 - h.value()) * gamma_star_scaled(f, h, t);
}

/// Gamma* f at the grid nodes. Node 0 carries the value at dt/2.
inline GridFunction gamma_star(const GridFunction& f, Hurst h) {
    const TimeGrid& g = f.grid;
    std::vector<double> out(g.n_nodes());
    out[0] = gamma_star_at(f, h, 0.5 * g.dt());
    for (std::size_t k = 1; k < g.n_nodes(); ++k) out[k] = gamma_star_at(f, h, g.node(k));
    return {g, std::move(out)};
}

/// int_0^T (Gamma* f)(t)^2 dt, integrating the t^{1-2H} factor exactly per cell.
inline double gamma_star_l2_sq(const GridFunction& f, Hurst h) {
    const TimeGrid& g = f.grid;
    const double H = h.value();
    std::vector<double> sq(g.n_nodes());
    for (std::size_t k = 0; k < g.n_nodes(); ++k) {
        const double v = gamma_star_scaled(f, h, g.node(k));
        sq[k] = v * v;
    }
    std::vector<double> cells(g.n_steps());
    for (std::size_t j = 0; j < g.n_steps(); ++j)
        cells[j] = product_integrate(g.node(j), g.node(j + 1), 0.0, 1.0 - 2.0 * H, sq[j], sq[j + 1]);
    return pairwise_sum(cells);
}

// ---------------------------------------------------------------------------
// Transfer identity check

struct TransferReport {
    double correlation = 0.0;
    MeanEstimate var_lhs;  // Var of sum f dB^H
    MeanEstimate var_rhs;  // Var of sum (Gamma* f) dB
    std::size_t n_paths = 0;
};

/// Per path: L = sum f(t_i) dB^H_i (pathwise) and R = sum (Gamma* f)(t_i) dB_i (Ito).
inline TransferReport transfer_check(const GridFunction& f, const PathSet& paths, std::size_t dim = 0) {
    require_same_grid(f.grid, paths.grid(), "transfer_check");
    if (!paths.has_b() || !paths.has_bh()) throw DomainError("transfer_check: needs coupled B and B^H");
    const GridFunction gs = gamma_star(f, *paths.hurst());
    const std::size_t n = paths.grid().n_steps();
    std::vector<double> lhs(paths.n_paths()), rhs(paths.n_paths());
    for (std::size_t p = 0; p < paths.n_paths(); ++p) {
        const auto bh = paths.BH(p, dim);
        const auto db = paths.dB(p, dim);
        double l = 0.0, r = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            l += f.values[i] * (bh[i + 1] - bh[i]);
            r += gs.values[i] * db[i];
        }
        lhs[p] = l;
        rhs[p] = r;
    }
    TransferReport rep;
    rep.n_paths = paths.n_paths();
    rep.correlation = correlation(lhs, rhs);
    rep.var_lhs = variance_estimate(lhs);
    rep.var_rhs = variance_estimate(rhs);
    return rep;
}

/// Exact second moments of (L, R) for the discretized construction: both are
/// linear in the Brownian increments, so no sampling is needed.
struct TransferMoments {
    double var_lhs = 0.0;
    double var_rhs = 0.0;
    double cov = 0.0;
    double correlation() const { return cov / std::sqrt(var_lhs * var_rhs); }
};

inline TransferMoments transfer_moments(const GridFunction& f, const KernelWeights& w) {
    require_same_grid(f.grid, w.grid(), "transfer_moments");
    const std::size_t n = f.grid.n_steps();
    const GridFunction gs = gamma_star(f, w.hurst());
    std::vector<double> c(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        // f_i * (B^H_{i+1} - B^H_i)
        const auto up = w.row(i + 1);
        for (std::size_t j = 0; j <= i; ++j) c[j] += f.values[i] * up[j];
        const auto lo = w.row(i);
        for (std::size_t j = 0; j < i; ++j) c[j] -= f.values[i] * lo[j];
    }
    TransferMoments m;
    for (std::size_t j = 0; j < n; ++j) {
        m.var_lhs += c[j] * c[j];
        m.var_rhs += gs.values[j] * gs.values[j];
        m.cov += c[j] * gs.values[j];
    }
    const double dt = f.grid.dt();
    m.var_lhs *= dt;
    m.var_rhs *= dt;
    m.cov *= dt;
    return m;
}

/// CSV rows `name,value,stderr`.
inline void write_transfer_csv(std::ostream& os, const TransferReport& r, bool header = true) {
    if (header) os << "name,value,stderr\n";
    os << "correlation," << r.correlation << ",\n";
    os << "var_lhs," << r.var_lhs.mean << ',' << r.var_lhs.stderr_ << '\n';
    os << "var_rhs," << r.var_rhs.mean << ',' << r.var_rhs.stderr_ << '\n';
}

}  // namespace mfbm
