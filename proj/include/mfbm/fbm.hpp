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

// Brownian and fractional Brownian path bundles on a uniform grid.
//
// Two B^H generators are provided:
//  * fbm_from_kernel   - Volterra representation B^H(t) = int_0^t Z_H(t,s) dB(s),
//                        driven by the same increments as B (the coupled pair).
//  * fbm_from_cholesky - exact finite-dimensional law from the covariance
//                        matrix; used as an oracle.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/special_functions/beta.hpp>

#include "mfbm/core.hpp"
#include "mfbm/rng.hpp"

namespace mfbm {

// ---------------------------------------------------------------------------
// Analytic covariance and kernel

inline double fbm_covariance(double t, double s, Hurst h) {
    if (t < 0.0 || s < 0.0) throw DomainError("fbm_covariance: times must be non-negative");
    const double two_h = 2.0 * h.value();
    return 0.5 * (std::pow(t, two_h) + std::pow(s, two_h) - std::pow(std::fabs(t - s), two_h));
}

inline double kappa_h(Hurst h) {
    const double H = h.value();
    return std::sqrt(2.0 * H * std::tgamma(1.5 - H) / (std::tgamma(H + 0.5) * std::tgamma(2.0 - 2.0 * H)));
}

namespace detail {

using BetaPolicy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

// int_x^1 v^{-2H} (1-v)^{beta-1} dv for beta > 0, via one upward shift of the
// (negative) first parameter of the complementary incomplete beta function.
// full_beta = B(2 - 2H, beta).
inline double upper_beta_neg(double x, double H, double beta, double full_beta) {
    const double a = 1.0 - 2.0 * H;  // < 0
    const double shifted = full_beta * boost::math::ibetac(a + 1.0, beta, x, BetaPolicy());
    return -std::pow(x, a) * std::pow(1.0 - x, beta) / a + ((a + beta) / a) * shifted;
}

inline double upper_beta_neg(double x, double H, double beta) {
    return upper_beta_neg(x, H, beta, boost::math::beta(2.0 - 2.0 * H, beta, BetaPolicy()));
}

}  // namespace detail

/// Volterra kernel Z_H(t, s) on 0 < s < t.
inline double kernel_z(double t, double s, Hurst h) {
    if (!(s > 0.0) || !(s < t)) throw DomainError("kernel_z: requires 0 < s < t");
    const double H = h.value();
    const double a = H - 0.5;
    // int_s^t u^{H-3/2} (u-s)^{H-1/2} du = s^{2H-1} int_{s/t}^1 v^{-2H} (1-v)^{H-1/2} dv
    const double inner = std::pow(s, 2.0 * H - 1.0) * detail::upper_beta_neg(s / t, H, H + 0.5);
    return kappa_h(h) * (std::pow(t / s, a) * std::pow(t - s, a) - a * std::pow(s, -a) * inner);
}

/// Scaled antiderivative of the kernel, with the H-dependent constants
/// computed once: int_0^{x t} Z_H(t, r) dr = t^{H+1/2} * phi(x), x in [0, 1].
class KernelPrimitive {
public:
    explicit KernelPrimitive(Hurst h)
        : H_(h.value()),
          scale_((H_ - 0.5) * kappa_h(h) / (H_ + 0.5)),
          lower_beta_(boost::math::beta(1.5 - H_, H_ - 0.5, detail::BetaPolicy())),
          upper_beta_(boost::math::beta(2.0 - 2.0 * H_, H_ - 0.5, detail::BetaPolicy())) {}

    double operator()(double x) const {
        if (x < 0.0 || x > 1.0) throw DomainError("kernel_primitive: x must lie in [0, 1]");
        if (x == 0.0) return 0.0;
        const double lower = lower_beta_ * boost::math::ibeta(1.5 - H_, H_ - 0.5, x, detail::BetaPolicy());
        const double tail =
            x < 1.0 ? std::pow(x, H_ + 0.5) * detail::upper_beta_neg(x, H_, H_ - 0.5, upper_beta_) : 0.0;
        return scale_ * (lower + tail);
    }

private:
    double H_, scale_, lower_beta_, upper_beta_;
};

inline double kernel_primitive(double x, Hurst h) { return KernelPrimitive(h)(x); }

/// Per-cell kernel coefficients: B^H(t_k) = sum_{i<k} coeff(k, i) * dB_i, where
/// coeff(k, i) is the average of Z_H(t_k, .) over cell i (exact, closed form).
class KernelWeights {
public:
    KernelWeights(TimeGrid grid, Hurst h) : grid_(grid), hurst_(h) {
        const std::size_t n = grid.n_steps();
        rows_.resize(n + 1);
        data_.resize(n * (n + 1) / 2);
        const double H = h.value();
        const double dt = grid.dt();
        std::size_t offset = 0;
        for (std::size_t k = 0; k <= n; ++k) {
            rows_[k] = offset;
            offset += k;
        }
        const KernelPrimitive phi(h);
        parallel_for(n, [&](std::size_t r) {
            const std::size_t k = r + 1;
            const double kk = static_cast<double>(k);
            // t_k^{H+1/2} / dt, written to avoid forming t_k
            const double scale = std::pow(kk, H + 0.5) * std::pow(dt, H - 0.5);
            double prev = 0.0;
            for (std::size_t i = 0; i < k; ++i) {
                const double next = phi(static_cast<double>(i + 1) / kk);
                data_[rows_[k] + i] = scale * (next - prev);
                prev = next;
            }
        });
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    Hurst hurst() const noexcept { return hurst_; }

    /// Coefficients of node k against increments 0..k-1.
    std::span<const double> row(std::size_t k) const { return {data_.data() + rows_[k], k}; }

    double coeff(std::size_t k, std::size_t i) const { return i < k ? data_[rows_[k] + i] : 0.0; }

    /// Exact variance of the discretized B^H(t_k) (sum coeff^2 * dt).
    double discrete_variance(std::size_t k) const {
        double s = 0.0;
        for (double c : row(k)) s += c * c;
        return s * grid_.dt();
    }

private:
    TimeGrid grid_;
    Hurst hurst_;
    std::vector<std::size_t> rows_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Path bundles

/// Block of sample paths with global indices [first_path, first_path + n_paths).
/// Per-path values are pure functions of (seed, global path index, dim), so a
/// large ensemble can be processed block by block with identical results.
class PathSet {
public:
    PathSet(TimeGrid grid, std::size_t dims, std::size_t n_paths, std::uint64_t seed,
            std::size_t first_path = 0)
        : grid_(grid), dims_(dims), n_paths_(n_paths), seed_(seed), first_path_(first_path) {
        if (dims == 0) throw DomainError("PathSet needs at least one driving dimension");
        if (n_paths == 0) throw DomainError("PathSet needs at least one path");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dims() const noexcept { return dims_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::size_t first_path() const noexcept { return first_path_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::optional<Hurst> hurst() const noexcept { return hurst_; }
    bool has_b() const noexcept { return !db_.empty(); }
    bool has_bh() const noexcept { return !bh_.empty(); }

    std::span<const double> dB(std::size_t p, std::size_t d) const {
        return {db_.data() + (p * dims_ + d) * grid_.n_steps(), grid_.n_steps()};
    }
    std::span<const double> B(std::size_t p, std::size_t d) const {
        return {b_.data() + (p * dims_ + d) * grid_.n_nodes(), grid_.n_nodes()};
    }
    std::span<const double> BH(std::size_t p, std::size_t d) const {
        return {bh_.data() + (p * dims_ + d) * grid_.n_nodes(), grid_.n_nodes()};
    }
    double dBH(std::size_t p, std::size_t d, std::size_t k) const {
        const auto bh = BH(p, d);
        return bh[k + 1] - bh[k];
    }

    /// Kernel coefficients used to couple B^H to B, when built by fbm_from_kernel.
    const std::shared_ptr<const KernelWeights>& kernel() const noexcept { return kernel_; }

    // Builders. Generators and the bump oracle use these; everything else
    // treats a PathSet as immutable.
    std::span<double> mutable_dB(std::size_t p, std::size_t d) {
        return {db_.data() + (p * dims_ + d) * grid_.n_steps(), grid_.n_steps()};
    }
    std::span<double> mutable_B(std::size_t p, std::size_t d) {
        return {b_.data() + (p * dims_ + d) * grid_.n_nodes(), grid_.n_nodes()};
    }
    std::span<double> mutable_BH(std::size_t p, std::size_t d) {
        return {bh_.data() + (p * dims_ + d) * grid_.n_nodes(), grid_.n_nodes()};
    }
    void allocate_b() {
        db_.assign(n_paths_ * dims_ * grid_.n_steps(), 0.0);
        b_.assign(n_paths_ * dims_ * grid_.n_nodes(), 0.0);
    }
    void allocate_bh(Hurst h) {
        hurst_ = h;
        bh_.assign(n_paths_ * dims_ * grid_.n_nodes(), 0.0);
    }
    void set_kernel(std::shared_ptr<const KernelWeights> w) { kernel_ = std::move(w); }

    /// Recomputes B from dB (cumulative sums).
    void rebuild_b(std::size_t p, std::size_t d) {
        const auto inc = dB(p, d);
        auto b = mutable_B(p, d);
        b[0] = 0.0;
        for (std::size_t k = 0; k < inc.size(); ++k) b[k + 1] = b[k] + inc[k];
    }

    /// Recomputes B^H from dB through the kernel coefficients.
    void rebuild_bh(std::size_t p, std::size_t d) {
        const auto inc = dB(p, d);
        auto bh = mutable_BH(p, d);
        bh[0] = 0.0;
        for (std::size_t k = 1; k < bh.size(); ++k) {
            const auto w = kernel_->row(k);
            double s = 0.0;
            for (std::size_t i = 0; i < k; ++i) s += w[i] * inc[i];
            bh[k] = s;
        }
    }

    bool operator==(const PathSet& o) const {
        return grid_ == o.grid_ && dims_ == o.dims_ && n_paths_ == o.n_paths_ && seed_ == o.seed_ &&
               first_path_ == o.first_path_ && db_ == o.db_ && b_ == o.b_ && bh_ == o.bh_;
    }

private:
    TimeGrid grid_;
    std::size_t dims_;
    std::size_t n_paths_;
    std::uint64_t seed_;
    std::size_t first_path_;
    std::optional<Hurst> hurst_;
    std::vector<double> db_, b_, bh_;
    std::shared_ptr<const KernelWeights> kernel_;
};

namespace detail {
// Stream tags keep the Brownian and oracle generators on disjoint substreams.
inline constexpr std::uint64_t kBrownianLane = 0;
inline constexpr std::uint64_t kCholeskyLane = std::uint64_t{1} << 40;
}  // namespace detail

/// Independent N(0, dt) increments; path p, dim d uses substream (seed, first_path + p, d).
inline PathSet generate_bm(TimeGrid grid, std::size_t dims, std::size_t n_paths, std::uint64_t seed,
                           std::size_t first_path = 0) {
    PathSet ps(grid, dims, n_paths, seed, first_path);
    ps.allocate_b();
    const double sd = std::sqrt(grid.dt());
    parallel_for(n_paths, [&](std::size_t p) {
        for (std::size_t d = 0; d < dims; ++d) {
            rng::NormalStream stream(seed, first_path + p, detail::kBrownianLane + d);
            auto inc = ps.mutable_dB(p, d);
            stream.fill(inc);
            for (double& x : inc) x *= sd;
            ps.rebuild_b(p, d);
        }
    });
    return ps;
}

/// Adds B^H = int Z_H dB built from the increments already in `bm`.
inline PathSet fbm_from_kernel(PathSet bm, Hurst h,
                               std::shared_ptr<const KernelWeights> weights = nullptr) {
    if (!bm.has_b()) throw DomainError("fbm_from_kernel: path set carries no Brownian increments");
    if (!weights) weights = std::make_shared<const KernelWeights>(bm.grid(), h);
    require_same_grid(weights->grid(), bm.grid(), "kernel weights vs path set");
    if (!(weights->hurst() == h)) throw DomainError("fbm_from_kernel: weights built for another Hurst value");
    bm.allocate_bh(h);
    bm.set_kernel(weights);
    parallel_for(bm.n_paths(), [&](std::size_t p) {
        for (std::size_t d = 0; d < bm.dims(); ++d) bm.rebuild_bh(p, d);
    });
    return bm;
}

/// Convenience: Brownian increments plus the coupled kernel B^H.
inline PathSet generate_mixed(TimeGrid grid, Hurst h, std::size_t dims, std::size_t n_paths, std::uint64_t seed,
                              std::size_t first_path = 0,
                              std::shared_ptr<const KernelWeights> weights = nullptr) {
    return fbm_from_kernel(generate_bm(grid, dims, n_paths, seed, first_path), h, std::move(weights));
}

/// Lower Cholesky factor of the fBm covariance on nodes t_1..t_n.
class CholeskyFactor {
public:
    CholeskyFactor(TimeGrid grid, Hurst h) : grid_(grid), hurst_(h) {
        const std::size_t n = grid.n_steps();
        Eigen::MatrixXd cov(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j)
                cov(i, j) = cov(j, i) = fbm_covariance(grid.node(i + 1), grid.node(j + 1), h);
        factor_ = factorize(cov, "fbm covariance (H = " + std::to_string(h.value()) + ")");
    }

    /// Plain Cholesky; failure throws with the smallest eigenvalue as diagnostic.
    static Eigen::MatrixXd factorize(const Eigen::MatrixXd& cov, const std::string& what) {
        Eigen::LLT<Eigen::MatrixXd> llt(cov);
        if (llt.info() != Eigen::Success) {
            const Eigen::VectorXd eig =
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(cov, Eigen::EigenvaluesOnly).eigenvalues();
            throw NumericalError("Cholesky failed for " + what + " on " + std::to_string(cov.rows()) +
                                 " nodes, smallest eigenvalue = " + std::to_string(eig.minCoeff()));
        }
        return llt.matrixL();
    }

    const Eigen::MatrixXd& lower() const noexcept { return factor_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    Hurst hurst() const noexcept { return hurst_; }

private:
    TimeGrid grid_;
    Hurst hurst_;
    Eigen::MatrixXd factor_;
};

/// B^H with the exact finite-dimensional law on the grid (no Brownian part).
inline PathSet fbm_from_cholesky(TimeGrid grid, Hurst h, std::size_t dims, std::size_t n_paths, std::uint64_t seed,
                                 std::size_t first_path = 0,
                                 std::shared_ptr<const CholeskyFactor> factor = nullptr) {
    if (!factor) factor = std::make_shared<const CholeskyFactor>(grid, h);
    require_same_grid(factor->grid(), grid, "Cholesky factor vs requested grid");
    PathSet ps(grid, dims, n_paths, seed, first_path);
    ps.allocate_bh(h);
    const std::size_t n = grid.n_steps();
    const Eigen::MatrixXd& L = factor->lower();
    parallel_for(n_paths, [&](std::size_t p) {
        std::vector<double> z(n);
        for (std::size_t d = 0; d < dims; ++d) {
            rng::NormalStream stream(seed, first_path + p, detail::kCholeskyLane + d);
            stream.fill(z);
            auto bh = ps.mutable_BH(p, d);
            bh[0] = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j <= i; ++j) s += L(i, j) * z[j];
                bh[i + 1] = s;
            }
        }
    });
    return ps;
}

/// Sums groups of `factor` increments, giving the same Brownian paths on a
/// coarser grid (common random numbers across resolutions).
inline PathSet coarsen(const PathSet& fine, std::size_t factor) {
    if (!fine.has_b()) throw DomainError("coarsen: needs Brownian increments");
    const TimeGrid coarse_grid = fine.grid().coarsened(factor);
    PathSet out(coarse_grid, fine.dims(), fine.n_paths(), fine.seed(), fine.first_path());
    out.allocate_b();
    for (std::size_t p = 0; p < fine.n_paths(); ++p) {
        for (std::size_t d = 0; d < fine.dims(); ++d) {
            const auto src = fine.dB(p, d);
            auto dst = out.mutable_dB(p, d);
            for (std::size_t k = 0; k < dst.size(); ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < factor; ++j) s += src[k * factor + j];
                dst[k] = s;
            }
            out.rebuild_b(p, d);
        }
    }
    if (fine.has_bh()) return fbm_from_kernel(std::move(out), *fine.hurst());
    return out;
}

/// CSV export with header `path,dim,node,t,B,BH`. Missing series are left empty.
inline void write_paths_csv(std::ostream& os, const PathSet& ps) {
    os << "path,dim,node,t,B,BH\n";
    char buf[64];
    for (std::size_t p = 0; p < ps.n_paths(); ++p) {
        for (std::size_t d = 0; d < ps.dims(); ++d) {
            for (std::size_t k = 0; k < ps.grid().n_nodes(); ++k) {
                os << ps.first_path() + p << ',' << d << ',' << k << ',';
                std::snprintf(buf, sizeof buf, "%.17g", ps.grid().node(k));
                os << buf << ',';
                if (ps.has_b()) {
                    std::snprintf(buf, sizeof buf, "%.17g", ps.B(p, d)[k]);
                    os << buf;
                }
                os << ',';
                if (ps.has_bh()) {
                    std::snprintf(buf, sizeof buf, "%.17g", ps.BH(p, d)[k]);
                    os << buf;
                }
                os << '\n';
            }
        }
    }
}

}  // namespace mfbm
