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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mfbm {

// Error taxonomy. Everything derives from std::runtime_error or
// std::domain_error so callers can catch broadly.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BlowupError : std::runtime_error {
    BlowupError(std::size_t path, std::size_t step, double value)
        : std::runtime_error("integration blowup on path " + std::to_string(path) +
                             " at step " + std::to_string(step) + " (|X| = " +
                             std::to_string(std::fabs(value)) + ")"),
          path_index(path),
          step_index(step) {}
    std::size_t path_index;
    std::size_t step_index;
};

struct UnsupportedModel : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GridMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Hurst exponent restricted to the long-memory regime 1/2 < H < 1.
class Hurst {
public:
    explicit Hurst(double value) : value_(value) {
        if (!(value > 0.5 && value < 1.0)) {
            throw DomainError("Hurst parameter must lie in (1/2, 1), got " + std::to_string(value));
        }
    }
    double value() const noexcept { return value_; }
    bool operator==(const Hurst&) const = default;

private:
    double value_;
};

/// Uniform partition of [0, T] into n_steps cells.
class TimeGrid {
public:
    TimeGrid(double horizon, std::size_t n_steps) : horizon_(horizon), n_steps_(n_steps) {
        if (!(horizon > 0.0) || !std::isfinite(horizon)) {
            throw DomainError("time horizon must be positive and finite");
        }
        if (n_steps == 0) throw DomainError("grid needs at least one step");
    }

    double horizon() const noexcept { return horizon_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_nodes() const noexcept { return n_steps_ + 1; }
    double dt() const noexcept { return horizon_ / static_cast<double>(n_steps_); }
    double node(std::size_t i) const noexcept {
        return i == n_steps_ ? horizon_ : static_cast<double>(i) * dt();
    }

    /// Grid with `factor` times fewer steps over the same horizon.
    TimeGrid coarsened(std::size_t factor) const {
        if (factor == 0 || n_steps_ % factor != 0) {
            throw DomainError("coarsening factor must divide the number of steps");
        }
        return TimeGrid(horizon_, n_steps_ / factor);
    }

    bool operator==(const TimeGrid&) const = default;

private:
    double horizon_;
    std::size_t n_steps_;
};

inline void require_same_grid(const TimeGrid& a, const TimeGrid& b, const char* what) {
    if (!(a == b)) throw GridMismatch(std::string("grid mismatch: ") + what);
}

// ---------------------------------------------------------------------------
// Deterministic reductions

/// Pairwise summation with a fixed split pattern; the result depends only on
/// the input order, never on scheduling.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 16) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

struct MeanEstimate {
    double mean = 0.0;
    double stderr_ = 0.0;
    double variance = 0.0;  // sample variance (n-1)
    std::size_t n = 0;
};

inline MeanEstimate mean_estimate(std::span<const double> xs) {
    MeanEstimate out;
    out.n = xs.size();
    if (xs.empty()) return out;
    out.mean = pairwise_sum(xs) / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - out.mean) * (xs[i] - out.mean);
    out.variance = pairwise_sum(sq) / static_cast<double>(xs.size() - 1);
    out.stderr_ = std::sqrt(out.variance / static_cast<double>(xs.size()));
    return out;
}

/// Sample variance of xs with its standard error (Gaussian-free estimate via
/// the fourth central moment).
inline MeanEstimate variance_estimate(std::span<const double> xs) {
    MeanEstimate out;
    out.n = xs.size();
    if (xs.size() < 4) return out;
    const double n = static_cast<double>(xs.size());
    const double mu = pairwise_sum(xs) / n;
    std::vector<double> d2(xs.size()), d4(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - mu;
        d2[i] = d * d;
        d4[i] = d2[i] * d2[i];
    }
    const double m2 = pairwise_sum(d2) / n;
    const double m4 = pairwise_sum(d4) / n;
    out.mean = m2 * n / (n - 1.0);
    out.variance = std::max(m4 - m2 * m2, 0.0);
    out.stderr_ = std::sqrt(out.variance / n);
    return out;
}

/// Sample covariance of (x, y) with standard error from the per-path products.
inline MeanEstimate covariance_estimate(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("covariance_estimate: size mismatch");
    const double n = static_cast<double>(xs.size());
    const double mx = pairwise_sum(xs) / n;
    const double my = pairwise_sum(ys) / n;
    std::vector<double> prod(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) prod[i] = (xs[i] - mx) * (ys[i] - my);
    MeanEstimate out = mean_estimate(prod);
    out.mean *= n / (n - 1.0);
    return out;
}

inline double correlation(std::span<const double> xs, std::span<const double> ys) {
    const double n = static_cast<double>(xs.size());
    const double mx = pairwise_sum(xs) / n;
    const double my = pairwise_sum(ys) / n;
    std::vector<double> xy(xs.size()), xx(xs.size()), yy(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double a = xs[i] - mx, b = ys[i] - my;
        xy[i] = a * b;
        xx[i] = a * a;
        yy[i] = b * b;
    }
    const double sxx = pairwise_sum(xx), syy = pairwise_sum(yy);
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return pairwise_sum(xy) / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Worker pool control. Every parallel loop partitions by path index and writes
// into disjoint slots, so outputs never depend on the worker count.

inline std::atomic<unsigned>& worker_count_slot() {
    static std::atomic<unsigned> workers{1};
    return workers;
}

inline void set_worker_count(unsigned n) { worker_count_slot().store(std::max(1u, n)); }
inline unsigned worker_count() { return worker_count_slot().load(); }

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::atomic<bool> failed{false};
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            try {
                for (std::size_t i = next++; i < n && !failed; i = next++) fn(i);
            } catch (...) {
                if (!failed.exchange(true)) failure = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace mfbm
