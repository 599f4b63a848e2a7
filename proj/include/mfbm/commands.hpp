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

// Verification suites and the commands behind the mfbm tool. Commands return
// their files as strings; nothing here touches the file system.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfbm/adjoint.hpp"
#include "mfbm/config.hpp"
#include "mfbm/core.hpp"
#include "mfbm/fbm.hpp"
#include "mfbm/lq.hpp"
#include "mfbm/sde.hpp"
#include "mfbm/transforms.hpp"

namespace mfbm {

enum ExitCode : int { kExitPass = 0, kExitCheckFailure = 1, kExitUsage = 2, kExitNonConvergence = 3 };

/// One numerical check. `value` is compared against `target` with the
/// allowance `tolerance`; stderr is the Monte Carlo error where relevant.
struct Check {
    std::string name;
    double value = 0.0, target = 0.0, stderr_ = 0.0, tolerance = 0.0;
    bool passed = false;
};

struct Report {
    std::string command;
    std::vector<Check> checks;
    std::vector<std::pair<std::string, std::string>> files;  // name, contents
    std::vector<std::string> notes;
    int exit_code = kExitPass;

    bool passed() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
    }
    void add(std::vector<Check> cs) {
        for (auto& c : cs) checks.push_back(std::move(c));
    }
    const std::string* file(const std::string& name) const {
        for (const auto& [n, s] : files)
            if (n == name) return &s;
        return nullptr;
    }
};

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string short_fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// CSV `check,value,target,stderr,tolerance,pass`.
inline void write_checks_csv(std::ostream& os, const std::vector<Check>& cs) {
    os << "check,value,target,stderr,tolerance,pass\n";
    for (const auto& c : cs)
        os << c.name << ',' << fmt(c.value) << ',' << fmt(c.target) << ',' << fmt(c.stderr_) << ','
           << fmt(c.tolerance) << ',' << (c.passed ? 1 : 0) << '\n';
}

inline std::string check_line(const Check& c) {
    return std::string(c.passed ? "PASS " : "FAIL ") + c.name + ": value " + short_fmt(c.value) + ", target " +
           short_fmt(c.target) + ", stderr " + short_fmt(c.stderr_) + ", tolerance " + short_fmt(c.tolerance);
}

template <class Fn>
std::string to_csv(Fn&& write) {
    std::ostringstream os;
    write(os);
    return os.str();
}

// ---------------------------------------------------------------------------
// fbm checks

/// Probe node pairs as fractions of the horizon.
inline const std::vector<std::pair<double, double>>& probe_pairs() {
    static const std::vector<std::pair<double, double>> pairs{{0.125, 0.125}, {0.25, 0.5},  {0.25, 1.0},
                                                              {0.375, 0.875}, {0.5, 0.5},   {0.5, 0.75},
                                                              {0.75, 1.0},    {1.0, 1.0}};
    return pairs;
}

/// Sample E[B^H(t) B^H(s)] against the fBm covariance within `sigmas` stderr.
inline std::vector<Check> covariance_checks(const PathSet& ps, const std::string& label, double sigmas = 4.0) {
    if (!ps.has_bh()) throw DomainError("covariance check needs B^H");
    const Hurst h = *ps.hurst();
    const TimeGrid& g = ps.grid();
    std::vector<Check> out;
    std::vector<double> prod(ps.n_paths());
    for (const auto& [ft, fs] : probe_pairs()) {
        const auto node = [&g](double f) {
            return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(f * static_cast<double>(g.n_steps()))));
        };
        const std::size_t kt = node(ft), ks = node(fs);
        for (std::size_t p = 0; p < ps.n_paths(); ++p) prod[p] = ps.BH(p, 0)[kt] * ps.BH(p, 0)[ks];
        const auto m = mean_estimate(prod);
        Check c;
        c.name = label + "_cov_" + std::to_string(kt) + "_" + std::to_string(ks);
        c.value = m.mean;
        c.target = fbm_covariance(g.node(kt), g.node(ks), h);
        c.stderr_ = m.stderr_;
        c.tolerance = sigmas * m.stderr_;
        c.passed = std::fabs(c.value - c.target) <= c.tolerance;
        out.push_back(c);
    }
    return out;
}

/// Var B^H(T) of kernel-generated paths within `sigmas` stderr of T^{2H}, and
/// the exact discretization gap of the kernel representation decreasing over
/// n / 2^levels, ..., n.
inline std::vector<Check> kernel_variance_checks(const TimeGrid& g, Hurst h, std::size_t n_paths, std::uint64_t seed,
                                                 std::size_t levels, double sigmas = 4.0) {
    std::vector<Check> out;
    const auto ps = generate_mixed(g, h, 1, n_paths, seed);
    std::vector<double> sq(n_paths);
    for (std::size_t p = 0; p < n_paths; ++p) sq[p] = ps.BH(p, 0).back() * ps.BH(p, 0).back();
    const auto m = mean_estimate(sq);
    Check v;
    v.name = "kernel_variance_T_n" + std::to_string(g.n_steps());
    v.value = m.mean;
    v.target = std::pow(g.horizon(), 2.0 * h.value());
    v.stderr_ = m.stderr_;
    v.tolerance = sigmas * m.stderr_;
    v.passed = std::fabs(v.value - v.target) <= v.tolerance;
    out.push_back(v);

    double prev = INFINITY;
    for (std::size_t l = levels + 1; l-- > 0;) {
        const std::size_t factor = std::size_t{1} << l;
        if (g.n_steps() % factor != 0) throw DomainError("kernel refinement: n_steps not divisible by 2^levels");
        const TimeGrid gl = g.coarsened(factor);
        const KernelWeights w(gl, h);
        const double gap = std::fabs(w.discrete_variance(gl.n_steps()) - std::pow(gl.horizon(), 2.0 * h.value()));
        Check c;
        c.name = "kernel_gap_n" + std::to_string(gl.n_steps());
        c.value = gap;
        c.target = 0.0;
        c.tolerance = std::isfinite(prev) ? prev : gap;
        c.passed = !std::isfinite(prev) || gap < prev;
        out.push_back(c);
        prev = gap;
    }
    return out;
}

// ---------------------------------------------------------------------------
// transforms checks

struct NamedFunction {
    std::string name;
    std::function<double(double)> f;
};

inline std::vector<NamedFunction> isometry_functions() {
    return {{"one", [](double) { return 1.0; }},
            {"t", [](double t) { return t; }},
            {"sin2pit", [](double t) { return std::sin(2.0 * std::numbers::pi * t); }}};
}

/// int (Gamma* f)^2 dt against phi_norm_sq(f), relative error <= rel.
inline std::vector<Check> isometry_checks(const TimeGrid& g, Hurst h, double rel = 0.01) {
    std::vector<Check> out;
    for (const auto& nf : isometry_functions()) {
        const auto f = GridFunction::sample(g, nf.f);
        Check c;
        c.name = "isometry_" + nf.name;
        c.value = gamma_star_l2_sq(f, h);
        c.target = phi_norm_sq(f, h);
        c.tolerance = rel * std::fabs(c.target);
        c.passed = std::fabs(c.value - c.target) <= c.tolerance;
        out.push_back(c);
    }
    return out;
}

/// Monte Carlo transfer correlation for f(t) = 1 + t on common paths at
/// n / 2^levels, ..., n: final value >= min_corr and increasing.
inline std::vector<Check> transfer_checks(const TimeGrid& g, Hurst h, std::size_t n_paths, std::uint64_t seed,
                                          std::size_t levels, std::string* csv = nullptr, double min_corr = 0.99) {
    std::vector<Check> out;
    const auto fine = generate_mixed(g, h, 1, n_paths, seed);
    double prev = -INFINITY;
    TransferReport last;
    for (std::size_t l = levels + 1; l-- > 0;) {
        const auto ps = l == 0 ? fine : coarsen(fine, std::size_t{1} << l);
        const auto f = GridFunction::sample(ps.grid(), [](double t) { return 1.0 + t; });
        last = transfer_check(f, ps);
        Check c;
        c.name = "transfer_correlation_n" + std::to_string(ps.grid().n_steps());
        c.value = last.correlation;
        c.target = std::isfinite(prev) ? prev : last.correlation;
        c.passed = !std::isfinite(prev) || last.correlation > prev;
        out.push_back(c);
        prev = last.correlation;
    }
    Check fin;
    fin.name = "transfer_correlation_min";
    fin.value = last.correlation;
    fin.target = min_corr;
    fin.passed = last.correlation >= min_corr;
    out.push_back(fin);
    if (csv) *csv = to_csv([&](std::ostream& os) { write_transfer_csv(os, last); });
    return out;
}

// ---------------------------------------------------------------------------
// sde checks

/// max over nodes of the root mean square of Phi Psi - 1 on common paths at
/// n / 2^levels, ..., n; each halving must shrink it by at least min_factor.
inline std::vector<Check> fundamental_pair_checks(const CoefficientModel& m, const PathSet& fine, std::size_t levels,
                                                  double min_factor = 1.8) {
    std::vector<Check> out;
    double prev = INFINITY;
    for (std::size_t l = levels + 1; l-- > 0;) {
        const auto ps = l == 0 ? fine : coarsen(fine, std::size_t{1} << l);
        const auto xs = euler_mixed(m, ControlProcess::zero(), 1.0, ps);
        const auto phi = fundamental_phi(m, xs, ps), psi = fundamental_psi(m, xs, ps);
        const std::size_t nn = ps.grid().n_nodes(), np = ps.n_paths();
        double worst = 0.0;
        std::vector<double> sq(np);
        for (std::size_t k = 0; k < nn; ++k) {
            for (std::size_t p = 0; p < np; ++p) {
                const double e = phi.at(p, k) * psi.at(p, k) - 1.0;
                sq[p] = e * e;
            }
            worst = std::max(worst, std::sqrt(pairwise_sum(sq) / static_cast<double>(np)));
        }
        Check c;
        c.name = "phi_psi_n" + std::to_string(ps.grid().n_steps());
        c.value = worst;
        if (std::isfinite(prev)) {
            c.name += "_factor";
            c.value = prev / worst;
            c.target = min_factor;
            c.passed = c.value >= min_factor && worst < prev;
        } else {
            c.passed = true;
        }
        out.push_back(c);
        prev = worst;
    }
    return out;
}

/// E|y_direct(T) - y_explicit(T)|^2 for v = 1 on common paths, decreasing over levels.
inline std::vector<Check> variation_gap_checks(const CoefficientModel& m, const PathSet& fine, std::size_t levels) {
    std::vector<Check> out;
    const auto v = ControlProcess::constant(1.0);
    double prev = INFINITY;
    for (std::size_t l = levels + 1; l-- > 0;) {
        const auto ps = l == 0 ? fine : coarsen(fine, std::size_t{1} << l);
        const auto xs = euler_mixed(m, ControlProcess::zero(), 1.0, ps);
        const auto yd = variation_direct(m, xs, v, ps);
        const auto ye = variation_explicit(fundamental_phi(m, xs, ps), fundamental_psi(m, xs, ps), m, xs, v, ps);
        std::vector<double> gap(ps.n_paths());
        for (std::size_t p = 0; p < ps.n_paths(); ++p) {
            const double d = yd.X(p).back() - ye.X(p).back();
            gap[p] = d * d;
        }
        const auto ms = mean_estimate(gap);
        Check c;
        c.name = "variation_gap_n" + std::to_string(ps.grid().n_steps());
        c.value = ms.mean;
        c.stderr_ = ms.stderr_;
        c.target = std::isfinite(prev) ? prev : ms.mean;
        c.passed = !std::isfinite(prev) || ms.mean < prev;
        out.push_back(c);
        prev = ms.mean;
    }
    return out;
}

/// Linearization remainder on the nonlinear fixture: each metric decreasing in eps,
/// terminal ratios within [lo, hi].
inline std::vector<Check> lemma1_checks(const std::vector<ExperimentRow>& rows, double lo = 2.5, double hi = 6.0) {
    std::vector<Check> out;
    for (const std::string metric : {"terminal_l2", "sup_l2", "alpha_l2"}) {
        std::vector<ExperimentRow> r;
        for (const auto& row : rows)
            if (row.metric == metric) r.push_back(row);
        for (std::size_t i = 1; i < r.size(); ++i) {
            Check c;
            c.name = metric + "_eps" + short_fmt(r[i].epsilon);
            c.value = r[i].value;
            c.stderr_ = r[i].stderr_;
            c.target = r[i - 1].value;
            c.passed = r[i].value < r[i - 1].value;
            out.push_back(c);
            if (metric == "terminal_l2") {
                Check q;
                q.name = "terminal_ratio_eps" + short_fmt(r[i].epsilon);
                q.value = r[i].value > 0.0 ? r[i - 1].value / r[i].value : INFINITY;
                q.target = 4.0;
                q.tolerance = std::max(4.0 - lo, hi - 4.0);
                q.passed = q.value >= lo && q.value <= hi;
                out.push_back(q);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// adjoint checks

/// Adjoint inputs at a fixed control, owning everything they reference.
struct AdjointSetup {
    CoefficientModel model;
    ControlProcess control;
    PathSet paths;
    StatePath xs, phi, psi;
    CostModel cost;

    AdjointSetup(const LqSpec& s, ControlProcess u, PathSet ps)
        : model(lq_model(s, ps.grid())), control(std::move(u)), paths(std::move(ps)),
          xs(euler_mixed(model, control, s.x0, paths)), phi(fundamental_phi(model, xs, paths)),
          psi(fundamental_psi(model, xs, paths)), cost(lq_cost_model(s)) {}
    AdjointSetup(const AdjointSetup&) = delete;

    AdjointInputs inputs(const RegressionBasis& b = {}) const {
        return {model, xs, control, phi, psi, cost, paths, b};
    }
};

/// Riccati feedback of the LQ problem with its fractional term removed.
inline ControlProcess reference_feedback(const LqSpec& s, const TimeGrid& g) {
    LqSpec bm = s;
    bm.N = [](double) { return 0.0; };
    bm.hurst.reset();
    bm.independent_driver = false;
    return riccati_oracle(bm, g).feedback();
}

/// q formula against the path-bump oracle at every `stride`-th node.
inline std::vector<Check> q_consistency_checks(const AdjointInputs& in, const AdjointEstimate& est,
                                               std::size_t stride = 8, double sigmas = 3.0) {
    const TimeGrid& g = in.paths.grid();
    const auto bump = estimate_q_bump(in, est, 1e-3 * std::sqrt(g.dt()));
    std::vector<Check> out;
    for (std::size_t k = 0; k < g.n_steps(); k += stride) {
        const auto qf = est.q_mean(0, k);
        const auto& qb = bump.q[k];
        Check c;
        c.name = "q_formula_vs_bump_node" + std::to_string(k);
        c.value = qf.mean;
        c.target = qb.mean;
        c.stderr_ = std::hypot(qf.stderr_, qb.stderr_);
        c.tolerance = sigmas * c.stderr_;
        c.passed = std::fabs(c.value - c.target) <= c.tolerance;
        out.push_back(c);
    }
    return out;
}

/// Per-node BSDE residual means within `sigmas` stderr of zero.
inline std::vector<Check> bsde_node_checks(const BsdeReport& rep, const TimeGrid& g, double sigmas = 3.0) {
    std::vector<Check> out;
    for (std::size_t k = 0; k < rep.residual.size(); ++k) {
        Check c;
        c.name = "bsde_residual_n" + std::to_string(g.n_steps()) + "_node" + std::to_string(k);
        c.value = rep.residual[k].mean;
        c.stderr_ = rep.residual[k].stderr_;
        c.tolerance = sigmas * c.stderr_;
        c.passed = std::fabs(c.value) <= c.tolerance;
        out.push_back(c);
    }
    return out;
}

/// Stationarity residual means within `sigmas` stderr of zero at every node.
inline std::vector<Check> stationarity_checks(const std::vector<MeanEstimate>& res, const std::string& label,
                                              double sigmas = 3.0) {
    std::vector<Check> out;
    for (std::size_t k = 0; k < res.size(); ++k) {
        Check c;
        c.name = label + "_node" + std::to_string(k);
        c.value = res[k].mean;
        c.stderr_ = res[k].stderr_;
        c.tolerance = sigmas * c.stderr_;
        c.passed = std::fabs(c.value) <= c.tolerance;
        out.push_back(c);
    }
    return out;
}

/// Largest |mean| / stderr over nodes must exceed `sigmas`.
inline Check detection_check(const std::vector<MeanEstimate>& res, const std::string& name, double sigmas = 5.0) {
    Check c;
    c.name = name;
    for (const auto& r : res)
        if (r.stderr_ > 0.0) c.value = std::max(c.value, std::fabs(r.mean) / r.stderr_);
    c.target = sigmas;
    c.passed = c.value > sigmas;
    return c;
}

inline std::vector<MeanEstimate> stationarity_at(const LqSpec& s, const ControlProcess& u, const PathSet& ps,
                                                 const RegressionBasis& basis) {
    const AdjointSetup st(s, u, ps);
    const auto in = st.inputs(basis);
    return stationarity_residual(in, estimate_adjoint(in, false));
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline std::string report_text(const RunConfig& cfg, const Report& rep) {
    std::ostringstream os;
    os << "command = " << rep.command << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "grid = T " << short_fmt(cfg.T) << ", n_steps " << cfg.n_steps << ", dt " << short_fmt(cfg.grid().dt()) << "\n";
    os << "tolerances = picard_tol " << short_fmt(cfg.mc.tol) << ", damping " << short_fmt(cfg.mc.damping)
       << ", max_iterations " << cfg.mc.max_iterations << ", burn_in " << cfg.mc.burn_in
       << ", stderr multiples 3 (residuals, consistency), 4 (covariance), 5 (detection)\n";
    os << describe_config(cfg);
    for (const auto& n : rep.notes) os << "note: " << n << "\n";
    std::size_t failed = 0;
    for (const auto& c : rep.checks) {
        os << check_line(c) << "\n";
        if (!c.passed) ++failed;
    }
    os << "result = " << (failed == 0 ? "pass" : "fail") << " (" << rep.checks.size() - failed << "/"
       << rep.checks.size() << " checks)\n";
    os << "exit_code = " << rep.exit_code << "\n";
    return os.str();
}

inline void finish(const RunConfig& cfg, Report& rep) {
    if (rep.exit_code == kExitPass && !rep.passed()) rep.exit_code = kExitCheckFailure;
    rep.files.emplace_back("checks.csv", to_csv([&](std::ostream& os) { write_checks_csv(os, rep.checks); }));
    rep.files.emplace_back("report.txt", report_text(cfg, rep));
}

inline std::size_t levels_for(const RunConfig& cfg) {
    std::size_t l = cfg.mc.refinements - 1;
    while (l > 0 && cfg.n_steps % (std::size_t{1} << l) != 0) --l;
    return l;
}

}  // namespace detail

/// Paths (B and kernel-built B^H) as CSV plus the covariance validation.
inline Report cmd_paths(const RunConfig& cfg) {
    Report rep;
    rep.command = "paths";
    const auto ps = generate_mixed(cfg.grid(), cfg.hurst, 1, cfg.n_paths, cfg.seed);
    rep.files.emplace_back("paths.csv", to_csv([&](std::ostream& os) { write_paths_csv(os, ps); }));
    rep.add(covariance_checks(ps, "kernel"));
    detail::finish(cfg, rep);
    return rep;
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"covariance", "operators", "variation", "lemma1", "bsde"};
    return names;
}

/// Runs one suite; throws ConfigError for an unknown name.
inline Report cmd_verify(const RunConfig& cfg, const std::string& suite) {
    if (std::find(suite_names().begin(), suite_names().end(), suite) == suite_names().end())
        throw ConfigError("unknown suite '" + suite + "' (covariance, operators, variation, lemma1, bsde)");
    Report rep;
    rep.command = "verify " + suite;
    const TimeGrid g = cfg.grid();
    const std::size_t levels = detail::levels_for(cfg);
    if (suite == "covariance") {
        const auto chol = fbm_from_cholesky(g, cfg.hurst, 1, cfg.n_paths, cfg.seed);
        rep.add(covariance_checks(chol, "cholesky"));
        rep.add(kernel_variance_checks(g, cfg.hurst, cfg.n_paths, cfg.seed + 1, levels));
    } else if (suite == "operators") {
        std::string csv;
        rep.add(isometry_checks(g, cfg.hurst));
        rep.add(transfer_checks(g, cfg.hurst, cfg.n_paths, cfg.seed, levels, &csv));
        rep.files.emplace_back("transfer.csv", std::move(csv));
    } else if (suite == "variation") {
        const auto fine = generate_mixed(g, cfg.hurst, 1, cfg.n_paths, cfg.seed);
        const auto m = linear_fixture();
        rep.add(fundamental_pair_checks(m, fine, levels, 1.0));
        rep.add(variation_gap_checks(m, fine, levels));
        rep.notes.push_back("linear fixture: b = -x + u, sigma = 0.2 x + 0.3 u, gamma = 0.3 x + 0.5 u, x0 = 1");
    } else if (suite == "lemma1") {
        const auto ps = generate_mixed(g, cfg.hurst, 1, cfg.n_paths, cfg.seed);
        const auto rows = lemma1_experiment(nonlinear_fixture(), ControlProcess::zero(), ControlProcess::constant(1.0),
                                            0.5, cfg.mc.lemma1_epsilons, ps, default_alpha(cfg.hurst));
        rep.files.emplace_back("lemma1.csv", to_csv([&](std::ostream& os) { write_experiment_csv(os, rows); }));
        rep.add(lemma1_checks(rows));
        rep.notes.push_back("nonlinear fixture: b = sin x + u, sigma = cos x, gamma = 0.5 + 0.1 sin x, x0 = 0.5, v = 1");
    } else {
        const RegressionBasis basis{cfg.mc.basis_degree, cfg.mc.ridge};
        double prev = INFINITY;
        for (std::size_t l = levels + 1; l-- > 0;) {
            const TimeGrid gl = g.coarsened(std::size_t{1} << l);
            const AdjointSetup st(cfg.lq, reference_feedback(cfg.lq, gl), lq_paths(cfg.lq, gl, cfg.n_paths, cfg.seed));
            const auto in = st.inputs(basis);
            const auto est = estimate_adjoint(in);
            const auto bsde = bsde_residual(in, est);
            Check ms;
            ms.name = "bsde_mean_square_n" + std::to_string(gl.n_steps());
            ms.value = bsde.mean_square_avg;
            ms.target = std::isfinite(prev) ? prev : bsde.mean_square_avg;
            ms.passed = !std::isfinite(prev) || bsde.mean_square_avg < prev;
            rep.checks.push_back(ms);
            prev = bsde.mean_square_avg;
            if (l == 0) {
                rep.add(q_consistency_checks(in, est));
                rep.add(bsde_node_checks(bsde, gl));
                rep.files.emplace_back("adjoint.csv", to_csv([&](std::ostream& os) { write_adjoint_csv(os, est); }));
                rep.files.emplace_back("bsde_residual.csv",
                                       to_csv([&](std::ostream& os) { write_residual_csv(os, gl, bsde.residual); }));
            }
        }
        rep.notes.push_back("control: Riccati feedback of the LQ problem with N = 0");
    }
    detail::finish(cfg, rep);
    return rep;
}

/// Picard solve, optimality sweep, convexity, uniqueness proxy, and the
/// Riccati comparison (N = 0) or the stationarity table (N != 0).
inline Report cmd_solve_lq(const RunConfig& cfg) {
    Report rep;
    rep.command = "solve-lq";
    const TimeGrid g = cfg.grid();
    const LqSpec& s = cfg.lq;
    const auto ps = lq_paths(s, g, cfg.n_paths, cfg.seed);
    const auto opt = cfg.mc.picard();
    const auto sol = lq_picard_solve(s, ps, opt);
    rep.files.emplace_back("iterations.csv", to_csv([&](std::ostream& os) { write_iteration_csv(os, sol.log); }));
    rep.notes.push_back("picard iterations " + std::to_string(sol.log.size()) + ", converged " +
                        (sol.converged ? "yes" : "no") + ", monotone " + (sol.monotone ? "yes" : "no"));
    if (!sol.converged) {
        rep.exit_code = kExitNonConvergence;
        detail::finish(cfg, rep);
        return rep;
    }
    rep.files.emplace_back("control.csv", to_csv([&](std::ostream& os) { write_control_csv(os, sol.control); }));
    rep.files.emplace_back("adjoint.csv", to_csv([&](std::ostream& os) { write_adjoint_csv(os, sol.adjoint); }));

    Check cost;
    cost.name = "cost";
    cost.value = sol.cost.J;
    cost.stderr_ = sol.cost.stderr_;
    cost.passed = std::isfinite(sol.cost.J);
    if (!s.fractional(g)) {
        const auto r = riccati_oracle(s, g);
        cost.name = "riccati_agreement";
        cost.target = r.J;
        cost.tolerance = 3.0 * sol.cost.stderr_ + 0.02 * r.J;
        cost.passed = std::fabs(cost.value - cost.target) <= cost.tolerance;
        rep.notes.push_back("riccati: J_mc " + short_fmt(sol.cost.J) + " +- " + short_fmt(sol.cost.stderr_) +
                            ", J_riccati " + short_fmt(r.J) + ", |diff| " + short_fmt(std::fabs(sol.cost.J - r.J)) +
                            " <= " + short_fmt(cost.tolerance) + (cost.passed ? " agree" : " disagree"));
    }
    rep.checks.push_back(cost);

    if (s.fractional(g) || s.independent_driver) {
        const auto res = stationarity_at(s, sol.process, ps, opt.basis);
        rep.files.emplace_back("stationarity.csv", to_csv([&](std::ostream& os) { write_residual_csv(os, g, res); }));
        rep.add(stationarity_checks(res, "stationarity"));
        const auto bad = stationarity_at(s, combine(1.2, sol.process, 0.0, sol.process), ps, opt.basis);
        rep.checks.push_back(detection_check(bad, "stationarity_perturbed_20pct_max_z"));
    }

    const auto dirs = random_directions(ps, cfg.mc.n_directions, cfg.mc.direction_seed);
    const auto sweep = optimality_sweep(s, sol.process, dirs, cfg.mc.epsilons, ps);
    rep.files.emplace_back("sweep.csv", to_csv([&](std::ostream& os) { write_sweep_csv(os, sweep); }));
    Check sw;
    sw.name = "optimality_sweep";
    for (const auto& r : sweep.rows) sw.value += (r.difference_ok && r.derivative_ok) ? 1.0 : 0.0;
    sw.target = static_cast<double>(sweep.rows.size());
    sw.passed = sweep.passed();
    rep.checks.push_back(sw);

    const auto cx = convexity_check(s, combine(1.0, sol.process, 1.0, dirs[0]),
                                    dirs.size() > 1 ? dirs[1] : ControlProcess::zero(), ps);
    Check cv;
    cv.name = "convexity_slack";
    cv.value = cx.slack;
    cv.stderr_ = cx.slack_stderr;
    cv.tolerance = 3.0 * cx.slack_stderr;
    cv.passed = cx.holds;
    rep.checks.push_back(cv);

    const auto other = lq_picard_solve(s, ps, opt, 1.0);
    Check un;
    un.name = "uniqueness_distance";
    un.value = other.converged ? control_distance(sol.control, other.control, sol.xs) : INFINITY;
    un.tolerance = 5.0 * opt.tol;
    un.passed = other.converged && un.value <= un.tolerance;
    rep.checks.push_back(un);

    detail::finish(cfg, rep);
    return rep;
}

}  // namespace mfbm
