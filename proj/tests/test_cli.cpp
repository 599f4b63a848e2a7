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

// Unit tests for run configuration and commands.

#include <catch_amalgamated.hpp>

#include <cmath>
#include <string>

#include "mfbm/commands.hpp"

using namespace mfbm;
using Catch::Approx;
using nlohmann::json;

namespace {

json tiny() { return {{"experiment", "tiny"}, {"n_steps", 16}, {"n_paths", 200}, {"seed", 4}}; }

json with(json j, const std::string& k, json v) {
    j[k] = std::move(v);
    return j;
}

std::string check_names(const Report& r) {
    std::string s;
    for (const auto& c : r.checks) s += c.name + (c.passed ? "+ " : "- ");
    return s;
}

}  // namespace

TEST_CASE("config defaults are filled and echoed", "[config]") {
    const auto c = parse_config(json{{"experiment", "x"}});
    CHECK(c.hurst.value() == 0.75);
    CHECK(c.n_steps == 256);
    CHECK(c.n_paths == 20000);
    CHECK(c.mc.direction_seed == c.seed + 1);
    CHECK(c.mc.tol == 1e-3);
    CHECK(c.lq.A(0.3) == -1.0);
    CHECK_FALSE(c.lq.hurst.has_value());
    CHECK(c.defaulted.size() == 27);
    const auto text = describe_config(c);
    CHECK(text.find("n_steps = 256  (default)") != std::string::npos);
    CHECK(text.find("experiment = \"x\"\n") != std::string::npos);
    CHECK(text.find("out =") == std::string::npos);
}

TEST_CASE("config schema errors", "[config]") {
    CHECK_THROWS_AS(parse_config(json{{"hurst", 0.75}}), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "hurst", 0.4)), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "hurst", 1.0)), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "n_step", 3)), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "n_steps", -4)), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "n_steps", 2.5)), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "n_paths", 1)), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "seed", "1")), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "damping", 0.0)), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "epsilons", json::array())), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "epsilons", {0.1, 2.0})), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "A", {{"fn", "exp"}})), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "A", {{"fn", "sin"}, {"c", 1.0}})), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "A", {{"fn", "const"}})), ConfigError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "A", "x")), ConfigError);
    CHECK_THROWS_AS(parse_config(json::array()), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/run.json"), ConfigError);
}

TEST_CASE("config model invariants", "[config]") {
    CHECK_THROWS_AS(parse_config(with(tiny(), "R", 0.0)), DomainError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "R", {{"fn", "sin"}, {"a", 0.0}, {"b", 1.0}})), DomainError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "Q", -1.0)), DomainError);
    CHECK_THROWS_AS(parse_config(with(tiny(), "G", 0.0)), DomainError);
    const auto frac = parse_config(with(tiny(), "N", 0.3));
    REQUIRE(frac.lq.hurst.has_value());
    CHECK(frac.lq.hurst->value() == 0.75);
}

TEST_CASE("coefficient catalog", "[config]") {
    auto j = tiny();
    j["A"] = {{"fn", "affine"}, {"a", 1.0}, {"b", -2.0}};
    j["M"] = {{"fn", "sin"}, {"a", 0.1}, {"b", 0.2}, {"omega", 3.0}, {"phase", 0.5}};
    j["Q"] = {{"fn", "cos"}, {"a", 1.0}, {"b", 0.5}};
    j["R"] = {{"fn", "const"}, {"value", 2.0}};
    const auto c = parse_config(j);
    CHECK(c.lq.A(0.25) == Approx(0.5));
    CHECK(c.lq.M(0.4) == Approx(0.1 + 0.2 * std::sin(1.2 + 0.5)));
    CHECK(c.lq.Q(0.7) == Approx(1.0 + 0.5 * std::cos(0.7)));
    CHECK(c.lq.R(0.9) == 2.0);
    CHECK(c.normalized["Q"]["omega"] == 1.0);
    CHECK(c.normalized["A"]["fn"] == "affine");
}

TEST_CASE("config hash", "[config]") {
    const auto a = parse_config(tiny());
    const auto b = parse_config(with(tiny(), "out", "elsewhere"));
    const auto explicit_default = parse_config(with(tiny(), "tol", 1e-3));
    const auto c = parse_config(with(tiny(), "seed", 5));
    CHECK(a.hash().size() == 16);
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() == explicit_default.hash());
    CHECK(a.hash() != c.hash());
    CHECK(detail::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("paths command", "[command]") {
    const auto c = parse_config(tiny());
    const auto r = cmd_paths(c);
    CHECK(r.exit_code == kExitPass);
    INFO(check_names(r));
    CHECK(r.checks.size() == 8);
    REQUIRE(r.file("paths.csv"));
    CHECK(r.file("paths.csv")->rfind("path,dim,node,t,B,BH\n0,0,0,0,0,0\n", 0) == 0);
    REQUIRE(r.file("checks.csv"));
    CHECK(r.file("checks.csv")->rfind("check,value,target,stderr,tolerance,pass\n", 0) == 0);
    const auto& report = *r.file("report.txt");
    for (const char* key : {"config_hash = ", "seed = 4", "grid = T 1, n_steps 16", "tolerances = ", "exit_code = 0"})
        CHECK(report.find(key) != std::string::npos);
}

TEST_CASE("verify command", "[command]") {
    const auto c = parse_config(tiny());
    CHECK_THROWS_AS(cmd_verify(c, "unknown"), ConfigError);

    const auto ops = cmd_verify(parse_config(with(with(tiny(), "n_steps", 256), "n_paths", 500)), "operators");
    INFO(check_names(ops));
    CHECK(ops.exit_code == kExitPass);
    CHECK(ops.file("transfer.csv")->rfind("name,value,stderr\ncorrelation,", 0) == 0);

    const auto var = cmd_verify(parse_config(with(with(tiny(), "n_steps", 32), "n_paths", 500)), "variation");
    INFO(check_names(var));
    CHECK(var.exit_code == kExitPass);
    CHECK(var.checks.size() == 6);

    const auto l1 = cmd_verify(parse_config(with(tiny(), "n_paths", 1000)), "lemma1");
    INFO(check_names(l1));
    CHECK(l1.exit_code == kExitPass);
    CHECK(l1.file("lemma1.csv")->rfind("epsilon,metric,value,stderr\n", 0) == 0);

    const auto bs = cmd_verify(parse_config(with(with(tiny(), "n_steps", 32), "n_paths", 2000)), "bsde");
    REQUIRE(bs.file("adjoint.csv"));
    CHECK(bs.file("adjoint.csv")->rfind("node,t,p_mean,p_stderr,q_mean,q_stderr\n", 0) == 0);
    CHECK(bs.file("bsde_residual.csv")->rfind("node,t,mean,stderr\n", 0) == 0);
}

TEST_CASE("a failed check gives exit code 1", "[command]") {
    // on 8 steps the isometry misses its 1% tolerance
    const auto r = cmd_verify(parse_config(with(tiny(), "n_steps", 8)), "operators");
    CHECK(r.exit_code == kExitCheckFailure);
    CHECK(r.file("report.txt")->find("FAIL ") != std::string::npos);
}

TEST_CASE("solve-lq command", "[command]") {
    SECTION("Brownian fixture") {
        auto j = with(with(tiny(), "n_steps", 32), "n_paths", 2000);
        j["tol"] = 1e-6;
        const auto r = cmd_solve_lq(parse_config(j));
        INFO(check_names(r));
        CHECK(r.exit_code == kExitPass);
        CHECK(r.file("report.txt")->find("note: riccati: J_mc ") != std::string::npos);
        CHECK(r.file("stationarity.csv") == nullptr);
        for (const char* f : {"iterations.csv", "control.csv", "adjoint.csv", "sweep.csv", "checks.csv"})
            CHECK(r.file(f) != nullptr);
    }
    SECTION("mixed fixture") {
        auto j = with(with(tiny(), "n_steps", 32), "n_paths", 2000);
        j["tol"] = 1e-6;
        j["N"] = 0.3;
        const auto r = cmd_solve_lq(parse_config(j));
        INFO(check_names(r));
        CHECK(r.exit_code == kExitPass);
        REQUIRE(r.file("stationarity.csv"));
        CHECK(r.file("stationarity.csv")->rfind("node,t,mean,stderr\n", 0) == 0);
        CHECK(r.file("report.txt")->find("riccati") == std::string::npos);
    }
    SECTION("non-convergence") {
        const auto r = cmd_solve_lq(parse_config(with(tiny(), "max_iterations", 2)));
        CHECK(r.exit_code == kExitNonConvergence);
        REQUIRE(r.file("iterations.csv"));
        CHECK(r.file("control.csv") == nullptr);
    }
}

TEST_CASE("commands do not depend on the worker count", "[command][determinism]") {
    const auto c = parse_config(with(tiny(), "N", 0.3));
    set_worker_count(1);
    const auto a = cmd_solve_lq(c);
    const auto pa = cmd_verify(c, "covariance");
    set_worker_count(4);
    const auto b = cmd_solve_lq(c);
    const auto pb = cmd_verify(c, "covariance");
    set_worker_count(1);
    CHECK(a.files == b.files);
    CHECK(pa.files == pb.files);
}
