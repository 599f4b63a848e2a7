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

// Run configuration: a flat JSON object, validated before any computation.
//
//   experiment      string, required
//   hurst           number in (1/2, 1)                        default 0.75
//   T               number > 0                                default 1
//   n_steps         integer >= 1                              default 256
//   n_paths         integer >= 2                              default 20000
//   seed            integer >= 0                              default 1
//   A At M Mt N Q R coefficient                               defaults -1 1 0.2 0 0 1 1
//   G x0            number                                    defaults 1 1
//   independent_driver  bool                                  default false
//   basis_degree    integer in [1, 4]                         default 2
//   ridge           number >= 0                               default 1e-8
//   damping         number in (0, 1]                          default 0.5
//   tol             number > 0                                default 1e-3
//   max_iterations  integer >= 1                              default 50
//   burn_in         integer >= 0                              default 3
//   epsilons        list of numbers in (0, 1]                 default [0.05, 0.1, 0.2]
//   n_directions    integer >= 1                              default 8
//   direction_seed  integer >= 0                              default seed + 1
//   lemma1_epsilons list of numbers in (0, 1]                 default [0.2, 0.1, 0.05, 0.025]
//   refinements     integer in [2, 6]                         default 3
//   out             string                                    default "out"
//
// A coefficient is a number or an object from the built-in catalog:
//   {"fn": "const",  "value": c}
//   {"fn": "affine", "a": a, "b": b}                               a + b t
//   {"fn": "sin",    "a": a, "b": b, "omega": w, "phase": f}       a + b sin(w t + f)
//   {"fn": "cos",    "a": a, "b": b, "omega": w, "phase": f}       a + b cos(w t + f)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "mfbm/core.hpp"
#include "mfbm/lq.hpp"
#include "mfbm/sde.hpp"

namespace mfbm {

struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct McOptions {
    std::size_t basis_degree = 2;
    double ridge = 1e-8;
    double damping = 0.5;
    double tol = 1e-3;
    std::size_t max_iterations = 50;
    std::size_t burn_in = 3;
    std::vector<double> epsilons{0.05, 0.1, 0.2};
    std::size_t n_directions = 8;
    std::uint64_t direction_seed = 2;
    std::vector<double> lemma1_epsilons{0.2, 0.1, 0.05, 0.025};
    std::size_t refinements = 3;

    PicardOptions picard() const {
        PicardOptions o;
        o.damping = damping;
        o.max_iterations = max_iterations;
        o.tol = tol;
        o.burn_in = burn_in;
        o.basis = {basis_degree, ridge};
        return o;
    }
};

struct RunConfig {
    std::string experiment;
    Hurst hurst{0.75};
    double T = 1.0;
    std::size_t n_steps = 256;
    std::size_t n_paths = 20000;
    std::uint64_t seed = 1;
    LqSpec lq;
    McOptions mc;
    std::string out = "out";
    nlohmann::json normalized;          // every field, defaults filled in
    std::vector<std::string> defaulted; // fields absent from the input

    TimeGrid grid() const { return TimeGrid(T, n_steps); }

    /// First 16 hex digits of SHA-256 over the normalized config without "out".
    std::string hash() const;
};

namespace detail {

inline const std::set<std::string>& config_keys() {
    static const std::set<std::string> keys{
        "experiment", "hurst", "T", "n_steps", "n_paths", "seed", "A", "At", "M", "Mt", "N", "Q", "R", "G", "x0",
        "independent_driver", "basis_degree", "ridge", "damping", "tol", "max_iterations", "burn_in", "epsilons",
        "n_directions", "direction_seed", "lemma1_epsilons", "refinements", "out"};
    return keys;
}

inline std::string sha256_hex(const std::string& s) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(s.data(), s.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

class ConfigReader {
public:
    explicit ConfigReader(const nlohmann::json& j) : j_(j) {
        if (!j.is_object()) throw ConfigError("config: top level must be an object");
        for (const auto& [k, v] : j.items())
            if (!config_keys().count(k)) throw ConfigError("config: unknown field '" + k + "'");
    }

    bool has(const std::string& k) const { return j_.contains(k); }

    double number(const std::string& k, double def) {
        if (!mark(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number()) throw ConfigError("config: '" + k + "' must be a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError("config: '" + k + "' must be finite");
        return d;
    }

    std::uint64_t integer(const std::string& k, std::uint64_t def) {
        if (!mark(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
            throw ConfigError("config: '" + k + "' must be a nonnegative integer");
        return v.get<std::uint64_t>();
    }

    bool boolean(const std::string& k, bool def) {
        if (!mark(k)) return def;
        if (!j_.at(k).is_boolean()) throw ConfigError("config: '" + k + "' must be true or false");
        return j_.at(k).get<bool>();
    }

    std::string string(const std::string& k, const std::optional<std::string>& def) {
        if (!mark(k)) {
            if (!def) throw ConfigError("config: '" + k + "' is required");
            return *def;
        }
        if (!j_.at(k).is_string()) throw ConfigError("config: '" + k + "' must be a string");
        return j_.at(k).get<std::string>();
    }

    std::vector<double> numbers(const std::string& k, const std::vector<double>& def) {
        if (!mark(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_array() || v.empty()) throw ConfigError("config: '" + k + "' must be a nonempty list of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number()) throw ConfigError("config: '" + k + "' must be a nonempty list of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

    // number or catalog object; returns the function and its canonical form
    std::pair<TimeFn, nlohmann::json> coefficient(const std::string& k, double def) {
        nlohmann::json v = def;
        if (mark(k)) v = j_.at(k);
        const auto fail = [&k](const std::string& why) { return ConfigError("config: coefficient '" + k + "': " + why); };
        if (v.is_number()) {
            const double c = v.get<double>();
            return {[c](double) { return c; }, nlohmann::json{{"fn", "const"}, {"value", c}}};
        }
        if (!v.is_object() || !v.contains("fn") || !v.at("fn").is_string())
            throw fail("expected a number or an object with a string 'fn'");
        const std::string fn = v.at("fn").get<std::string>();
        std::set<std::string> allowed;
        if (fn == "const") allowed = {"fn", "value"};
        else if (fn == "affine") allowed = {"fn", "a", "b"};
        else if (fn == "sin" || fn == "cos") allowed = {"fn", "a", "b", "omega", "phase"};
        else throw fail("unknown function '" + fn + "' (const, affine, sin, cos)");
        for (const auto& [name, _] : v.items())
            if (!allowed.count(name)) throw fail("unexpected parameter '" + name + "'");
        const auto param = [&](const char* name, double d) {
            if (!v.contains(name)) return d;
            if (!v.at(name).is_number()) throw fail(std::string("'") + name + "' must be a number");
            return v.at(name).get<double>();
        };
        if (fn == "const") {
            if (!v.contains("value")) throw fail("'value' is required");
            const double c = param("value", 0.0);
            return {[c](double) { return c; }, nlohmann::json{{"fn", "const"}, {"value", c}}};
        }
        const double a = param("a", 0.0), b = param("b", 0.0);
        if (fn == "affine")
            return {[a, b](double t) { return a + b * t; }, nlohmann::json{{"fn", "affine"}, {"a", a}, {"b", b}}};
        const double w = param("omega", 1.0), ph = param("phase", 0.0);
        nlohmann::json canon{{"fn", fn}, {"a", a}, {"b", b}, {"omega", w}, {"phase", ph}};
        if (fn == "sin") return {[a, b, w, ph](double t) { return a + b * std::sin(w * t + ph); }, canon};
        return {[a, b, w, ph](double t) { return a + b * std::cos(w * t + ph); }, canon};
    }

    std::vector<std::string> defaulted;

private:
    bool mark(const std::string& k) {
        if (j_.contains(k)) return true;
        defaulted.push_back(k);
        return false;
    }

    const nlohmann::json& j_;
};

}  // namespace detail

inline std::string RunConfig::hash() const {
    auto j = normalized;
    j.erase("out");
    return detail::sha256_hex(j.dump()).substr(0, 16);
}

/// Parses and validates; throws ConfigError (schema) or DomainError (model invariants).
inline RunConfig parse_config(const nlohmann::json& j) {
    detail::ConfigReader r(j);
    RunConfig c;
    nlohmann::json n;
    const auto range = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError("config: " + what);
    };

    c.experiment = r.string("experiment", std::nullopt);
    range(!c.experiment.empty(), "'experiment' must be nonempty");
    const double h = r.number("hurst", 0.75);
    range(h > 0.5 && h < 1.0, "'hurst' must lie in (1/2, 1)");
    c.hurst = Hurst(h);
    c.T = r.number("T", 1.0);
    range(c.T > 0.0, "'T' must be positive");
    c.n_steps = r.integer("n_steps", 256);
    range(c.n_steps >= 1 && c.n_steps <= (1u << 16), "'n_steps' must lie in [1, 65536]");
    c.n_paths = r.integer("n_paths", 20000);
    range(c.n_paths >= 2, "'n_paths' must be at least 2");
    c.seed = r.integer("seed", 1);
    n["experiment"] = c.experiment;
    n["hurst"] = h;
    n["T"] = c.T;
    n["n_steps"] = c.n_steps;
    n["n_paths"] = c.n_paths;
    n["seed"] = c.seed;

    const std::pair<const char*, double> coefs[] = {{"A", -1.0}, {"At", 1.0}, {"M", 0.2}, {"Mt", 0.0},
                                                    {"N", 0.0},  {"Q", 1.0},  {"R", 1.0}};
    TimeFn* slots[] = {&c.lq.A, &c.lq.At, &c.lq.M, &c.lq.Mt, &c.lq.N, &c.lq.Q, &c.lq.R};
    for (std::size_t i = 0; i < 7; ++i) {
        auto [fn, canon] = r.coefficient(coefs[i].first, coefs[i].second);
        *slots[i] = std::move(fn);
        n[coefs[i].first] = canon;
    }
    c.lq.G = r.number("G", 1.0);
    c.lq.x0 = r.number("x0", 1.0);
    c.lq.T = c.T;
    c.lq.independent_driver = r.boolean("independent_driver", false);
    n["G"] = c.lq.G;
    n["x0"] = c.lq.x0;
    n["independent_driver"] = c.lq.independent_driver;

    auto& mc = c.mc;
    mc.basis_degree = r.integer("basis_degree", 2);
    range(mc.basis_degree >= 1 && mc.basis_degree <= 4, "'basis_degree' must lie in [1, 4]");
    mc.ridge = r.number("ridge", 1e-8);
    range(mc.ridge >= 0.0, "'ridge' must be nonnegative");
    mc.damping = r.number("damping", 0.5);
    range(mc.damping > 0.0 && mc.damping <= 1.0, "'damping' must lie in (0, 1]");
    mc.tol = r.number("tol", 1e-3);
    range(mc.tol > 0.0, "'tol' must be positive");
    mc.max_iterations = r.integer("max_iterations", 50);
    range(mc.max_iterations >= 1, "'max_iterations' must be at least 1");
    mc.burn_in = r.integer("burn_in", 3);
    mc.epsilons = r.numbers("epsilons", mc.epsilons);
    for (double e : mc.epsilons) range(e > 0.0 && e <= 1.0, "'epsilons' entries must lie in (0, 1]");
    mc.n_directions = r.integer("n_directions", 8);
    range(mc.n_directions >= 1, "'n_directions' must be at least 1");
    mc.direction_seed = r.integer("direction_seed", c.seed + 1);
    mc.lemma1_epsilons = r.numbers("lemma1_epsilons", mc.lemma1_epsilons);
    for (double e : mc.lemma1_epsilons) range(e > 0.0 && e <= 1.0, "'lemma1_epsilons' entries must lie in (0, 1]");
    mc.refinements = r.integer("refinements", 3);
    range(mc.refinements >= 2 && mc.refinements <= 6, "'refinements' must lie in [2, 6]");
    n["basis_degree"] = mc.basis_degree;
    n["ridge"] = mc.ridge;
    n["damping"] = mc.damping;
    n["tol"] = mc.tol;
    n["max_iterations"] = mc.max_iterations;
    n["burn_in"] = mc.burn_in;
    n["epsilons"] = mc.epsilons;
    n["n_directions"] = mc.n_directions;
    n["direction_seed"] = mc.direction_seed;
    n["lemma1_epsilons"] = mc.lemma1_epsilons;
    n["refinements"] = mc.refinements;

    c.out = r.string("out", std::string("out"));
    n["out"] = c.out;

    const TimeGrid g = c.grid();
    if (c.lq.fractional(g)) c.lq.hurst = c.hurst;
    c.lq.validate(g);

    c.normalized = std::move(n);
    c.defaulted = std::move(r.defaulted);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return parse_config(j);
}

/// "key = value" lines for every field except "out", defaulted ones marked.
inline std::string describe_config(const RunConfig& c) {
    std::ostringstream os;
    os << "config_hash = " << c.hash() << "\n";
    for (const auto& [k, v] : c.normalized.items()) {
        if (k == "out") continue;
        const bool def = std::find(c.defaulted.begin(), c.defaulted.end(), k) != c.defaulted.end();
        os << k << " = " << v.dump() << (def ? "  (default)" : "") << "\n";
    }
    return os.str();
}

}  // namespace mfbm
