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

// mfbm: path generation, verification suites and the LQ solver.
//
//   mfbm paths    --config run.json [--out dir] [--workers n]
//   mfbm verify   <covariance|operators|variation|lemma1|bsde> --config run.json
//   mfbm solve-lq --config run.json
//
// Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 non-convergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "mfbm/commands.hpp"

namespace fs = std::filesystem;

namespace {

void write_files(const mfbm::Report& rep, const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& [name, contents] : rep.files) {
        std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write " + (dir / name).string());
        os << contents;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed fractional Brownian motion: paths, verification suites, LQ control"};
    app.require_subcommand(1);

    std::string config_path, out_dir, suite;
    unsigned workers = 1;
    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", out_dir, "output directory (overrides the config)");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 1024u));
    };
    auto* paths = app.add_subcommand("paths", "generate paths and validate their covariance");
    auto* verify = app.add_subcommand("verify", "run a verification suite");
    auto* solve = app.add_subcommand("solve-lq", "solve the LQ problem and check optimality");
    common(paths);
    common(verify);
    common(solve);
    verify->add_option("suite", suite, "covariance | operators | variation | lemma1 | bsde")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return mfbm::kExitUsage;
    }

    mfbm::set_worker_count(workers);
    mfbm::RunConfig cfg;
    mfbm::Report rep;
    try {
        cfg = mfbm::load_config(config_path);
        if (!out_dir.empty()) cfg.out = out_dir;
        if (verify->parsed()) {
            rep = mfbm::cmd_verify(cfg, suite);
        } else if (solve->parsed()) {
            rep = mfbm::cmd_solve_lq(cfg);
        } else {
            rep = mfbm::cmd_paths(cfg);
        }
    } catch (const mfbm::ConfigError& e) {
        std::cerr << "mfbm: " << e.what() << "\n";
        return mfbm::kExitUsage;
    } catch (const mfbm::DomainError& e) {
        std::cerr << "mfbm: invalid configuration: " << e.what() << "\n";
        return mfbm::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "mfbm: " << e.what() << "\n";
        return mfbm::kExitCheckFailure;
    }

    try {
        write_files(rep, cfg.out);
    } catch (const std::exception& e) {
        std::cerr << "mfbm: " << e.what() << "\n";
        return mfbm::kExitCheckFailure;
    }
    std::cout << *rep.file("report.txt");
    return rep.exit_code;
}
