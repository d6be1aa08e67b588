// Copyright 2026 The ionhop Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "CLI11.hpp"

#include "ionhop/cli.hpp"

int main(int argc, char** argv) {
    using namespace ionhop;
    CLI::App app{"ionhop: phonon-hopping Hamiltonian design for trapped-ion chains"};
    app.require_subcommand(1);
    cli::Options opt;
    std::string preset;
    std::uint64_t seed = 0;
    for (const char* name : {"modes", "kmatrix", "compile", "evolve", "verify"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", opt.config, "JSON config file")->required();
        sub->add_option("--out", opt.out, "output directory")->required();
        sub->add_option("--preset", preset, "named preset, overrides the config");
        sub->add_option("--seed", seed, "RNG seed, overrides the config");
        sub->add_flag("--force", opt.force, "proceed despite a dispersive-regime violation");
        sub->callback([&opt, sub] { opt.command = sub->get_name(); });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage errors are config errors.
        const int rc = app.exit(e);
        return rc == 0 ? 0 : cli::exit_config;
    }
    for (CLI::App* sub : app.get_subcommands()) {
        if (sub->count("--preset")) opt.preset = preset;
        if (sub->count("--seed")) opt.seed = seed;
    }
    return cli::run(opt);
}
