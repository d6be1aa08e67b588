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

// Run configuration: a single JSON document, strictly validated. A named
// preset supplies the trap, the drive and per-command defaults; explicit
// sections replace the preset's. Every default is materialized in the echo,
// and numbers are kept in their config units (Hz, s, m, kg) so the echo
// reproduces itself byte for byte.

#ifndef IONHOP_CONFIG_HPP
#define IONHOP_CONFIG_HPP

#include <optional>
#include <string>
#include <vector>

#include "ionhop/compiler.hpp"
#include "ionhop/crystal.hpp"
#include "ionhop/drive.hpp"
#include "ionhop/effective.hpp"
#include "ionhop/evolve.hpp"
#include "ionhop/io.hpp"
#include "ionhop/oracle.hpp"
#include "ionhop/presets.hpp"

namespace ionhop::config {

using io::json;

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"fig1c", "fig2a", "fig2b", "fig2c", "uniform", "oracle", "rabi"};
    return names;
}

struct TrapSection {
    std::size_t n_ions = 1;
    double axial_quadratic_hz2 = 0.0;  // (omega / 2 pi)^2 coefficient
    double axial_quartic_hz2_per_m2 = 0.0;
    double radial_com_hz = 0.0;
    double ion_mass_kg = constants::yb171_mass;
    std::optional<double> wave_number_per_m;
    std::optional<double> eta_com;
    std::optional<double> target_spacing_m;  // tune the quartic term to this spacing

    TrapConfig build() const {
        TrapConfig t;
        t.n_ions = n_ions;
        const double w2 = constants::two_pi * constants::two_pi;
        t.axial_quadratic = axial_quadratic_hz2 * w2;
        t.axial_quartic = axial_quartic_hz2_per_m2 * w2;
        t.radial_com_freq = from_hz(radial_com_hz);
        t.ion_mass = ion_mass_kg;
        t.wave_number = wave_number_per_m;
        t.validate();
        if (!eta_com && !wave_number_per_m) throw ConfigError("trap: one of eta_com or wave_number_per_m is required");
        return target_spacing_m ? tune_quartic(t, *target_spacing_m) : t;
    }
};

struct EffectiveSection {
    KernelMode kernel = KernelMode::finite_time;
    std::optional<IndexRange> window;  // default: central 20 modes
    bool diagonal_compensation = false;
    double dispersive_threshold = 0.1;
};

struct CompileSection {
    std::string target = "drive";  // drive | band | zero | matrix
    std::size_t band = 1;
    CMat target_matrix;  // rad/s, for target == "matrix"
    bool fix_tones = true;
    bool fix_ions = true;
    std::size_t ion_budget = 4;
    std::size_t tone_budget = 2;
    double epsilon_cap = 0.1;
    double tolerance = 0.05;
    std::size_t restarts = 8;
    std::size_t max_iterations = 400;
    bool refine_tones = false;
};

struct EvolveSection {
    FockPattern input;  // over the effective window; default one phonon in its first mode
    std::optional<double> duration_s;
    unsigned max_total = 10;
    std::size_t max_permanent = 20;
    bool acknowledge_large = false;  // required to raise either guard
};

struct OracleSection {
    std::string mode = "sweep";  // sweep | rabi
    std::optional<IndexRange> modes;
    unsigned fock_cutoff = 3;
    unsigned max_phonons = 2;
    bool all_down = true;
    std::vector<double> epsilons{0.02, 0.04, 0.08};
    unsigned window_samples = 8;
    bool carrier = false;
    unsigned rabi_samples = 200;
};

struct OutputSection {
    bool json = true;
    bool csv = true;
};

struct RunConfig {
    std::optional<std::string> preset;
    std::uint64_t seed = 0;
    std::optional<TrapSection> trap;
    std::optional<DriveProgram> drive;
    std::optional<std::string> drive_preset;
    EffectiveSection effective;
    CompileSection compile;
    EvolveSection evolve;
    OracleSection oracle;
    OutputSection output;
};

// ---- presets ------------------------------------------------------------------

inline TrapSection paper_trap_section() {
    TrapSection t;
    t.n_ions = presets::n_ions;
    t.axial_quadratic_hz2 = 0.2e6 * 0.2e6;
    t.radial_com_hz = presets::radial_com_hz;
    t.eta_com = presets::eta_com;
    t.target_spacing_m = presets::target_spacing_m;
    return t;
}

inline TrapSection small_trap_section(std::size_t n) {
    TrapSection t;
    t.n_ions = n;
    t.axial_quadratic_hz2 = presets::oracle_axial_hz * presets::oracle_axial_hz;
    t.radial_com_hz = presets::radial_com_hz;
    t.eta_com = presets::eta_com;
    return t;
}

inline constexpr double rabi_preset_hz = 50e3;

/// Drive for a named preset on already computed modes.
inline DriveProgram preset_drive(const std::string& name, const ModeData& modes) {
    if (name == "fig2a") return presets::fig2a(modes);
    if (name == "fig2b") return presets::fig2b(modes);
    if (name == "fig2c") return presets::fig2c(modes);
    if (name == "uniform") return presets::uniform(modes);
    if (name == "oracle") return presets::oracle_drive(modes);
    if (name == "rabi") {
        // Resonant with the single mode; T is one n = 1 Rabi period, 2 pi / (eta Omega).
        DriveProgram d;
        d.tones = RVec::Constant(1, modes.freqs[0]);
        d.amplitudes = CMat::Constant(1, 1, from_hz(rabi_preset_hz));
        d.illuminated = {0};
        d.duration = 1.0 / (modes.lamb_dicke(0, 0) * rabi_preset_hz);
        d.canonicalize();
        return d;
    }
    throw ConfigError("drive: preset '" + name + "' has no drive");
}

inline void apply_preset(RunConfig& c, const std::string& name) {
    bool known = false;
    for (const auto& n : preset_names()) known |= (n == name);
    if (!known) throw ConfigError("unknown preset '" + name + "'");
    c.preset = name;
    if (name == "oracle") {
        c.trap = small_trap_section(2);
    } else if (name == "rabi") {
        c.trap = small_trap_section(1);
        c.oracle.mode = "rabi";
    } else {
        c.trap = paper_trap_section();
    }
    if (name != "fig1c") c.drive_preset = name;
    if (name == "fig2a" || name == "fig2b") {
        c.compile.target = "band";
        c.compile.band = name == "fig2a" ? 1 : 2;
        c.compile.fix_tones = false;
        c.compile.fix_ions = false;
        // Four ions leave the band target just above the default tolerance.
        c.compile.ion_budget = 8;
    }
    if (name == "fig1c" || name == "rabi") c.compile.target = "zero";
}

// ---- parsing --------------------------------------------------------------------

inline TrapSection parse_trap(const json& j) {
    const std::string w = "trap";
    io::require_keys(j, {"n_ions", "axial_quadratic_hz2", "axial_quartic_hz2_per_m2", "radial_com_hz", "ion_mass_kg",
                         "wave_number_per_m", "eta_com", "target_spacing_m"},
                     w);
    TrapSection t;
    t.n_ions = io::get<std::size_t>(j, "n_ions", w);
    t.axial_quadratic_hz2 = io::get_or<double>(j, "axial_quadratic_hz2", 0.0, w);
    t.axial_quartic_hz2_per_m2 = io::get_or<double>(j, "axial_quartic_hz2_per_m2", 0.0, w);
    t.radial_com_hz = io::get<double>(j, "radial_com_hz", w);
    t.ion_mass_kg = io::get_or<double>(j, "ion_mass_kg", t.ion_mass_kg, w);
    auto opt = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return io::get<double>(j, key, w);
    };
    t.wave_number_per_m = opt("wave_number_per_m");
    t.eta_com = opt("eta_com");
    t.target_spacing_m = opt("target_spacing_m");
    return t;
}

inline json trap_echo(const TrapSection& t) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"n_ions", t.n_ions},
            {"axial_quadratic_hz2", t.axial_quadratic_hz2},
            {"axial_quartic_hz2_per_m2", t.axial_quartic_hz2_per_m2},
            {"radial_com_hz", t.radial_com_hz},
            {"ion_mass_kg", t.ion_mass_kg},
            {"wave_number_per_m", opt(t.wave_number_per_m)},
            {"eta_com", opt(t.eta_com)},
            {"target_spacing_m", opt(t.target_spacing_m)}};
}

inline void parse_effective(const json& j, EffectiveSection& e) {
    const std::string w = "effective";
    io::require_keys(j, {"kernel", "window", "diagonal_compensation", "dispersive_threshold"}, w);
    const std::string kernel = io::get_or<std::string>(j, "kernel", "finite_time", w);
    if (kernel == "finite_time")
        e.kernel = KernelMode::finite_time;
    else if (kernel == "unity")
        e.kernel = KernelMode::unity;
    else
        throw ConfigError("effective.kernel: expected finite_time or unity");
    if (j.contains("window") && !j.at("window").is_null()) e.window = io::range_from(j.at("window"), w + ".window");
    e.diagonal_compensation = io::get_or<bool>(j, "diagonal_compensation", e.diagonal_compensation, w);
    e.dispersive_threshold = io::get_or<double>(j, "dispersive_threshold", e.dispersive_threshold, w);
    if (!(e.dispersive_threshold > 0.0)) throw ConfigError("effective.dispersive_threshold must be > 0");
}

inline void parse_compile(const json& j, CompileSection& c) {
    const std::string w = "compile";
    io::require_keys(j, {"target", "band", "target_hz", "fix_tones", "fix_ions", "ion_budget", "tone_budget",
                         "epsilon_cap", "tolerance", "restarts", "max_iterations", "refine_tones"},
                     w);
    c.target = io::get_or<std::string>(j, "target", c.target, w);
    if (c.target != "drive" && c.target != "band" && c.target != "zero" && c.target != "matrix")
        throw ConfigError("compile.target: expected drive, band, zero or matrix");
    c.band = io::get_or<std::size_t>(j, "band", c.band, w);
    if (c.target == "band" && c.band < 1) throw ConfigError("compile.band must be >= 1");
    if (j.contains("target_hz")) c.target_matrix = io::matrix_from(j.at("target_hz"), w + ".target_hz", true);
    if (c.target == "matrix" && c.target_matrix.size() == 0) throw ConfigError("compile.target_hz is required");
    c.fix_tones = io::get_or<bool>(j, "fix_tones", c.fix_tones, w);
    c.fix_ions = io::get_or<bool>(j, "fix_ions", c.fix_ions, w);
    c.ion_budget = io::get_or<std::size_t>(j, "ion_budget", c.ion_budget, w);
    c.tone_budget = io::get_or<std::size_t>(j, "tone_budget", c.tone_budget, w);
    c.epsilon_cap = io::get_or<double>(j, "epsilon_cap", c.epsilon_cap, w);
    c.tolerance = io::get_or<double>(j, "tolerance", c.tolerance, w);
    c.restarts = io::get_or<std::size_t>(j, "restarts", c.restarts, w);
    c.max_iterations = io::get_or<std::size_t>(j, "max_iterations", c.max_iterations, w);
    c.refine_tones = io::get_or<bool>(j, "refine_tones", c.refine_tones, w);
}

inline void parse_evolve(const json& j, EvolveSection& e) {
    const std::string w = "evolve";
    io::require_keys(j, {"input", "duration_s", "max_total", "max_permanent", "acknowledge_large"}, w);
    if (j.contains("input")) e.input = io::get<FockPattern>(j, "input", w);
    if (j.contains("duration_s") && !j.at("duration_s").is_null()) e.duration_s = io::get<double>(j, "duration_s", w);
    e.max_total = io::get_or<unsigned>(j, "max_total", e.max_total, w);
    e.max_permanent = io::get_or<std::size_t>(j, "max_permanent", e.max_permanent, w);
    e.acknowledge_large = io::get_or<bool>(j, "acknowledge_large", e.acknowledge_large, w);
    const EvolveGuards def;
    if ((e.max_total > def.max_total || e.max_permanent > def.max_permanent) && !e.acknowledge_large)
        throw ConfigError("evolve: raising max_total or max_permanent requires acknowledge_large = true");
}

inline void parse_oracle(const json& j, OracleSection& o) {
    const std::string w = "oracle";
    io::require_keys(j, {"mode", "modes", "fock_cutoff", "max_phonons", "sector", "epsilons", "window_samples",
                         "carrier", "rabi_samples"},
                     w);
    o.mode = io::get_or<std::string>(j, "mode", o.mode, w);
    if (o.mode != "sweep" && o.mode != "rabi") throw ConfigError("oracle.mode: expected sweep or rabi");
    if (j.contains("modes") && !j.at("modes").is_null()) o.modes = io::range_from(j.at("modes"), w + ".modes");
    o.fock_cutoff = io::get_or<unsigned>(j, "fock_cutoff", o.fock_cutoff, w);
    o.max_phonons = io::get_or<unsigned>(j, "max_phonons", o.max_phonons, w);
    if (o.max_phonons >= o.fock_cutoff) throw ConfigError("oracle: max_phonons must be below fock_cutoff");
    const std::string sector = io::get_or<std::string>(j, "sector", o.all_down ? "all_down" : "full", w);
    if (sector != "all_down" && sector != "full") throw ConfigError("oracle.sector: expected all_down or full");
    o.all_down = sector == "all_down";
    o.epsilons = io::get_or<std::vector<double>>(j, "epsilons", o.epsilons, w);
    for (double e : o.epsilons)
        if (!(e > 0.0 && e < 1.0)) throw ConfigError("oracle.epsilons must lie in (0, 1)");
    o.window_samples = io::get_or<unsigned>(j, "window_samples", o.window_samples, w);
    o.carrier = io::get_or<bool>(j, "carrier", o.carrier, w);
    o.rabi_samples = io::get_or<unsigned>(j, "rabi_samples", o.rabi_samples, w);
    if (o.rabi_samples < 2) throw ConfigError("oracle.rabi_samples must be >= 2");
}

inline void parse_output(const json& j, OutputSection& o) {
    io::require_keys(j, {"formats"}, "output");
    const auto formats = io::get_or<std::vector<std::string>>(j, "formats", {"csv", "json"}, "output");
    o.json = o.csv = false;
    for (const auto& f : formats) {
        if (f == "json")
            o.json = true;
        else if (f == "csv")
            o.csv = true;
        else
            throw ConfigError("output.formats: unknown format '" + f + "'");
    }
}

/// Parses and validates a config document. `preset` and `seed` come from the
/// command line and take precedence over the document.
inline RunConfig parse(const json& doc, const std::optional<std::string>& preset = {},
                       const std::optional<std::uint64_t>& seed = {}) {
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    io::require_keys(doc, {"preset", "seed", "trap", "drive", "effective", "compile", "evolve", "oracle", "output"},
                     "config");
    RunConfig c;
    std::optional<std::string> name = preset;
    if (!name && doc.contains("preset") && !doc.at("preset").is_null())
        name = io::get<std::string>(doc, "preset", "config");
    if (name) apply_preset(c, *name);
    c.seed = seed ? *seed : io::get_or<std::uint64_t>(doc, "seed", 0, "config");
    if (doc.contains("trap")) c.trap = parse_trap(doc.at("trap"));
    if (doc.contains("drive")) {
        const json& d = doc.at("drive");
        if (d.is_object() && d.contains("preset")) {
            io::require_keys(d, {"preset"}, "drive");
            c.drive_preset = io::get<std::string>(d, "preset", "drive");
            c.drive.reset();
        } else if (!d.is_null()) {
            c.drive = io::drive_from_json(d);
            c.drive_preset.reset();
        }
    }
    if (doc.contains("effective")) parse_effective(doc.at("effective"), c.effective);
    if (doc.contains("compile")) parse_compile(doc.at("compile"), c.compile);
    if (doc.contains("evolve")) parse_evolve(doc.at("evolve"), c.evolve);
    if (doc.contains("oracle")) parse_oracle(doc.at("oracle"), c.oracle);
    if (doc.contains("output")) parse_output(doc.at("output"), c.output);
    if (!c.trap) throw ConfigError("config: a trap section or a preset is required");
    return c;
}

// ---- resolution -----------------------------------------------------------------

/// Everything the commands need, computed once.
struct Resolved {
    RunConfig config;
    TrapConfig trap;
    IonChain chain;
    ModeData modes;
    IndexRange window;
};

inline Resolved resolve(RunConfig c) {
    Resolved r;
    r.trap = c.trap->build();
    r.chain = equilibrium_positions(r.trap);
    r.modes = lamb_dicke(transverse_modes(r.chain), r.trap, c.trap->eta_com);
    r.window = c.effective.window.value_or(central_window(r.modes.n_modes(), presets::window_modes));
    if (r.window.size() == 0 || r.window.end > r.modes.n_modes()) throw ConfigError("effective.window: out of range");
    c.effective.window = r.window;
    if (c.drive_preset) {
        c.drive = preset_drive(*c.drive_preset, r.modes);
        c.drive_preset.reset();
    }
    if (c.drive) {
        c.drive->canonicalize();
        c.drive->validate(r.modes.n_ions());
    }
    if (!c.oracle.modes) c.oracle.modes = IndexRange{0, r.modes.n_modes()};
    if (c.oracle.modes->size() == 0 || c.oracle.modes->end > r.modes.n_modes())
        throw ConfigError("oracle.modes: out of range");
    if (c.evolve.input.empty()) {
        c.evolve.input.assign(r.window.size(), 0);
        c.evolve.input[0] = 1;
    }
    if (c.evolve.input.size() != r.window.size())
        throw ConfigError("evolve.input: one occupation per window mode required");
    r.config = std::move(c);
    return r;
}

/// The fully resolved configuration; parse(echo(r)) resolves to the same run.
inline json echo(const Resolved& r) {
    const RunConfig& c = r.config;
    json j;
    j["preset"] = c.preset ? json(*c.preset) : json(nullptr);
    j["seed"] = c.seed;
    j["trap"] = trap_echo(*c.trap);
    j["drive"] = c.drive ? io::drive_json(*c.drive) : json(nullptr);
    j["effective"] = {{"kernel", c.effective.kernel == KernelMode::finite_time ? "finite_time" : "unity"},
                      {"window", io::range_json(*c.effective.window)},
                      {"diagonal_compensation", c.effective.diagonal_compensation},
                      {"dispersive_threshold", c.effective.dispersive_threshold}};
    j["compile"] = {{"target", c.compile.target},
                    {"band", c.compile.band},
                    {"fix_tones", c.compile.fix_tones},
                    {"fix_ions", c.compile.fix_ions},
                    {"ion_budget", c.compile.ion_budget},
                    {"tone_budget", c.compile.tone_budget},
                    {"epsilon_cap", c.compile.epsilon_cap},
                    {"tolerance", c.compile.tolerance},
                    {"restarts", c.compile.restarts},
                    {"max_iterations", c.compile.max_iterations},
                    {"refine_tones", c.compile.refine_tones}};
    if (c.compile.target_matrix.size()) j["compile"]["target_hz"] = io::matrix_hz(c.compile.target_matrix);
    j["evolve"] = {{"input", c.evolve.input},
                   {"duration_s", c.evolve.duration_s ? json(*c.evolve.duration_s) : json(nullptr)},
                   {"max_total", c.evolve.max_total},
                   {"max_permanent", c.evolve.max_permanent},
                   {"acknowledge_large", c.evolve.acknowledge_large}};
    j["oracle"] = {{"mode", c.oracle.mode},
                   {"modes", io::range_json(*c.oracle.modes)},
                   {"fock_cutoff", c.oracle.fock_cutoff},
                   {"max_phonons", c.oracle.max_phonons},
                   {"sector", c.oracle.all_down ? "all_down" : "full"},
                   {"epsilons", c.oracle.epsilons},
                   {"window_samples", c.oracle.window_samples},
                   {"carrier", c.oracle.carrier},
                   {"rabi_samples", c.oracle.rabi_samples}};
    json formats = json::array();
    if (c.output.csv) formats.push_back("csv");
    if (c.output.json) formats.push_back("json");
    j["output"] = {{"formats", formats}};
    return j;
}

}  // namespace ionhop::config

#endif  // IONHOP_CONFIG_HPP
