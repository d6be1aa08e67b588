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

// Serialization. JSON objects are std::map backed, so keys are emitted sorted;
// doubles print as the shortest round-tripping decimal. Frequencies and
// couplings are exported in Hz (rad/s divided by 2 pi), complex values as
// {"im", "re"}. CSV cells use 17 significant digits.

#ifndef IONHOP_IO_HPP
#define IONHOP_IO_HPP

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ionhop/compiler.hpp"
#include "ionhop/crystal.hpp"
#include "ionhop/drive.hpp"
#include "ionhop/effective.hpp"
#include "ionhop/evolve.hpp"
#include "ionhop/oracle.hpp"
#include "ionhop/types.hpp"

namespace ionhop::io {

using json = nlohmann::json;

// ---- primitives ----------------------------------------------------------

inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Rejects keys outside `allowed` so that typos fail loudly.
inline void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    return j.contains(key) ? get<T>(j, key, where) : fallback;
}

inline json complex_json(cplx v) { return {{"re", v.real()}, {"im", v.imag()}}; }

inline cplx complex_from(const json& j, const std::string& where) {
    require_keys(j, {"re", "im"}, where);
    return {get<double>(j, "re", where), get<double>(j, "im", where)};
}

/// Complex rad/s to {re, im} in Hz, bit-exact for snapped values.
inline json complex_hz(cplx angular) { return complex_json({to_hz(angular.real()), to_hz(angular.imag())}); }

inline cplx complex_from_hz(const json& j, const std::string& where) {
    const cplx h = complex_from(j, where);
    return {from_hz(h.real()), from_hz(h.imag())};
}

inline json matrix_json(const CMat& m, double scale = 1.0) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_json(m(r, c) * scale));
        rows.push_back(std::move(row));
    }
    return rows;
}

/// rad/s matrix exported in Hz.
inline json matrix_hz(const CMat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(complex_hz(m(r, c)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline CMat matrix_from(const json& j, const std::string& where, bool hz) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array of rows");
    const auto rows = Eigen::Index(j.size());
    const auto cols = rows ? Eigen::Index(j.front().size()) : 0;
    CMat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[std::size_t(r)];
        if (!row.is_array() || Eigen::Index(row.size()) != cols) throw ConfigError(where + ": ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = hz ? complex_from_hz(row[std::size_t(c)], where) : complex_from(row[std::size_t(c)], where);
    }
    return m;
}

inline json real_matrix_json(const RMat& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline RMat real_matrix_from(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array of rows");
    const auto rows = Eigen::Index(j.size());
    const auto cols = rows ? Eigen::Index(j.front().size()) : 0;
    RMat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[std::size_t(r)];
        if (!row.is_array() || Eigen::Index(row.size()) != cols) throw ConfigError(where + ": ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!row[std::size_t(c)].is_number()) throw ConfigError(where + ": expected numbers");
            m(r, c) = row[std::size_t(c)].get<double>();
        }
    }
    return m;
}

inline json hz_vector(const RVec& angular) {
    json a = json::array();
    for (Eigen::Index i = 0; i < angular.size(); ++i) a.push_back(to_hz(angular[i]));
    return a;
}

inline RVec hz_vector_from(const json& j, const std::string& where) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    RVec v(Eigen::Index(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(where + ": expected numbers");
        v[Eigen::Index(i)] = from_hz(j[i].get<double>());
    }
    return v;
}

inline json range_json(IndexRange r) { return {{"begin", r.begin}, {"end", r.end}}; }

inline IndexRange range_from(const json& j, const std::string& where) {
    require_keys(j, {"begin", "end"}, where);
    IndexRange r{get<std::size_t>(j, "begin", where), get<std::size_t>(j, "end", where)};
    if (r.end < r.begin) throw ConfigError(where + ": end < begin");
    return r;
}

// ---- files -----------------------------------------------------------------

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw ConfigError("failed writing " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Comma-separated rows of numbers or preformatted strings.
class Csv {
  public:
    explicit Csv(std::vector<std::string> header) : width_(header.size()) { line(header); }

    Csv& row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }
    Csv& row(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_number(v));
        return cells_row(cells);
    }
    Csv& cells_row(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw ConfigError("csv: row width does not match header");
        line(cells);
        return *this;
    }
    const std::string& str() const { return text_; }
    void write(const std::filesystem::path& p) const { write_text(p, text_); }

  private:
    void line(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) text_ += ',';
            text_ += cells[i];
        }
        text_ += '\n';
    }
    std::size_t width_;
    std::string text_;
};

// ---- crystal ----------------------------------------------------------------

inline json trap_json(const TrapConfig& t) {
    json j = {{"n_ions", t.n_ions},
              {"axial_quadratic_hz2", t.axial_quadratic / (constants::two_pi * constants::two_pi)},
              {"axial_quartic_hz2_per_m2", t.axial_quartic / (constants::two_pi * constants::two_pi)},
              {"radial_com_hz", to_hz(t.radial_com_freq)},
              {"ion_mass_kg", t.ion_mass}};
    if (t.wave_number) j["wave_number_per_m"] = *t.wave_number;
    return j;
}

inline json modes_json(const IonChain& chain, const ModeData& m) {
    json freqs = json::array(), eta = json::array();
    for (Eigen::Index k = 0; k < m.freqs.size(); ++k) {
        freqs.push_back(to_hz(m.freqs[k]));
        eta.push_back(m.eta_scale[k]);
    }
    return {{"positions_m", chain.positions},
            {"frequencies_hz", freqs},
            {"eta_scale", eta},
            {"participation", real_matrix_json(m.participation)},
            {"lamb_dicke", real_matrix_json(m.lamb_dicke)},
            {"force_residual", chain.force_residual}};
}

// ---- drive ------------------------------------------------------------------

inline json drive_json(const DriveProgram& d) {
    json amps = json::array();
    for (Eigen::Index r = 0; r < d.amplitudes.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index p = 0; p < d.amplitudes.cols(); ++p) row.push_back(complex_hz(d.amplitudes(r, p)));
        amps.push_back(std::move(row));
    }
    json j = {{"tones_hz", hz_vector(d.tones)},
              {"amplitudes_hz", amps},
              {"illuminated", d.illuminated},
              {"duration_s", d.duration}};
    if (d.blue) {
        j["blue"] = {{"ions", d.blue->ions},
                     {"detuning_hz", to_hz(d.blue->detuning)},
                     {"amplitude_hz", to_hz(d.blue->amplitude)},
                     {"residual_rms_hz", to_hz(d.blue->residual_rms)},
                     {"modeled", d.blue->modeled}};
    }
    return j;
}

/// Inverse of drive_json; shape is validated here, physics by DriveProgram::validate.
inline DriveProgram drive_from_json(const json& j, const std::string& where = "drive") {
    require_keys(j, {"tones_hz", "amplitudes_hz", "illuminated", "duration_s", "blue"}, where);
    DriveProgram d;
    d.tones = hz_vector_from(j.at("tones_hz"), where + ".tones_hz");
    d.illuminated = get<std::vector<std::size_t>>(j, "illuminated", where);
    d.duration = get<double>(j, "duration_s", where);
    const json& a = j.at("amplitudes_hz");
    if (!a.is_array() || a.size() != d.illuminated.size())
        throw ConfigError(where + ".amplitudes_hz: one row per illuminated ion required");
    d.amplitudes = CMat::Zero(Eigen::Index(d.illuminated.size()), d.tones.size());
    for (std::size_t r = 0; r < a.size(); ++r) {
        if (!a[r].is_array() || Eigen::Index(a[r].size()) != d.tones.size())
            throw ConfigError(where + ".amplitudes_hz: one entry per tone required");
        for (std::size_t p = 0; p < a[r].size(); ++p)
            d.amplitudes(Eigen::Index(r), Eigen::Index(p)) = complex_from_hz(a[r][p], where + ".amplitudes_hz");
    }
    if (j.contains("blue")) {
        const json& b = j.at("blue");
        const std::string w = where + ".blue";
        require_keys(b, {"ions", "detuning_hz", "amplitude_hz", "residual_rms_hz", "modeled"}, w);
        BlueCompensation bc;
        bc.ions = get<std::vector<std::size_t>>(b, "ions", w);
        bc.detuning = from_hz(get<double>(b, "detuning_hz", w));
        bc.amplitude = from_hz(get<double>(b, "amplitude_hz", w));
        bc.residual_rms = from_hz(get_or<double>(b, "residual_rms_hz", 0.0, w));
        bc.modeled = get_or<bool>(b, "modeled", true, w);
        d.blue = bc;
    }
    return d;
}

inline json dispersive_json(const DispersiveReport& r) {
    return {{"max_epsilon", r.max_epsilon},
            {"min_detuning_hz", std::isfinite(r.min_detuning) ? json(to_hz(r.min_detuning)) : json(nullptr)},
            {"spectral_resolution", std::isfinite(r.spectral_resolution) ? json(r.spectral_resolution) : json(nullptr)},
            {"threshold", r.threshold},
            {"epsilon_violation", r.epsilon_violation},
            {"resolution_violation", r.resolution_violation}};
}

// ---- effective ----------------------------------------------------------------

inline json effective_json(const EffectiveModel& m) {
    json per_ion = json::array();
    for (std::size_t r = 0; r < m.k_tensor.ions.size(); ++r)
        per_ion.push_back({{"ion", m.k_tensor.ions[r]}, {"k_hz", matrix_hz(m.k_tensor.per_ion[r])}});
    return {{"k_hz", matrix_hz(m.k_matrix)},
            {"j_hz", matrix_hz(m.j_matrix)},
            {"k_per_ion", per_ion},
            {"duration_s", m.duration},
            {"mode_window", range_json(m.mode_window)},
            {"diagonal_compensated", m.diagonal_compensated}};
}

/// Magnitude (Hz) and phase (rad) per entry of a window block.
inline Csv heatmap_csv(const CMat& k, IndexRange win) {
    Csv csv({"row", "col", "magnitude_hz", "phase_rad"});
    for (std::size_t r = win.begin; r < win.end; ++r)
        for (std::size_t c = win.begin; c < win.end; ++c) {
            const cplx v = k(Eigen::Index(r), Eigen::Index(c));
            csv.row({double(r), double(c), std::abs(v) / constants::two_pi, std::arg(v)});
        }
    return csv;
}

// ---- compiler -----------------------------------------------------------------

inline json compile_task_json(const CompileTask& t) {
    json j = {{"target_hz", matrix_hz(t.target)},
              {"mode_window", range_json(t.mode_window)},
              {"ion_budget", t.ion_budget},
              {"tone_budget", t.tone_budget},
              {"epsilon_cap", t.epsilon_cap},
              {"duration_s", t.duration},
              {"base_detuning_hz", to_hz(t.base_detuning)},
              {"tolerance", t.tolerance},
              {"restarts", t.restarts},
              {"seed", t.seed},
              {"max_iterations", t.max_iterations},
              {"refine_tones", t.refine_tones}};
    if (t.fixed_tones) j["fixed_tones_hz"] = hz_vector(*t.fixed_tones);
    if (t.ions) j["ions"] = *t.ions;
    if (t.weight.size()) j["weight"] = real_matrix_json(t.weight);
    return j;
}

inline CompileTask compile_task_from_json(const json& j, const std::string& where = "compile_task") {
    require_keys(j, {"target_hz", "mode_window", "ion_budget", "tone_budget", "epsilon_cap", "duration_s",
                     "base_detuning_hz", "tolerance", "restarts", "seed", "max_iterations", "refine_tones",
                     "fixed_tones_hz", "ions", "weight"},
                 where);
    CompileTask t;
    t.target = matrix_from(j.at("target_hz"), where + ".target_hz", true);
    t.mode_window = range_from(j.at("mode_window"), where + ".mode_window");
    t.ion_budget = get_or<std::size_t>(j, "ion_budget", t.ion_budget, where);
    t.tone_budget = get_or<std::size_t>(j, "tone_budget", t.tone_budget, where);
    t.epsilon_cap = get_or<double>(j, "epsilon_cap", t.epsilon_cap, where);
    t.duration = get_or<double>(j, "duration_s", t.duration, where);
    t.base_detuning = from_hz(get_or<double>(j, "base_detuning_hz", to_hz(t.base_detuning), where));
    t.tolerance = get_or<double>(j, "tolerance", t.tolerance, where);
    t.restarts = get_or<std::size_t>(j, "restarts", t.restarts, where);
    t.seed = get_or<std::uint64_t>(j, "seed", t.seed, where);
    t.max_iterations = get_or<std::size_t>(j, "max_iterations", t.max_iterations, where);
    t.refine_tones = get_or<bool>(j, "refine_tones", t.refine_tones, where);
    if (j.contains("fixed_tones_hz")) t.fixed_tones = hz_vector_from(j.at("fixed_tones_hz"), where + ".fixed_tones_hz");
    if (j.contains("ions")) t.ions = get<std::vector<std::size_t>>(j, "ions", where);
    if (j.contains("weight")) t.weight = real_matrix_from(j.at("weight"), where + ".weight");
    return t;
}

inline json compile_result_json(const CompileResult& r) {
    return {{"drive", drive_json(r.drive)},
            {"achieved_hz", matrix_hz(r.achieved)},
            {"residual", r.residual},
            {"iterations", r.iterations},
            {"converged", r.converged},
            {"seed", r.seed},
            {"restart", r.restart},
            {"restart_seeds", r.restart_seeds},
            {"restart_residuals", r.restart_residuals},
            {"max_epsilon", r.max_epsilon},
            {"non_equidistant", r.non_equidistant}};
}

// ---- evolve -------------------------------------------------------------------

inline json unitary_json(const ModeUnitary& u) {
    return {{"w", matrix_json(u.matrix)}, {"duration_s", u.duration}, {"k_hz", matrix_hz(u.source_k)}};
}

inline ModeUnitary unitary_from_json(const json& j, const std::string& where = "unitary") {
    require_keys(j, {"w", "duration_s", "k_hz"}, where);
    ModeUnitary u;
    u.matrix = matrix_from(j.at("w"), where + ".w", false);
    u.duration = get<double>(j, "duration_s", where);
    u.source_k = matrix_from(j.at("k_hz"), where + ".k_hz", true);
    return u;
}

/// One column per mode occupation, then the probability.
inline Csv distribution_csv(const std::vector<std::pair<FockPattern, double>>& dist, std::size_t n_modes,
                            std::size_t first_mode = 0) {
    std::vector<std::string> header;
    for (std::size_t m = 0; m < n_modes; ++m) header.push_back("n" + std::to_string(first_mode + m));
    header.push_back("probability");
    Csv csv(header);
    for (const auto& [pat, p] : dist) {
        std::vector<double> row(pat.begin(), pat.end());
        row.push_back(p);
        csv.row(row);
    }
    return csv;
}

// ---- oracle -------------------------------------------------------------------

inline json compare_json(const CompareReport& r) {
    return {{"fidelity", r.fidelity},
            {"infidelity", 1.0 - r.fidelity},
            {"postselected_fidelity", r.postselected_fidelity},
            {"trace_distance", r.trace_distance},
            {"max_deviation", r.max_deviation},
            {"vacuum_phase_rad", r.vacuum_phase},
            {"epsilon_used", r.epsilon_used},
            {"inputs", r.inputs}};
}

inline json sweep_json(const std::vector<SweepPoint>& pts) {
    json a = json::array();
    for (const auto& p : pts) {
        json j = compare_json(p.report);
        j["epsilon"] = p.epsilon;
        j["window_infidelity"] = p.window_infidelity;
        j["window_postselected_infidelity"] = p.window_postselected_infidelity;
        j["steps"] = p.run.steps;
        j["doubling_error"] = p.run.doubling_error;
        j["norm_drift"] = p.run.norm_drift;
        j["leakage"] = p.run.leakage;
        a.push_back(std::move(j));
    }
    return a;
}

inline Csv sweep_csv(const std::vector<SweepPoint>& pts) {
    Csv csv({"epsilon", "infidelity", "postselected_infidelity", "window_infidelity",
             "window_postselected_infidelity", "trace_distance", "leakage", "steps"});
    for (const auto& p : pts)
        csv.row({p.epsilon, 1.0 - p.report.fidelity, 1.0 - p.report.postselected_fidelity, p.window_infidelity,
                 p.window_postselected_infidelity, p.report.trace_distance, p.run.leakage, double(p.run.steps)});
    return csv;
}

}  // namespace ionhop::io

#endif  // IONHOP_IO_HPP
