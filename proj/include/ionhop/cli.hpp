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

// Command implementations behind the ionhop executable. Each command writes
// config.json (the resolved configuration) before anything else, so a failed
// run still records what it was asked to do.

#ifndef IONHOP_CLI_HPP
#define IONHOP_CLI_HPP

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ionhop/config.hpp"

namespace ionhop::cli {

namespace fs = std::filesystem;
using io::json;

enum ExitCode : int {
    exit_ok = 0,
    exit_internal = 1,
    exit_config = 2,
    exit_regime = 3,
    exit_convergence = 4,
};

inline int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::config:
        case ErrorKind::size:
            return exit_config;
        case ErrorKind::regime:
            return exit_regime;
        case ErrorKind::convergence:
            return exit_convergence;
    }
    return exit_internal;
}

struct Options {
    std::string command;
    fs::path config;
    fs::path out;
    std::optional<std::string> preset;
    std::optional<std::uint64_t> seed;
    bool force = false;
};

class Context {
  public:
    Context(config::Resolved r, fs::path out, bool force) : r_(std::move(r)), out_(std::move(out)), force_(force) {
        fs::create_directories(out_);
        io::write_json(out_ / "config.json", config::echo(r_));
    }

    const config::Resolved& resolved() const { return r_; }
    const config::RunConfig& cfg() const { return r_.config; }
    const ModeData& modes() const { return r_.modes; }
    bool force() const { return force_; }
    bool want_csv() const { return cfg().output.csv; }
    bool want_json() const { return cfg().output.json; }

    void json_file(const std::string& name, const json& j) const {
        if (want_json()) io::write_json(out_ / name, j);
    }
    void csv_file(const std::string& name, const io::Csv& c) const {
        if (want_csv()) c.write(out_ / name);
    }
    // Drives are always written: later runs consume them as config input.
    void drive_file(const DriveProgram& d) const { io::write_json(out_ / "drive.json", io::drive_json(d)); }

    const DriveProgram& drive() const {
        if (!cfg().drive) throw ConfigError("drive: this command needs a drive (section or preset)");
        return *cfg().drive;
    }

    /// Dispersive check; a violation is fatal unless forced.
    DispersiveReport check_regime(const DriveProgram& d) const {
        const DispersiveReport rep = dispersive_check(d, modes(), cfg().effective.dispersive_threshold);
        if (!rep.ok() && !force_) {
            std::ostringstream msg;
            msg << "regime: max epsilon " << rep.max_epsilon << " (threshold " << rep.threshold
                << "), spectral resolution " << rep.spectral_resolution << "; rerun with --force to proceed";
            throw RegimeError(msg.str());
        }
        return rep;
    }

    /// Effective model of `d`, with diagonal compensation when configured.
    std::pair<EffectiveModel, DriveProgram> model_for(const DriveProgram& d) const {
        EffectiveModel m = effective_model(d, modes(), r_.window, cfg().effective.kernel);
        if (!cfg().effective.diagonal_compensation) return {m, d};
        return diagonal_compensation(m, d, modes());
    }

  private:
    config::Resolved r_;
    fs::path out_;
    bool force_;
};

// ---- modes ----------------------------------------------------------------------

inline int cmd_modes(const Context& ctx) {
    const auto& chain = ctx.resolved().chain;
    const auto& m = ctx.modes();
    io::Csv pos({"ion", "position_m"});
    for (std::size_t i = 0; i < chain.positions.size(); ++i) pos.row({double(i), chain.positions[i]});
    io::Csv spec({"mode", "frequency_hz", "eta"});
    for (Eigen::Index k = 0; k < m.freqs.size(); ++k) spec.row({double(k), to_hz(m.freqs[k]), m.eta_scale[k]});
    std::vector<std::string> header{"ion"};
    for (std::size_t k = 0; k < m.n_modes(); ++k) header.push_back("b" + std::to_string(k));
    io::Csv part(header);
    for (Eigen::Index i = 0; i < m.participation.rows(); ++i) {
        std::vector<double> row{double(i)};
        for (Eigen::Index k = 0; k < m.participation.cols(); ++k) row.push_back(m.participation(i, k));
        part.row(row);
    }
    ctx.csv_file("positions.csv", pos);
    ctx.csv_file("spectrum.csv", spec);
    ctx.csv_file("participation.csv", part);
    json j = io::modes_json(chain, m);
    j["trap"] = io::trap_json(ctx.resolved().trap);
    const IndexRange win = ctx.resolved().window;
    if (win.size() > 1) {
        j["window"] = io::range_json(win);
        j["window_mean_spacing_hz"] = to_hz(mean_mode_spacing(m, win));
    }
    ctx.json_file("modes.json", j);
    return exit_ok;
}

// ---- kmatrix --------------------------------------------------------------------

inline int cmd_kmatrix(const Context& ctx) {
    const DriveProgram& d = ctx.drive();
    const DispersiveReport rep = ctx.check_regime(d);
    const auto [model, drive] = ctx.model_for(d);
    json j = io::effective_json(model);
    j["dispersive"] = io::dispersive_json(rep);
    const IndexRange win = model.mode_window;
    j["offdiagonal_ratio"] = offdiagonal_ratio(model.k_matrix.block(Eigen::Index(win.begin), Eigen::Index(win.begin),
                                                                    Eigen::Index(win.size()), Eigen::Index(win.size())));
    ctx.json_file("kmatrix.json", j);
    ctx.csv_file("heatmap.csv", io::heatmap_csv(model.k_matrix, win));
    ctx.drive_file(drive);
    return exit_ok;
}

// ---- compile --------------------------------------------------------------------

inline CMat band_target(const CMat& k, IndexRange win, std::size_t band) {
    CMat out = CMat::Zero(k.rows(), k.cols());
    for (std::size_t a = win.begin; a + band < win.end; ++a) {
        const auto i = Eigen::Index(a), j = Eigen::Index(a + band);
        out(i, j) = k(i, j);
        out(j, i) = k(j, i);
    }
    return out;
}

inline CompileTask compile_task(const Context& ctx) {
    const auto& c = ctx.cfg().compile;
    const auto& modes = ctx.modes();
    const IndexRange win = ctx.resolved().window;
    const auto n = Eigen::Index(modes.n_modes());
    CompileTask t;
    t.mode_window = win;
    t.ion_budget = std::min(c.ion_budget, modes.n_ions());
    t.tone_budget = c.tone_budget;
    t.epsilon_cap = c.epsilon_cap;
    t.tolerance = c.tolerance;
    t.restarts = c.restarts;
    t.seed = ctx.cfg().seed;
    t.max_iterations = c.max_iterations;
    t.refine_tones = c.refine_tones;
    if (ctx.cfg().drive) t.duration = ctx.cfg().drive->duration;
    if (c.target == "zero") {
        t.target = CMat::Zero(n, n);
    } else if (c.target == "matrix") {
        t.target = c.target_matrix;
    } else {
        const DriveProgram& d = ctx.drive();
        const CMat k = effective_model(d, modes, win, ctx.cfg().effective.kernel).k_matrix;
        if (c.target == "band") {
            t.target = band_target(k, win, c.band);
            // Only the couplings are prescribed; the diagonal is left free.
            t.weight = RMat::Zero(n, n);
            for (std::size_t a = win.begin; a < win.end; ++a)
                for (std::size_t b = win.begin; b < win.end; ++b)
                    if (a != b) t.weight(Eigen::Index(a), Eigen::Index(b)) = 1.0;
        } else {
            t.target = k;
        }
        if (c.fix_tones) {
            t.fixed_tones = d.tones;
            t.tone_budget = std::max(t.tone_budget, d.n_tones());
        }
        if (c.fix_ions) {
            t.ions = d.illuminated;
            t.ion_budget = std::max(t.ion_budget, d.n_lit());
        }
    }
    t.validate(modes.n_modes(), modes.n_ions());
    return t;
}

inline int cmd_compile(const Context& ctx) {
    const CompileTask task = compile_task(ctx);
    const CompileResult res = compile(task, ctx.modes());
    const RMat w = task.effective_weight();
    io::Csv resid({"row", "col", "target_re_hz", "target_im_hz", "achieved_re_hz", "achieved_im_hz", "weight"});
    for (Eigen::Index r = 0; r < task.target.rows(); ++r)
        for (Eigen::Index c = 0; c < task.target.cols(); ++c) {
            if (w(r, c) == 0.0) continue;
            const cplx a = task.target(r, c), b = res.achieved(r, c);
            resid.row({double(r), double(c), to_hz(a.real()), to_hz(a.imag()), to_hz(b.real()), to_hz(b.imag()),
                       w(r, c)});
        }
    json j = io::compile_result_json(res);
    j["task"] = io::compile_task_json(task);
    j["band_dominance"] = task.target.rows() > 1 && ctx.cfg().compile.target == "band"
                              ? json(band_dominance(res.achieved, task.mode_window, ctx.cfg().compile.band))
                              : json(nullptr);
    ctx.json_file("compile_result.json", j);
    ctx.csv_file("residual.csv", resid);
    ctx.drive_file(res.drive);
    return exit_ok;
}

// ---- evolve ---------------------------------------------------------------------

inline int cmd_evolve(const Context& ctx) {
    const auto& e = ctx.cfg().evolve;
    const DriveProgram& d = ctx.drive();
    ctx.check_regime(d);
    const auto [model, drive] = ctx.model_for(d);
    const IndexRange win = model.mode_window;
    const auto b = Eigen::Index(win.begin), n = Eigen::Index(win.size());
    const CMat k = model.k_matrix.block(b, b, n, n);
    const ModeUnitary w = mode_unitary(k, e.duration_s.value_or(drive.duration));
    const EvolveGuards guards{e.max_total, e.max_permanent};
    const auto dist = output_distribution(w, e.input, guards);
    double total = 0.0;
    for (const auto& [pat, p] : dist) total += p;
    json j = io::unitary_json(w);
    j["mode_window"] = io::range_json(win);
    j["unitarity_defect"] = unitarity_defect(w.matrix);
    j["input"] = e.input;
    j["probability_sum"] = total;
    ctx.json_file("unitary.json", j);
    ctx.csv_file("distribution.csv", io::distribution_csv(dist, win.size(), win.begin));
    return exit_ok;
}

// ---- verify ---------------------------------------------------------------------

inline constexpr double slope_low = 1.5, slope_high = 2.5;
inline constexpr double reference_epsilon = 0.04, reference_infidelity = 1e-2;
inline constexpr double rabi_return = 0.999, rabi_tolerance = 1e-3;

inline HilbertSpec oracle_space(const Context& ctx, const ModeData& modes) {
    HilbertSpec s{modes.n_ions(), modes.n_modes(), ctx.cfg().oracle.fock_cutoff};
    s.validate();
    return s;
}

/// Agreement between exact and effective propagation of the drive as given.
inline CompareReport direct_comparison(const DriveProgram& d, const ModeData& modes, const HilbertSpec& spec,
                                       const SweepOptions& opt, Propagation& run) {
    const auto inputs = sector_inputs(spec, opt.sector);
    run = propagate_columns(sector_columns(spec, inputs), d, modes, spec, d.duration, 0, opt.propagate);
    const EffectiveModel model = effective_model(d, modes, IndexRange{0, modes.n_modes()});
    return compare(run.states, effective_propagator(model, spec, d.duration), spec, opt.sector, 0.0);
}

inline int verify_sweep(const Context& ctx) {
    const auto& o = ctx.cfg().oracle;
    const ModeData modes = restrict_modes(ctx.modes(), *o.modes);
    const HilbertSpec spec = oracle_space(ctx, modes);
    const DriveProgram& d = ctx.drive();
    SweepOptions opt;
    opt.sector = {o.all_down, o.max_phonons};
    opt.propagate.carrier = o.carrier;
    opt.window_samples = o.window_samples;

    json verdict;
    io::Csv csv({"epsilon", "infidelity", "postselected_infidelity", "window_infidelity",
                 "window_postselected_infidelity", "trace_distance", "leakage", "steps"});
    json points = json::array();
    bool pass = true;
    if (d.amplitudes.cwiseAbs().maxCoeff() == 0.0) {
        // Nothing to rescale: both propagators are the identity.
        Propagation run;
        const CompareReport r = direct_comparison(d, modes, spec, opt, run);
        csv.row({0.0, 1.0 - r.fidelity, 1.0 - r.postselected_fidelity, 1.0 - r.fidelity, 1.0 - r.postselected_fidelity,
                 r.trace_distance, run.leakage, double(run.steps)});
        json p = io::compare_json(r);
        p["epsilon"] = 0.0;
        points.push_back(p);
        pass = 1.0 - r.fidelity < 1e-12;
        verdict["zero_drive_identity"] = pass;
    } else {
        const auto pts = epsilon_sweep(d, modes, spec, o.epsilons, opt);
        csv = io::sweep_csv(pts);
        points = io::sweep_json(pts);
        std::vector<double> eps, point, window;
        for (const auto& p : pts) {
            eps.push_back(p.epsilon);
            point.push_back(1.0 - p.report.fidelity);
            window.push_back(p.window_infidelity);
        }
        bool monotone = true;
        for (std::size_t i = 1; i < pts.size(); ++i)
            if (eps[i] > eps[i - 1]) monotone &= window[i] > window[i - 1];
        verdict["window_monotone"] = monotone;
        pass &= monotone;
        if (pts.size() >= 2) {
            auto positive = [](const std::vector<double>& v) {
                return std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
            };
            const bool ok_point = positive(point), ok_window = positive(window);
            const double sp = ok_point ? log_log_slope(eps, point) : 0.0;
            const double sw = ok_window ? log_log_slope(eps, window) : 0.0;
            verdict["point_slope"] = sp;
            verdict["window_slope"] = sw;
            const bool slope_ok = ok_point && ok_window && sp >= slope_low && sp <= slope_high && sw >= slope_low &&
                                  sw <= slope_high;
            verdict["slope_in_range"] = slope_ok;
            pass &= slope_ok;
        }
        for (std::size_t i = 0; i < pts.size(); ++i)
            if (std::abs(eps[i] - reference_epsilon) < 1e-12) {
                const bool ok = point[i] < reference_infidelity && window[i] < reference_infidelity;
                verdict["reference_infidelity"] = point[i];
                verdict["reference_ok"] = ok;
                pass &= ok;
            }
    }
    verdict["pass"] = pass;
    json j = {{"mode", "sweep"}, {"points", points}, {"verdict", verdict}, {"hilbert_dimension", spec.dimension()}};
    ctx.json_file("verify.json", j);
    ctx.csv_file("fidelity.csv", csv);
    std::cout << "verify: " << (pass ? "PASS" : "FAIL") << "\n";
    return exit_ok;
}

/// Probability of staying in |down, n> under a single sideband tone of
/// coupling g = |eta Omega| sqrt(n) / 2 and detuning delta.
inline double sideband_return(double g, double delta, double t) {
    const double w = std::sqrt(4.0 * g * g + delta * delta);
    if (w == 0.0) return 1.0;
    const double s = std::sin(0.5 * w * t);
    return 1.0 - 4.0 * g * g / (w * w) * s * s;
}

inline int verify_rabi(const Context& ctx) {
    const auto& o = ctx.cfg().oracle;
    const ModeData modes = restrict_modes(ctx.modes(), *o.modes);
    const HilbertSpec spec = oracle_space(ctx, modes);
    const DriveProgram& d = ctx.drive();
    if (d.n_tones() != 1 || d.n_lit() != 1 || modes.n_modes() != 1)
        throw ConfigError("verify: rabi mode needs one tone, one illuminated ion and one mode");
    const double g = 0.5 * std::abs(modes.lamb_dicke(Eigen::Index(d.illuminated[0]), 0) * d.amplitudes(0, 0));
    const double delta = sideband_detuning(modes, d, 0, 0);
    const double period = constants::two_pi / std::sqrt(4.0 * g * g + delta * delta);
    FockPattern one(1, 1);
    QuantumState s = fock_state(spec, one);
    const Eigen::Index target = Eigen::Index(spec.encode({std::vector<std::uint8_t>(spec.n_ions, 0), one}));
    const double seg = d.duration / double(o.rabi_samples - 1);
    // At least 400 steps per Rabi period.
    const auto steps = std::size_t(std::ceil(400.0 * seg / period));
    io::Csv csv({"time_s", "population", "analytic", "deviation"});
    double worst = 0.0, final_pop = 0.0;
    std::size_t total_steps = 0;
    PropagateOptions po;
    po.carrier = o.carrier;
    for (unsigned k = 0; k < o.rabi_samples; ++k) {
        const double t = seg * double(k);
        if (k > 0) {
            po.start_time = seg * double(k - 1);
            const Propagation p = propagate_columns(s.amplitudes, d, modes, spec, seg, steps, po);
            s.amplitudes = p.states.col(0);
            total_steps += p.steps;
        }
        const double pop = std::norm(s.amplitudes[target]);
        const double ref = sideband_return(g, delta, t);
        worst = std::max(worst, std::abs(pop - ref));
        final_pop = pop;
        csv.row({t, pop, ref, pop - ref});
    }
    const double steps_per_period = double(total_steps) * period / d.duration;
    const bool pass = final_pop > rabi_return && worst < rabi_tolerance && steps_per_period >= 400.0;
    json verdict = {{"final_population", final_pop},
                    {"max_deviation", worst},
                    {"steps_per_period", steps_per_period},
                    {"pass", pass}};
    json j = {{"mode", "rabi"},
              {"rabi_period_s", period},
              {"coupling_hz", to_hz(g)},
              {"detuning_hz", to_hz(delta)},
              {"verdict", verdict}};
    ctx.json_file("verify.json", j);
    ctx.csv_file("rabi.csv", csv);
    std::cout << "verify: " << (pass ? "PASS" : "FAIL") << "\n";
    return exit_ok;
}

inline int cmd_verify(const Context& ctx) {
    return ctx.cfg().oracle.mode == "rabi" ? verify_rabi(ctx) : verify_sweep(ctx);
}

// ---- driver ---------------------------------------------------------------------

/// Runs one command; errors are reported on stderr and mapped to exit codes.
inline int run(const Options& opt, std::ostream& err = std::cerr) {
    try {
        if (opt.out.empty()) throw ConfigError("--out is required");
        const json doc = io::read_json(opt.config);
        const Context ctx(config::resolve(config::parse(doc, opt.preset, opt.seed)), opt.out, opt.force);
        if (opt.command == "modes") return cmd_modes(ctx);
        if (opt.command == "kmatrix") return cmd_kmatrix(ctx);
        if (opt.command == "compile") return cmd_compile(ctx);
        if (opt.command == "evolve") return cmd_evolve(ctx);
        if (opt.command == "verify") return cmd_verify(ctx);
        throw ConfigError("unknown command '" + opt.command + "'");
    } catch (const Error& e) {
        err << "ionhop " << opt.command << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "ionhop " << opt.command << ": internal error: " << e.what() << "\n";
        return exit_internal;
    }
}

}  // namespace ionhop::cli

#endif  // IONHOP_CLI_HPP
