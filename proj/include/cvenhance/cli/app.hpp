#pragma once

// Subcommands of the cvenhance tool. run_cli() is the whole program minus
// argv plumbing, so the test suites can drive it in-process.
//
// Exit codes: 0 ok, 2 usage/config error, 3 model domain error,
// 4 output not writable, 5 solver did not converge.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "cvenhance/cascade_analysis.hpp"
#include "cvenhance/cli/format.hpp"
#include "cvenhance/cli/run_config.hpp"
#include "cvenhance/nopa_transfer.hpp"
#include "cvenhance/quadrature_state.hpp"

namespace cvenhance::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitModel = 3,
    kExitOutput = 4,
    kExitNotConverged = 5,
};

/// Config stages with kappa resolved in order, plus the state entering and
/// leaving each stage.
struct ResolvedChain {
    std::vector<Stage> stages;
    std::vector<EprState> inputs;
    std::vector<EprState> outputs;
    std::vector<std::optional<FitResult>> fits;

    bool all_fits_converged() const {
        for (const auto& f : fits)
            if (f && !f->converged) return false;
        return true;
    }
};

inline ResolvedChain resolve_chain(const RunConfig& cfg, ModelMode mode) {
    ResolvedChain rc;
    EprState state = cfg.input.state();
    for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
        const StageSpec& spec = cfg.stages[i];
        try {
            Stage st{{spec.gamma1, spec.gamma2, 0.0, spec.tau}, cfg.context(spec)};
            std::optional<FitResult> fit;
            switch (spec.source) {
                case KappaSource::Direct: st.nopa.kappa = spec.kappa; break;
                case KappaSource::Pump: st.nopa.kappa = kappa_from_pump(spec.pump); break;
                case KappaSource::Fit:
                    fit = fit_kappa({spec.target_db}, state, st.nopa, st.ctx, mode);
                    st.nopa.kappa = fit->kappa_fit;
                    break;
                case KappaSource::Optimal: st.nopa.kappa = optimal_kappa(state, st.nopa, st.ctx, mode).kappa_opt; break;
            }
            rc.inputs.push_back(state);
            state = stage_map(state, st.nopa, st.ctx, mode);
            rc.outputs.push_back(state);
            rc.stages.push_back(st);
            rc.fits.push_back(fit);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(i + 1, e.what());
        }
    }
    return rc;
}

struct Settings {
    RunConfig cfg;
    ModelMode mode = ModelMode::Physical;
    int precision = 10;
    std::string out_path;
};

namespace detail {

inline std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' '); }

inline std::string human_var(double v) { return general(v, 4); }
inline std::string human_db(double v) { return fixed(v, 1); }

inline std::string csv_row(const std::vector<std::string>& cells) {
    std::string row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) row += ',';
        row += cells[i];
    }
    return row + '\n';
}

// Writes `csv` to `path` when set; returns false if the file cannot be written.
inline bool write_file(const std::string& path, const std::string& csv, std::ostream& err) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (f) f << csv;
    if (!f) {
        err << "error: cannot write output file '" << path << "'\n";
        return false;
    }
    return true;
}

inline void warn_unconverged(const ResolvedChain& rc, std::ostream& err) {
    for (std::size_t i = 0; i < rc.fits.size(); ++i)
        if (rc.fits[i] && !rc.fits[i]->converged)
            err << "warning: stage " << i + 1 << " kappa fit did not converge (residual "
                << general(rc.fits[i]->residual_db, 4) << " dB)\n";
}

}  // namespace detail

inline int cmd_eval(const Settings& s, std::ostream& out, std::ostream& err) {
    const ResolvedChain rc = resolve_chain(s.cfg, s.mode);
    const int p = s.precision;
    using detail::pad;

    std::string csv = detail::csv_row({"stage", "kappa", "v_corr", "db_corr", "v_anti", "db_anti", "duan_sum", "entangled"});
    out << "mode: " << mode_name(s.mode) << '\n';
    out << pad("stage", 7) << pad("kappa", 12) << pad("v_corr", 9) << pad("dB", 7) << pad("v_anti", 9) << pad("dB", 7)
        << pad("duan_sum", 10) << "entangled\n";

    auto emit = [&](const std::string& label, std::optional<double> kappa, const EprState& st) {
        const auto duan = duan_sum(st);
        const double dc = variance_to_db(st.v_corr()).db, da = variance_to_db(st.v_anti()).db;
        out << pad(label, 7) << pad(kappa ? general(*kappa, 6) : "-", 12) << pad(detail::human_var(st.v_corr()), 9)
            << pad(detail::human_db(dc), 7) << pad(detail::human_var(st.v_anti()), 9) << pad(detail::human_db(da), 7)
            << pad(detail::human_var(duan.sum), 10) << (duan.entangled ? "yes" : "no") << '\n';
        csv += detail::csv_row({label == "input" ? "0" : label, kappa ? general(*kappa, p) : "", general(st.v_corr(), p),
                                general(dc, p), general(st.v_anti(), p), general(da, p), general(duan.sum, p),
                                duan.entangled ? "1" : "0"});
    };
    emit("input", std::nullopt, s.cfg.input.state());
    for (std::size_t i = 0; i < rc.stages.size(); ++i) emit(std::to_string(i + 1), rc.stages[i].nopa.kappa, rc.outputs[i]);
    detail::warn_unconverged(rc, err);

    if (!s.out_path.empty() && !detail::write_file(s.out_path, csv, err)) return kExitOutput;
    return kExitOk;
}

struct SweepArgs {
    std::vector<double> g1_range;
    std::vector<double> g2_range;
    std::size_t steps = 50;
    KappaPolicy policy = KappaPolicy::Fixed;
};

inline int cmd_sweep(const Settings& s, const SweepArgs& a, std::ostream& out, std::ostream& err) {
    const ResolvedChain rc = resolve_chain(s.cfg, s.mode);
    const Stage& last = rc.stages.back();
    const auto g1 = linear_axis(a.g1_range[0], a.g1_range[1], a.steps);
    const auto g2 = linear_axis(a.g2_range[0], a.g2_range[1], a.steps);
    const SweepGrid grid = sweep_gamma(rc.inputs.back(), last.nopa, last.ctx, a.policy, g1, g2, s.mode);

    const int p = s.precision;
    std::string csv = detail::csv_row({"gamma1", "gamma2", "kappa_used", "v_corr", "db_corr"});
    for (std::size_t i = 0; i < g1.size(); ++i)
        for (std::size_t j = 0; j < g2.size(); ++j) {
            const auto& c = grid.at(i, j);
            csv += detail::csv_row({general(g1[i], p), general(g2[j], p), general(c.kappa, p), general(c.v_corr, p),
                                    general(c.db.db, p)});
        }
    detail::warn_unconverged(rc, err);
    if (s.out_path.empty()) {
        out << csv;
        return kExitOk;
    }
    if (!detail::write_file(s.out_path, csv, err)) return kExitOutput;
    out << "wrote " << g1.size() * g2.size() << " cells to " << s.out_path << '\n';
    return kExitOk;
}

// Human summary, then the machine-readable block, also written to --out when given.
inline int finish_report(const Settings& s, const std::string& csv, bool converged, std::ostream& out,
                         std::ostream& err) {
    out << csv;
    if (!s.out_path.empty() && !detail::write_file(s.out_path, csv, err)) return kExitOutput;
    return converged ? kExitOk : kExitNotConverged;
}

inline int cmd_fixedpoint(const Settings& s, std::optional<double> gamma2_override, std::ostream& out,
                          std::ostream& err) {
    const ResolvedChain rc = resolve_chain(s.cfg, s.mode);
    NopaParams nopa = rc.stages.back().nopa;
    if (gamma2_override) nopa.gamma2 = *gamma2_override;
    const double r_prime = squeezing_from_variances(rc.inputs.back()).r_prime;
    const FixedPointResult fp = turning_point(nopa, rc.stages.back().ctx, r_prime, s.mode);

    const char* status = "converged";
    switch (fp.status) {
        case FixedPointStatus::Converged:
            out << "turning point: v* = " << detail::human_var(fp.v_star) << " (" << detail::human_db(fp.db_star.db)
                << " dB) for gamma1=" << general(nopa.gamma1, 6) << " gamma2=" << general(nopa.gamma2, 6)
                << " kappa=" << general(nopa.kappa, 6) << " r'=" << general(r_prime, 6) << '\n';
            break;
        case FixedPointStatus::NoCrossing:
            status = "no_crossing";
            out << "no turning point: stage output never crosses its input for r in [0, 10]\n";
            break;
        case FixedPointStatus::Degenerate:
            status = "degenerate";
            out << "degenerate stage: the map is the identity, every input is a fixed point\n";
            break;
    }
    detail::warn_unconverged(rc, err);
    const int p = s.precision;
    std::string csv = detail::csv_row({"gamma1", "gamma2", "kappa", "r_prime", "status", "v_star", "db_star", "iterations", "bracket"});
    csv += detail::csv_row({general(nopa.gamma1, p), general(nopa.gamma2, p), general(nopa.kappa, p), general(r_prime, p),
                            status, fp.converged() ? general(fp.v_star, p) : "",
                            fp.converged() ? general(fp.db_star.db, p) : "", std::to_string(fp.iterations),
                            general(fp.bracket, p)});
    return finish_report(s, csv, fp.converged() && rc.all_fits_converged(), out, err);
}

inline int cmd_fit_kappa(const Settings& s, double target_db, std::ostream& out, std::ostream& err) {
    const ResolvedChain rc = resolve_chain(s.cfg, s.mode);
    const Stage& last = rc.stages.back();
    const FitResult fit = fit_kappa({target_db}, rc.inputs.back(), last.nopa, last.ctx, s.mode);
    out << "fitted kappa = " << general(fit.kappa_fit, 8) << " (threshold " << general(last.nopa.threshold(), 6)
        << "), residual " << general(fit.residual_db, 3) << " dB, " << (fit.converged ? "converged" : "NOT converged")
        << '\n';
    const int p = s.precision;
    std::string csv = detail::csv_row({"gamma1", "gamma2", "target_db", "kappa_fit", "residual_db", "converged"});
    csv += detail::csv_row({general(last.nopa.gamma1, p), general(last.nopa.gamma2, p), general(target_db, p),
                            general(fit.kappa_fit, p), general(fit.residual_db, p), fit.converged ? "1" : "0"});
    return finish_report(s, csv, fit.converged, out, err);
}

inline int cmd_fit_chain(const Settings& s, std::ostream& out, std::ostream& err) {
    const RunConfig& c = s.cfg;
    if (c.measured.size() < 2 || c.stages.size() != c.measured.size()) {
        err << "config error: fit-chain needs at least two measured.K states and one stage.K per measured state "
               "(stage.K maps measured.K-1 to measured.K; stage.1 is the source and is not fitted)\n";
        return kExitConfig;
    }
    std::vector<EprState> measured;
    for (const auto& m : c.measured) measured.emplace_back(m.v_corr, m.v_anti);
    std::vector<Stage> stages;
    for (std::size_t i = 1; i < c.stages.size(); ++i)
        stages.push_back({{c.stages[i].gamma1, c.stages[i].gamma2, 0.0, c.stages[i].tau}, c.context(c.stages[i])});
    const auto fits = fit_chain(measured, stages, s.mode);

    const int p = s.precision;
    bool all = true;
    std::string csv = detail::csv_row({"stage", "gamma1", "gamma2", "target_db", "kappa_fit", "residual_db", "converged"});
    for (std::size_t i = 0; i < fits.size(); ++i) {
        const double target = variance_to_db(measured[i + 1].v_corr()).db;
        all = all && fits[i].converged;
        out << "stage " << i + 2 << ": kappa = " << general(fits[i].kappa_fit, 8) << ", target "
            << detail::human_db(target) << " dB, residual " << general(fits[i].residual_db, 3) << " dB"
            << (fits[i].converged ? "" : " (NOT converged)") << '\n';
        csv += detail::csv_row({std::to_string(i + 2), general(stages[i].nopa.gamma1, p), general(stages[i].nopa.gamma2, p),
                                general(target, p), general(fits[i].kappa_fit, p), general(fits[i].residual_db, p),
                                fits[i].converged ? "1" : "0"});
    }
    return finish_report(s, csv, all, out, err);
}

inline int cmd_optimize_kappa(const Settings& s, std::ostream& out, std::ostream& err) {
    const ResolvedChain rc = resolve_chain(s.cfg, s.mode);
    const Stage& last = rc.stages.back();
    const OptimalKappa opt = optimal_kappa(rc.inputs.back(), last.nopa, last.ctx, s.mode);
    const double db = variance_to_db(opt.v_out_min).db;
    out << "optimal kappa = " << general(opt.kappa_opt, 8) << " (threshold " << general(last.nopa.threshold(), 6)
        << "), minimum output v_corr = " << detail::human_var(opt.v_out_min) << " (" << detail::human_db(db) << " dB)\n";
    detail::warn_unconverged(rc, err);
    const int p = s.precision;
    std::string csv = detail::csv_row({"gamma1", "gamma2", "kappa_opt", "v_out_min", "db_out_min"});
    csv += detail::csv_row({general(last.nopa.gamma1, p), general(last.nopa.gamma2, p), general(opt.kappa_opt, p),
                            general(opt.v_out_min, p), general(db, p)});
    return finish_report(s, csv, rc.all_fits_converged(), out, err);
}

inline int cmd_project(const Settings& s, double improved_gamma2, ProjectionPolicy policy, std::ostream& out,
                       std::ostream& err) {
    const ResolvedChain rc = resolve_chain(s.cfg, s.mode);
    const Stage& last = rc.stages.back();
    const EprState& in = rc.inputs.back();
    const Decibels base = variance_to_db(rc.outputs.back().v_corr());
    const Decibels projected = projection_improved_loss(in, last.nopa, improved_gamma2, last.ctx, s.mode, policy);
    NopaParams improved = last.nopa;
    improved.gamma2 = improved_gamma2;
    const double kappa =
        policy == ProjectionPolicy::Reoptimize ? optimal_kappa(in, improved, last.ctx, s.mode).kappa_opt : last.nopa.kappa;
    const char* pol = policy == ProjectionPolicy::Reoptimize ? "reoptimize" : "hold";

    out << "gamma2 " << general(last.nopa.gamma2, 6) << " -> " << general(improved_gamma2, 6) << " (" << pol
        << " kappa = " << general(kappa, 6) << "): " << detail::human_db(base.db) << " dB -> "
        << detail::human_db(projected.db) << " dB\n";
    detail::warn_unconverged(rc, err);
    const int p = s.precision;
    std::string csv = detail::csv_row({"gamma1", "gamma2_base", "gamma2_improved", "policy", "kappa", "db_base", "db_projected"});
    csv += detail::csv_row({general(last.nopa.gamma1, p), general(last.nopa.gamma2, p), general(improved_gamma2, p), pol,
                            general(kappa, p), general(base.db, p), general(projected.db, p)});
    return finish_report(s, csv, rc.all_fits_converged(), out, err);
}

inline int cmd_check_duan(const Settings& s, std::ostream& out, std::ostream& err) {
    const int p = s.precision;
    std::string csv = detail::csv_row({"label", "v_corr", "duan_sum", "entangled"});
    auto emit = [&](const std::string& label, const EprState& st) {
        const auto d = duan_sum(st);
        out << detail::pad(label, 12) << "sum = " << detail::pad(detail::human_var(d.sum), 8)
            << (d.entangled ? "entangled (< 4)" : "not entangled (>= 4)") << '\n';
        csv += detail::csv_row({label, general(st.v_corr(), p), general(d.sum, p), d.entangled ? "1" : "0"});
    };
    emit("input", s.cfg.input.state());
    for (std::size_t i = 0; i < s.cfg.measured.size(); ++i)
        emit("measured." + std::to_string(i + 1), EprState(s.cfg.measured[i].v_corr, s.cfg.measured[i].v_anti));
    out << csv;
    if (!s.out_path.empty() && !detail::write_file(s.out_path, csv, err)) return kExitOutput;
    return kExitOk;
}

inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"cvenhance: cascaded NOPA entanglement enhancement toolkit", "cvenhance"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, mode_flag, out_flag;
    std::optional<int> precision_flag;
    app.add_option("--config", config_path, "Run configuration file")->required();
    app.add_option("--mode", mode_flag, "Model mode: strict | physical (overrides config)")
        ->check(CLI::IsMember({"strict", "physical"}));
    app.add_option("--out", out_flag, "Output CSV path (overrides output.path)");
    app.add_option("--precision", precision_flag, "Significant digits in CSV output, 6..17");

    auto* eval = app.add_subcommand("eval", "Propagate the input through every stage");

    SweepArgs sweep_args;
    std::string sweep_policy = "fixed";
    auto* sweep = app.add_subcommand("sweep", "gamma1 x gamma2 grid of the last stage's output");
    sweep->add_option("--g1-range", sweep_args.g1_range, "gamma1 min,max")->required()->expected(2)->delimiter(',');
    sweep->add_option("--g2-range", sweep_args.g2_range, "gamma2 min,max")->required()->expected(2)->delimiter(',');
    sweep->add_option("--steps", sweep_args.steps, "Points per axis")->check(CLI::PositiveNumber);
    sweep->add_option("--kappa-policy", sweep_policy, "fixed | optimal | threshold-fraction")
        ->check(CLI::IsMember({"fixed", "optimal", "threshold-fraction"}));

    std::optional<double> fp_gamma2;
    auto* fixedpoint = app.add_subcommand("fixedpoint", "Enhancement turning point of the last stage");
    fixedpoint->add_option("--gamma2", fp_gamma2, "Replace the last stage's gamma2 (kappa held)");

    double target_db = 0.0;
    auto* fitk = app.add_subcommand("fit-kappa", "Fit the last stage's kappa to a target output");
    fitk->add_option("--target-db", target_db, "Target correlated variance in dB")->required();

    auto* fitc = app.add_subcommand("fit-chain", "Fit kappa per stage to the measured.K chain");
    auto* optk = app.add_subcommand("optimize-kappa", "Kappa minimising the last stage's output");

    double improved_gamma2 = 0.0;
    std::string proj_policy = "reoptimize";
    auto* project = app.add_subcommand("project", "Last-stage output with reduced intra-cavity loss");
    project->add_option("--improved-gamma2", improved_gamma2, "Reduced gamma2")->required();
    project->add_option("--kappa-policy", proj_policy, "reoptimize | hold")->check(CLI::IsMember({"reoptimize", "hold"}));

    auto* duan = app.add_subcommand("check-duan", "Inseparability sums for the input and measured states");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return kExitOk;
        }
        err << "usage error: " << e.what() << '\n';
        return kExitConfig;
    }

    Settings s;
    try {
        s.cfg = load_config(config_path);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    }
    s.mode = mode_flag.empty() ? s.cfg.mode : *parse_mode(mode_flag);
    s.precision = precision_flag.value_or(s.cfg.output.precision);
    if (s.precision < kMinPrecision || s.precision > kMaxPrecision) {
        err << "usage error: --precision must be in [6, 17]\n";
        return kExitConfig;
    }
    s.out_path = out_flag.empty() ? s.cfg.output.path : out_flag;

    if (sweep->parsed()) {
        if (sweep_args.g1_range[0] > sweep_args.g1_range[1] || sweep_args.g2_range[0] > sweep_args.g2_range[1] ||
            (sweep_args.steps > 1 &&
             (sweep_args.g1_range[0] == sweep_args.g1_range[1] || sweep_args.g2_range[0] == sweep_args.g2_range[1]))) {
            err << "usage error: ranges must be min,max with min < max (min == max only with --steps 1)\n";
            return kExitConfig;
        }
        sweep_args.policy = sweep_policy == "optimal"              ? KappaPolicy::Optimal
                            : sweep_policy == "threshold-fraction" ? KappaPolicy::ThresholdFraction
                                                                   : KappaPolicy::Fixed;
    }

    try {
        if (eval->parsed()) return cmd_eval(s, out, err);
        if (sweep->parsed()) return cmd_sweep(s, sweep_args, out, err);
        if (fixedpoint->parsed()) return cmd_fixedpoint(s, fp_gamma2, out, err);
        if (fitk->parsed()) return cmd_fit_kappa(s, target_db, out, err);
        if (fitc->parsed()) return cmd_fit_chain(s, out, err);
        if (optk->parsed()) return cmd_optimize_kappa(s, out, err);
        if (project->parsed())
            return cmd_project(s, improved_gamma2,
                               proj_policy == "hold" ? ProjectionPolicy::HoldPump : ProjectionPolicy::Reoptimize, out, err);
        if (duan->parsed()) return cmd_check_duan(s, out, err);
    } catch (const StageError& e) {
        err << "model error in " << e.what() << '\n';
        return kExitModel;
    } catch (const DomainError& e) {
        err << "model error: " << e.what() << '\n';
        return kExitModel;
    }
    return kExitConfig;
}

}  // namespace cvenhance::cli
