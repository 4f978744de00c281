#include "hctl/commands.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "hctl/errors.hpp"
#include "hctl/field_io.hpp"
#include "hctl/report.hpp"
#include "hctl/scenario.hpp"
#include "hctl/sde.hpp"
#include "hctl/validate.hpp"

namespace hctl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void put(RunReport& r, const std::string& key, double v) {
    if (std::isfinite(v)) r.metrics[key] = v;
}

json generator_metadata(const DiscreteGenerator& g) {
    return {{"theta", g.options().theta},
            {"stencil", g.options().stencil == Stencil::Upwind ? "upwind" : "central"},
            {"auto_upwind", g.options().auto_upwind},
            {"upwind_rows", g.stencil_log().upwind_rows},
            {"max_peclet", g.stencil_log().max_peclet},
            {"time_invariant", g.time_invariant()}};
}

void write_json(const fs::path& path, const json& doc) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << doc.dump(2) << "\n";
    if (!out) throw Error("write failed for " + path.string());
}

void write_fields(const fs::path& dir, const Grids& grids,
                  const std::vector<std::pair<std::string, const SpaceTimeField*>>& fields) {
    for (const auto& [name, field] : fields) export_field(*field, grids, (dir / ("field_" + name + ".csv")).string());
}

void run_solve(const Scenario& s, const fs::path& dir, RunReport& r, std::ostream& log) {
    const Pipeline pipe = build_pipeline(s);
    LeaderProblem leader = build_leader(s, pipe);
    const BasePair base = solve_base_pair(leader);
    leader.alpha = resolve_alpha(s, s.alpha, leader, base);
    const DualState dual = solve_dual(leader, base, s.dual);
    const OptimalitySystemSolution sol = recover_solution(leader, base, dual);

    put(r, "J1", sol.J1);
    put(r, "J2", sol.J2);
    put(r, "alpha", leader.alpha);
    put(r, "terminal_distance", sol.terminal_distance);
    put(r, "nominal_terminal_distance", sol.nominal_terminal_distance);
    put(r, "vi_residual", dual.vi_residual);
    put(r, "kkt_residual", sol.follower_kkt_residual);
    put(r, "base_kkt_residual", base.kkt_residual);
    put(r, "orthogonality_y0", sol.orthogonality_residuals.first);
    put(r, "orthogonality_p0", sol.orthogonality_residuals.second);
    put(r, "step_size", dual.step_size);
    put(r, "xi_norm", l2_norm(s.grids.space, dual.xi));
    put(r, "gap_norm", l2_norm(s.grids.space, leader.y_tg - base.y0_terminal()));
    if (pipe.hmodel && !pipe.hmodel->is_unit()) put(r, "hjb_residual", hjb_residual(*pipe.hmodel, s.grids, *s.coefficients));
    r.iterations["dual"] = dual.iterations;
    r.iterations["inner_cg"] = dual.inner_iterations;
    r.iterations["follower_cg"] = base.cg_iterations;
    r.iterations["restarts"] = dual.restarts;
    r.iterations["backtracks"] = dual.backtracks;
    r.metadata["nominal_generator"] = generator_metadata(pipe.nominal->generator());
    r.metadata["perturbed_generator"] = generator_metadata(leader.perturbed->generator());
    r.metadata["converged"] = dual.converged;

    write_fields(dir, s.grids,
                 {{"y", &sol.y}, {"p", &sol.p}, {"u1", &sol.u1_star}, {"u2", &sol.u2_star}, {"phi", &sol.phi},
                  {"theta", &sol.theta}});
    r.success = dual.converged && sol.terminal_distance <= leader.alpha * (1.0 + 1e-3);
    log << "solve: alpha " << leader.alpha << ", terminal distance " << sol.terminal_distance << ", J1 " << sol.J1
        << ", J2 " << sol.J2 << ", " << dual.iterations << " dual iterations"
        << (dual.converged ? "" : " (not converged)") << "\n";
}

void run_follower(const Scenario& s, const fs::path& dir, RunReport& r, std::ostream& log) {
    const Pipeline pipe = build_pipeline(s);
    const FollowerSolution sol = best_response(pipe.follower, s.u1);
    put(r, "J2", sol.J2);
    put(r, "kkt_residual", sol.kkt_residual);
    r.iterations["follower_cg"] = sol.cg_iterations;
    r.metadata["nominal_generator"] = generator_metadata(pipe.nominal->generator());
    const SpaceTimeField u1 = restrict_to(s.u1_mask, s.u1);
    write_fields(dir, s.grids, {{"y", &sol.y}, {"p", &sol.p}, {"u1", &u1}, {"u2", &sol.u2_star}});
    r.success = sol.kkt_residual <= s.cg.tol;
    log << "follower: J2 " << sol.J2 << ", KKT residual " << sol.kkt_residual << ", " << sol.cg_iterations
        << " CG iterations\n";
}

void run_validate(const Scenario& s, const fs::path&, RunReport& r, std::ostream& log) {
    r.checks = run_invariant_suite(s);
    r.success = true;
    for (const auto& c : r.checks) r.success = r.success && c.pass;
    log << format_checks(r.checks);
}

void run_sweep(const Scenario& s, const fs::path& dir, RunReport& r, std::ostream& log) {
    const Pipeline pipe = build_pipeline(s);
    LeaderProblem leader = build_leader(s, pipe);
    const BasePair base = solve_base_pair(leader);
    std::vector<double> alphas;
    for (double a : s.sweep) alphas.push_back(resolve_alpha(s, a, leader, base));
    const SweepReport sweep = alpha_sweep(leader, base, alphas, s.dual);
    r.sweep = sweep.rows;
    r.metadata["all_within_ball"] = sweep.all_within_ball;
    r.metadata["j1_monotone"] = sweep.j1_monotone;
    put(r, "ball_tolerance", sweep.ball_tolerance);

    std::ofstream csv(dir / "sweep.csv");
    if (!csv) throw Error("cannot open " + (dir / "sweep.csv").string() + " for writing");
    csv << "alpha,terminal_distance,J1,J2,iterations,converged\n";
    char line[256];
    for (const auto& row : sweep.rows) {
        std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g,%.17g,%d,%d\n", row.alpha, row.terminal_distance, row.J1,
                      row.J2, row.iterations, row.converged ? 1 : 0);
        csv << line;
        log << "alpha " << row.alpha << ": distance " << row.terminal_distance << ", J1 " << row.J1
            << (row.within_ball ? "" : "  OUTSIDE BALL") << (row.error.empty() ? "" : "  error: " + row.error) << "\n";
    }
    if (!csv) throw Error("write failed for sweep.csv");
    r.success = sweep.all_within_ball && sweep.j1_monotone;
}

json ensemble_summary(const PathEnsemble& e) {
    json axes = json::array();
    for (int axis = 0; axis < e.dim; ++axis) {
        std::vector<double> x, x2;
        for (int p = 0; p < e.n_paths; ++p) {
            if (e.exited[p]) continue;
            x.push_back(e.terminal(p)[axis]);
        }
        const double n = static_cast<double>(x.size());
        const double mean = x.empty() ? 0.0 : pairwise_sum(x.data(), x.size()) / n;
        for (double v : x) x2.push_back((v - mean) * (v - mean));
        const double var = x.size() > 1 ? pairwise_sum(x2.data(), x2.size()) / (n - 1.0) : 0.0;
        axes.push_back({{"mean", mean}, {"variance", var}, {"mean_se", x.empty() ? 0.0 : std::sqrt(var / n)}});
    }
    return {{"n_paths", e.n_paths}, {"alive", e.alive()}, {"clamped", e.clamped}, {"terminal", axes}};
}

void run_simulate(const Scenario& s, const fs::path&, RunReport& r, std::ostream& log) {
    const Pipeline pipe = build_pipeline(s);
    const HModel h = pipe.hmodel ? *pipe.hmodel : make_h(UnitH{}, s.grids, *s.coefficients);
    SimulationOptions free;
    free.record_levels = {s.grids.time.steps()};
    SimulationOptions absorbed = free;
    absorbed.absorption = s.sde.absorption;

    const auto nominal = simulate_nominal(*s.coefficients, s.sde.x0, s.grids, s.sde.n_paths, s.sde.seed, free);
    const auto perturbed =
        simulate_perturbed(*s.coefficients, h, s.sde.x0, s.grids, s.sde.n_paths, s.sde.seed, free);
    const auto killed = simulate_nominal(*s.coefficients, s.sde.x0, s.grids, s.sde.n_paths, s.sde.seed, absorbed);
    r.metadata["nominal"] = ensemble_summary(nominal);
    r.metadata["perturbed"] = ensemble_summary(perturbed);
    r.metadata["nominal_absorbed"] = ensemble_summary(killed);
    r.metadata["h_kind"] = kind_name(h.kind);
    put(r, "survival_fraction", static_cast<double>(killed.alive()) / killed.n_paths);
    if (h.has_closed_form()) {
        const StatReport m = martingale_check(*s.coefficients, h, s.sde.x0, s.grids, s.sde.n_paths, s.sde.seed,
                                              s.sde.t_check, s.sde.C);
        put(r, "martingale_mean", m.estimate);
        put(r, "martingale_se", m.standard_error);
        r.checks.push_back({"martingale_mean", m.pass, std::abs(m.estimate - 1.0),
                            3.0 * m.standard_error + m.bias_allowance, ""});
    }
    r.success = true;
    for (const auto& c : r.checks) r.success = r.success && c.pass;
    log << "simulate: " << s.sde.n_paths << " paths, nominal mean x_T " << r.metadata["nominal"]["terminal"][0]["mean"]
        << ", perturbed mean x_T " << r.metadata["perturbed"]["terminal"][0]["mean"] << ", survival "
        << r.metrics["survival_fraction"] << "\n";
}

int classify(const Error& e) {
    const std::string kind = e.kind();
    if (kind == "config" || kind == "precondition" || kind == "sizing") return kExitConfig;
    if (kind == "solver" || kind == "convergence") return kExitNumerical;
    return kExitIo;
}

}  // namespace

int run(const CommandOptions& options, std::ostream& log, std::ostream& err) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path dir(options.out_dir);
    auto fail = [&](int code, json error) {
        error["command"] = options.command;
        const json doc = {{"error", error}};
        err << doc.dump() << "\n";
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (!ec) {
            std::ofstream out(dir / "error.json");
            out << doc.dump(2) << "\n";
        }
        return code;
    };

    try {
        const Scenario s = load_scenario(options.scenario_path, options.overrides);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());

        RunReport r;
        r.command = options.command;
        r.metadata["scenario"] = s.source;
        r.metadata["seed"] = s.sde.seed;
        r.metadata["h_kind"] = s.hkind ? kind_name(*s.hkind) : "none";
        if (options.command == "solve") {
            run_solve(s, dir, r, log);
        } else if (options.command == "follower") {
            run_follower(s, dir, r, log);
        } else if (options.command == "validate") {
            run_validate(s, dir, r, log);
        } else if (options.command == "sweep-alpha") {
            run_sweep(s, dir, r, log);
        } else if (options.command == "simulate") {
            run_simulate(s, dir, r, log);
        } else {
            throw ConfigError("command", "unknown command '" + options.command + "'");
        }
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_json(dir / "report.json", to_json(r));
        return r.success ? kExitOk : kExitCheckFailed;
    } catch (const ConfigError& e) {
        return fail(kExitConfig, {{"kind", e.kind()}, {"field", e.field()}, {"message", e.what()}});
    } catch (const SolverError& e) {
        return fail(kExitNumerical, {{"kind", e.kind()}, {"step", e.step()}, {"message", e.what()}});
    } catch (const ConvergenceError& e) {
        return fail(kExitNumerical, {{"kind", e.kind()},
                                     {"iterations", e.iterations()},
                                     {"residual", e.residual()},
                                     {"message", e.what()}});
    } catch (const Error& e) {
        return fail(classify(e), {{"kind", e.kind()}, {"message", e.what()}});
    } catch (const std::exception& e) {
        return fail(kExitIo, {{"kind", "internal"}, {"message", e.what()}});
    }
}

}  // namespace hctl
