#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "estimator.hpp"
#include "io.hpp"
#include "model.hpp"
#include "problems.hpp"
#include "reference.hpp"
#include "training.hpp"

namespace sgpde {

namespace cli_detail {

using nlohmann::json;

inline RunConfig load_run_config(const std::string& path,
                                 const std::vector<std::string>& sets) {
    ParsedConfig parsed;
    if (!path.empty()) parsed = parse_config_text(read_file(path));
    apply_overrides(parsed, sets);
    return build_run_config(parsed);
}

inline ProblemBundle make_bundle(const RunConfig& c) {
    return problem_by_id(c.problem_id, c.d, c.T, c.sigma, c.r);
}

inline int pick_threads(int flag_threads, const RunConfig& c) {
    return flag_threads > 0 ? flag_threads : c.threads;
}

inline std::string join_path(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

inline void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create output directory '" + dir + "': " + ec.message());
}

inline json loss_json(const LossBreakdown& l) {
    return json{{"interior", l.interior},
                {"terminal", l.terminal},
                {"boundary", l.boundary},
                {"total", l.total()}};
}

inline json base_report(const char* command, const RunConfig& c) {
    json rep;
    rep["command"] = command;
    rep["config"] = json(c.echo_map);
    rep["config_hash"] = config_hash(config_echo(c));
    rep["problem"] = c.problem_id;
    return rep;
}

inline void write_report(const std::string& path, const json& rep) {
    write_file_atomic(path, rep.dump(2) + "\n");
}

// Evaluation shared by train/evaluate: relative-error curve when a reference
// solution exists (through exp for log-space problems), sup-norm against the
// scalar solution for the 1-D family, nothing otherwise.
inline json evaluate_model(const RunConfig& c, const ProblemBundle& bundle,
                           const NetModel& model, const std::string& out_dir,
                           std::vector<std::string>& artifacts) {
    const PdeProblem& p = bundle.problem;
    if (!p.time_dependent && bundle.f1d && bundle.boundary) {
        const double linf = linf_error_1d(model, bundle.f1d, bundle.boundary->a,
                                          bundle.boundary->b, c.eval_count);
        return json{{"type", "sup_norm_1d"}, {"linf", linf}, {"points", c.eval_count}};
    }
    if (bundle.exact.kind == ExactSolution::Kind::none) return json();

    const ExpModel exp_view(model);
    const Model& eval_model =
        bundle.eval_exp ? static_cast<const Model&>(exp_view) : model;
    const RngStream eval_rng = RngStream(c.hyper.seed).derive(3);
    const ErrorCurve curve = relative_error_curve(eval_model, p, bundle.exact, c.N_test,
                                                  c.M_test, c.mc_samples, eval_rng);
    const std::string csv_path = join_path(out_dir, "error_curve.csv");
    write_error_curve_csv(csv_path, curve);
    artifacts.push_back(csv_path);

    double mean_over_times = 0.0, max_mean = 0.0;
    for (long n = 0; n < curve.mean.size(); ++n) {
        mean_over_times += curve.mean(n);
        max_mean = std::max(max_mean, curve.mean(n));
    }
    mean_over_times /= static_cast<double>(curve.mean.size());
    return json{{"type", "relative_error_curve"},
                {"mean_over_times", mean_over_times},
                {"max_mean", max_mean},
                {"value_t0", curve.mean(0)},
                {"guarded_points", curve.guarded_total},
                {"division_guard", curve.guard},
                {"csv", csv_path}};
}

inline TrainOptions train_options(const RunConfig& c, int threads) {
    TrainOptions opts;
    opts.hidden = c.hidden;
    opts.activation = c.activation;
    opts.use_ansatz = c.ansatz;
    opts.threads = threads;
    return opts;
}

inline int cmd_train(const RunConfig& c, int threads) {
    const ProblemBundle bundle = make_bundle(c);
    ensure_out_dir(c.out_dir);
    TrainOptions opts = train_options(c, threads);
    if (c.checkpoint_every > 0) {
        opts.on_epoch = [&](const EpochRecord& rec, const NetModel& m) {
            if ((rec.epoch + 1) % c.checkpoint_every == 0)
                save_checkpoint(
                    join_path(c.out_dir,
                              "model_epoch_" + std::to_string(rec.epoch + 1) + ".ckpt"),
                    m.net);
        };
    }

    const TrainResult res = train(bundle, c.hyper, opts);

    std::vector<std::string> artifacts;
    const std::string loss_path = join_path(c.out_dir, "loss_history.csv");
    write_loss_history_csv(loss_path, res.history);
    artifacts.push_back(loss_path);
    const std::string ckpt_path = join_path(c.out_dir, "model.ckpt");
    save_checkpoint(ckpt_path, res.model.net);
    artifacts.push_back(ckpt_path);

    if (c.dump_trajectories > 0 && bundle.problem.time_dependent) {
        std::vector<TrajectoryBatch> dump;
        const RngStream dump_rng = RngStream(c.hyper.seed).derive(2);
        for (long m = 0; m < c.dump_trajectories; ++m) {
            const RngStream traj = dump_rng.derive(static_cast<std::uint64_t>(m));
            const double delta =
                sample_offset(traj.derive(kSubOffset),
                              bundle.problem.T / static_cast<double>(c.hyper.N));
            dump.push_back(simulate_trajectory(
                bundle.problem, res.model,
                coarse_time_grid(bundle.problem.T, c.hyper.N, delta), traj,
                c.hyper.gradient_free));
        }
        const std::string traj_path = join_path(c.out_dir, "trajectories.csv");
        write_trajectories_csv(traj_path, dump, c.dump_coords);
        artifacts.push_back(traj_path);
    }

    json rep = base_report("train", c);
    rep["epochs_run"] = res.epochs_run;
    rep["wall_seconds"] = res.wall_seconds;
    rep["seconds"] = json{{"simulate", res.stats.simulate_seconds},
                          {"residual", res.stats.residual_seconds},
                          {"backward", res.stats.backward_seconds}};
    rep["final_loss"] = res.history.empty() ? json() : loss_json(res.history.back().loss);
    rep["checkpoint"] = ckpt_path;
    if (res.diverged_at >= 0) {
        rep["diverged_at"] = res.diverged_at;
        rep["divergence"] = res.divergence_what;
    }
    rep["evaluation"] = evaluate_model(c, bundle, res.model, c.out_dir, artifacts);
    rep["artifacts"] = artifacts;
    const std::string rep_path = join_path(c.out_dir, "report.json");
    write_report(rep_path, rep);

    std::cout << "trained " << c.problem_id << " for " << res.epochs_run << " epochs in "
              << res.wall_seconds << " s";
    if (!res.history.empty())
        std::cout << ", final loss " << res.history.back().loss.total();
    std::cout << "\nreport: " << rep_path << "\n";
    if (res.diverged_at >= 0) {
        std::cerr << "training diverged at epoch " << res.diverged_at << ": "
                  << res.divergence_what << "\n";
        return 3;
    }
    return 0;
}

inline int cmd_evaluate(const RunConfig& c, int threads, const std::string& ckpt) {
    (void)threads;
    const ProblemBundle bundle = make_bundle(c);
    ensure_out_dir(c.out_dir);
    const std::string path = ckpt.empty() ? join_path(c.out_dir, "model.ckpt") : ckpt;
    NetworkParams net = load_checkpoint(path);

    // the checkpoint must match the architecture this configuration describes
    std::vector<int> want;
    want.push_back(c.d + (bundle.problem.time_dependent ? 1 : 0));
    for (int h : c.hidden) want.push_back(h);
    want.push_back(1);
    require(net.layers.size() == want.size() - 1,
            "checkpoint depth does not match net.hidden");
    for (std::size_t k = 0; k < net.layers.size(); ++k) {
        require(net.layers[k].W.cols() == want[k] &&
                    net.layers[k].W.rows() == want[k + 1],
                "checkpoint layer shapes do not match the configuration");
    }
    require(net.hidden_activation == c.activation,
            "checkpoint activation does not match net.activation");

    const NetModel model = wrap_model(std::move(net), bundle.problem, c.ansatz);
    std::vector<std::string> artifacts;
    json rep = base_report("evaluate", c);
    rep["checkpoint"] = path;
    rep["evaluation"] = evaluate_model(c, bundle, model, c.out_dir, artifacts);
    rep["artifacts"] = artifacts;
    const std::string rep_path = join_path(c.out_dir, "evaluate_report.json");
    write_report(rep_path, rep);
    std::cout << rep["evaluation"].dump() << "\nreport: " << rep_path << "\n";
    return 0;
}

inline int cmd_error_matrix(const RunConfig& c, int threads) {
    const ProblemBundle bundle = make_bundle(c);
    require(!bundle.problem.time_dependent,
            "the error sweep runs on the 1-D time-independent family");
    ensure_out_dir(c.out_dir);
    const TrainOptions opts = train_options(c, threads);
    const ErrorMatrix em = error_matrix_run(
        bundle, c.matrix_dt, c.matrix_M, c.hyper, opts, c.eval_count,
        [](long i, long j, double err) {
            std::cout << "cell M_index=" << i << " dt_index=" << j << " linf=" << err
                      << std::endl;
        });

    std::vector<std::string> artifacts;
    const std::string csv_path = join_path(c.out_dir, "error_matrix.csv");
    write_error_matrix_csv(csv_path, em);
    artifacts.push_back(csv_path);
    const std::string tbl_path = join_path(c.out_dir, "error_matrix.txt");
    write_error_matrix_table(tbl_path, em);
    artifacts.push_back(tbl_path);

    json rep = base_report("error-matrix", c);
    rep["artifacts"] = artifacts;
    const std::string rep_path = join_path(c.out_dir, "error_matrix_report.json");
    write_report(rep_path, rep);
    std::cout << "report: " << rep_path << "\n";
    return 0;
}

inline int cmd_compare(const RunConfig& c, int threads) {
    const ProblemBundle bundle = make_bundle(c);
    require(bundle.problem.time_dependent, "compare needs a time-dependent problem");
    require(bundle.exact.kind != ExactSolution::Kind::none,
            "compare needs a reference solution");
    ensure_out_dir(c.out_dir);
    const TrainOptions opts = train_options(c, threads);

    std::vector<std::pair<std::string, ErrorCurve>> curves;
    json methods = json::array();
    auto run_one = [&](const std::string& name, const ShotgunHyperparams& h) {
        const TrainResult res = train(bundle, h, opts);
        json entry;
        entry["name"] = name;
        entry["epochs_run"] = res.epochs_run;
        entry["wall_seconds"] = res.wall_seconds;
        const double per = res.epochs_run > 0 ? 1.0 / res.epochs_run : 0.0;
        entry["seconds_per_epoch"] = res.wall_seconds * per;
        entry["backward_seconds_per_epoch"] = res.stats.backward_seconds * per;
        entry["final_loss"] =
            res.history.empty() ? json() : loss_json(res.history.back().loss);
        if (res.diverged_at >= 0) entry["diverged_at"] = res.diverged_at;

        const ExpModel exp_view(res.model);
        const Model& eval_model =
            bundle.eval_exp ? static_cast<const Model&>(exp_view) : res.model;
        const ErrorCurve curve =
            relative_error_curve(eval_model, bundle.problem, bundle.exact, c.N_test,
                                 c.M_test, c.mc_samples, RngStream(h.seed).derive(3));
        double mean_over_times = 0.0;
        for (long n = 0; n < curve.mean.size(); ++n) mean_over_times += curve.mean(n);
        mean_over_times /= static_cast<double>(curve.mean.size());
        entry["mean_rel_error"] = mean_over_times;
        entry["rel_error_t0"] = curve.mean(0);
        curves.emplace_back(name, curve);
        methods.push_back(entry);
        std::cout << name << ": mean rel error " << mean_over_times
                  << ", backward s/epoch " << entry["backward_seconds_per_epoch"]
                  << std::endl;
    };

    for (long M : c.compare_M) {
        ShotgunHyperparams h = c.hyper;
        h.method = TrainMethod::rfd;
        h.M = M;
        run_one("rfd-M" + std::to_string(M), h);
    }
    {
        ShotgunHyperparams h = c.hyper;
        h.method = TrainMethod::sde_match;
        h.N = c.baseline_N;
        if (c.baseline_epochs > 0) h.epochs = c.baseline_epochs;
        run_one("sde-match", h);
    }

    std::vector<std::string> artifacts;
    const std::string csv_path = join_path(c.out_dir, "comparison.csv");
    write_comparison_csv(csv_path, curves);
    artifacts.push_back(csv_path);
    json rep = base_report("compare", c);
    rep["methods"] = methods;
    rep["artifacts"] = artifacts;
    const std::string rep_path = join_path(c.out_dir, "compare_report.json");
    write_report(rep_path, rep);
    std::cout << "report: " << rep_path << "\n";
    return 0;
}

inline int cmd_reference(const RunConfig& c, double t, const std::vector<double>& xs) {
    const ProblemBundle bundle = make_bundle(c);
    require(bundle.exact.kind != ExactSolution::Kind::none,
            "this problem has no reference solution");
    Vec x(c.d);
    if (xs.size() == 1) {
        x.setConstant(xs[0]);
    } else {
        require(static_cast<int>(xs.size()) == c.d,
                "--x needs 1 or problem.d coordinates");
        for (int i = 0; i < c.d; ++i) x(i) = xs[static_cast<std::size_t>(i)];
    }
    require(t >= 0.0 && t <= bundle.problem.T, "--t must lie in [0, T]");

    if (bundle.exact.kind == ExactSolution::Kind::closed_form) {
        std::cout << "value " << detail::canon_num(bundle.exact.value(t, x)) << " stderr 0\n";
    } else {
        const McEstimate est =
            mc_log_expectation(bundle.exact.mc_g, x, t, bundle.exact.horizon,
                               c.mc_samples, RngStream(c.hyper.seed).derive(9));
        std::cout << "value " << detail::canon_num(est.mean) << " stderr "
                  << detail::canon_num(est.std_err) << "\n";
    }
    return 0;
}

inline int cmd_moment_scan(const RunConfig& c) {
    const ProblemBundle bundle = make_bundle(c);
    require(!bundle.problem.time_dependent && bundle.f1d,
            "the moment scan uses the 1-D family with its exact solution");
    ensure_out_dir(c.out_dir);

    FnModel exact;
    exact.d = 1;
    exact.timed = false;
    exact.v = [f = bundle.f1d](double, const Vec& x) { return f(x(0)); };
    const auto rows =
        residual_moment_scan(exact, bundle.problem, c.scan_dt, c.scan_M, c.scan_trials,
                             RngStream(c.hyper.seed).derive(7));
    const std::string csv_path = join_path(c.out_dir, "moment_scan.csv");
    write_moment_scan_csv(csv_path, rows);
    std::cout << "wrote " << rows.size() << " rows to " << csv_path << "\n";
    return 0;
}

}  // namespace cli_detail

// Command-line entry point; returns the process exit code (0 success,
// 2 configuration/io errors, 3 divergence).
inline int run_cli(int argc, char** argv) {
    CLI::App app{"trajectory-shotgun solver for high-dimensional parabolic PDEs"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    int threads_flag = 0;
    app.add_option("-c,--config", config_path, "configuration file");
    app.add_option("--set", sets, "override: key=value (repeatable)");
    app.add_option("--threads", threads_flag, "worker threads (overrides config and env)")
        ->envname("SGPDE_THREADS");

    auto* train_cmd = app.add_subcommand("train", "train a model");
    auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a saved model");
    std::string ckpt;
    eval_cmd->add_option("--checkpoint", ckpt, "checkpoint path (default <out>/model.ckpt)");
    auto* matrix_cmd =
        app.add_subcommand("error-matrix", "sweep local step and draw count on 1-D problems");
    auto* compare_cmd =
        app.add_subcommand("compare", "compare against the trajectory-matching baseline");
    auto* ref_cmd = app.add_subcommand("reference", "print the reference value at (t, x)");
    double ref_t = 0.0;
    std::vector<double> ref_x;
    ref_cmd->add_option("--t", ref_t, "evaluation time")->required();
    ref_cmd->add_option("--x", ref_x, "coordinates (one value broadcasts)")
        ->required()
        ->delimiter(',');
    auto* scan_cmd = app.add_subcommand("moment-scan", "residual moment table");

    // let the shared options (-c, --set, --threads) follow the subcommand name
    for (CLI::App* sub : {train_cmd, eval_cmd, matrix_cmd, compare_cmd, ref_cmd, scan_cmd})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const RunConfig cfg = cli_detail::load_run_config(config_path, sets);
        const int threads = cli_detail::pick_threads(threads_flag, cfg);
        if (train_cmd->parsed()) return cli_detail::cmd_train(cfg, threads);
        if (eval_cmd->parsed()) return cli_detail::cmd_evaluate(cfg, threads, ckpt);
        if (matrix_cmd->parsed()) return cli_detail::cmd_error_matrix(cfg, threads);
        if (compare_cmd->parsed()) return cli_detail::cmd_compare(cfg, threads);
        if (ref_cmd->parsed()) return cli_detail::cmd_reference(cfg, ref_t, ref_x);
        if (scan_cmd->parsed()) return cli_detail::cmd_moment_scan(cfg);
        throw config_error("no subcommand given");
    } catch (const config_error& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const divergence_error& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace sgpde
