#pragma once

// Experiment runners behind the CLI. Each run produces tables (CSV) and a JSON
// report whose numbers can be recomputed from the tables.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

#include "lazytd/analysis.hpp"
#include "lazytd/config.hpp"
#include "lazytd/meanfield.hpp"

namespace lazytd {

struct RunReport {
    std::string experiment;
    bool diverged = false;
    double divergence_time = std::numeric_limits<double>::quiet_NaN();
    double final_projected_td_error = std::numeric_limits<double>::quiet_NaN();
    double final_mu_error = std::numeric_limits<double>::quiet_NaN();  // ||alpha V_w - V*||_mu
    std::string fit_series;  // trajectory column the rate was fitted on
    RateFit fit;
    double displacement = 0.0;  // sup_t ||w(t) - w(0)||_2
    json certificates = json::object();
    double wall_clock_s = 0.0;
    std::vector<std::string> files;
};

struct RunResult {
    ExperimentConfig config;
    RunReport report;
    std::vector<std::pair<std::string, Table>> tables;  // file name -> table
    Trajectory trajectory;  // lazy and stochastic runs

    [[nodiscard]] const Table& table(const std::string& name) const {
        for (const auto& [n, t] : tables)
            if (n == name) return t;
        throw ConfigError("no table " + name);
    }
};

inline json to_json(const RateFit& f) {
    return json{{"rate", number_to_json(f.rate)},
                {"intercept", number_to_json(f.intercept)},
                {"r2", number_to_json(f.r2)},
                {"points", f.points},
                {"clean", f.clean}};
}

inline json report_json(const RunResult& r) {
    const auto& rep = r.report;
    return json{{"config", to_json(r.config)},
                {"experiment", rep.experiment},
                {"diverged", rep.diverged},
                {"divergence_time", number_to_json(rep.divergence_time)},
                {"final_projected_td_error", number_to_json(rep.final_projected_td_error)},
                {"final_mu_error", number_to_json(rep.final_mu_error)},
                {"fit_series", rep.fit_series},
                {"fit", to_json(rep.fit)},
                {"displacement", number_to_json(rep.displacement)},
                {"certificates", rep.certificates},
                {"wall_clock_s", rep.wall_clock_s},
                {"files", rep.files}};
}

/// Writes config.json, report.json and every table into `dir`.
inline void write_run(RunResult& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    r.report.files = {"config.json", "report.json"};
    for (const auto& [name, t] : r.tables) r.report.files.push_back(name);
    write_text(dir / "config.json", to_json(r.config).dump(2) + "\n");
    for (const auto& [name, t] : r.tables) write_text(dir / name, t.to_csv());
    write_text(dir / "report.json", report_json(r).dump(2) + "\n");
}

// ---------------------------------------------------------------- models

struct ModelBundle {
    ModelPtr model;
    Vec w0;
};

inline ModelBundle build_model(const ModelSpec& spec, Eigen::Index d, std::uint64_t seed) {
    if (spec.kind == "spiral") {
        if (d != 3) throw ConfigError("spiral model needs a 3-state MRP");
        return {std::make_shared<SpiralModel>(), Vec::Zero(1)};
    }
    if (spec.kind == "relu") {
        return {std::make_shared<ReluNet>(spec.width, grid_states(d)), relu_init_doubled(spec.width, 1, seed)};
    }
    if (spec.kind == "linear") {
        Mat phi = spec.features ? *spec.features : Mat::Identity(d, d);
        if (phi.rows() != d) throw ConfigError("linear features need one row per state");
        const auto p = phi.cols();
        return {std::make_shared<LinearModel>(std::move(phi)), Vec::Zero(p)};
    }
    if (spec.kind == "tangent-of") {
        if (spec.base == "tangent-of") throw ConfigError("tangent-of cannot wrap itself");
        ModelSpec base = spec;
        base.kind = spec.base;
        auto inner = build_model(base, d, seed);
        return {std::make_shared<TangentModel>(inner.model, inner.w0), inner.w0};
    }
    throw ConfigError("unknown model kind " + spec.kind);
}

// ---------------------------------------------------------------- lazy / stochastic runs

/// Column names of trajectory.csv for parametric runs.
inline std::vector<std::string> trajectory_columns(Eigen::Index p, bool with_lyapunov) {
    std::vector<std::string> c{"t", "projected_td_error", "mu_error", "mu_mse", "displacement"};
    if (with_lyapunov) c.emplace_back("lyapunov");
    for (Eigen::Index k = 0; k < p; ++k) c.push_back("w_" + std::to_string(k));
    return c;
}

inline RunResult run_parametric(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    RunResult out;
    out.config = cfg;
    out.report.experiment = cfg.experiment;

    const Mrp mrp = build_mrp(cfg.mrp, cfg.seed);
    const StationaryMeasure mu = stationary_measure(mrp);
    const Vec vstar = exact_value(mrp);
    const ModelBundle mb = build_model(cfg.model, mrp.d(), cfg.seed);
    const LazyFlow flow(mb.model, mrp, mu, cfg.train.lambda, cfg.train.alpha);

    Trajectory traj;
    if (cfg.train.mode == Mode::Stochastic) {
        traj = run_stochastic(*mb.model, mrp, mu, mb.w0, cfg.train);
    } else {
        std::function<bool(double, const Vec&)> observer;
        if (cfg.train.stop_tol > 0.0) {
            const double tol = cfg.train.stop_tol;
            observer = [&flow, tol](double, const Vec& w) { return projected_td_error(flow, w) < tol; };
        }
        traj = run_lazy(flow, mb.w0, cfg.train, observer);
    }

    const RankProfile prof = model_rank_profile(*mb.model, mb.w0);
    std::optional<LazyGeometry> geom;
    if (prof.over_parametrized()) {
        GeometryOptions gopt;
        gopt.seed = cfg.seed;
        gopt.lipschitz_samples = 50;
        geom = lazy_geometry(*mb.model, mb.w0, mrp, mu, vstar, gopt);
    }

    Table t;
    t.columns = trajectory_columns(mb.w0.size(), geom.has_value());
    for (std::size_t i = 0; i < traj.size(); ++i) {
        const Vec& w = traj.params[i];
        const Vec f = flow.function_value(w);
        const double err = mu_norm(f - vstar, mu);
        std::vector<double> row{traj.times[i], projected_td_error(flow, w), err, err * err, (w - mb.w0).norm()};
        if (geom) row.push_back(lyapunov_u(*geom, f, vstar));
        for (Eigen::Index k = 0; k < w.size(); ++k) row.push_back(w(k));
        t.add_row(std::move(row));
    }

    auto& rep = out.report;
    rep.diverged = traj.diverged;
    rep.divergence_time = traj.divergence_time;
    if (!t.rows.empty()) {
        rep.final_projected_td_error = t.rows.back()[1];
        rep.final_mu_error = t.rows.back()[2];
    }
    rep.displacement = traj.max_displacement();
    rep.fit_series = "mu_mse";
    rep.fit = fit_exponential_rate(t.column("t"), t.column(rep.fit_series));

    rep.certificates["rank"] = prof.rank;
    rep.certificates["states"] = prof.states;
    rep.certificates["over_parametrized"] = prof.over_parametrized();
    if (geom) {
        const auto th1 = theorem1_certificate(*geom, mrp, flow, traj, vstar);
        rep.certificates["theorem1"] = json{{"passed", th1.passed()},
                                            {"envelope_holds", th1.envelope_holds},
                                            {"worst_envelope_ratio", number_to_json(th1.worst_envelope_ratio)},
                                            {"envelope_rate", number_to_json(th1.envelope_rate)},
                                            {"kappa", number_to_json(th1.kappa)},
                                            {"sigma_min", number_to_json(th1.sigma_min)},
                                            {"lipschitz_dv", number_to_json(th1.lipschitz_dv)},
                                            {"radius_m", number_to_json(th1.radius_m)},
                                            {"alpha0", number_to_json(th1.alpha0)},
                                            {"preconditions", th1.theoretical_preconditions()},
                                            {"fit", to_json(th1.fit)},
                                            {"lyapunov_fit", to_json(th1.lyapunov_fit)}};
    } else if (mb.model->value(mb.w0).lpNorm<Eigen::Infinity>() <= 1e-10) {
        const auto th2 = theorem2_certificate(*mb.model, mrp, mu, cfg.train.lambda, mb.w0, {{cfg.train.alpha, traj}},
                                              1e-6);
        const auto& e = th2.entries.front();
        rep.certificates["theorem2"] = json{{"converged", e.converged},
                                            {"final_projected_error", number_to_json(e.final_projected_error)},
                                            {"error_to_vstar", number_to_json(e.error_to_vstar)},
                                            {"bound_factor", th2.bound_factor},
                                            {"best_tangent_error", th2.best_tangent_error},
                                            {"excess", number_to_json(e.excess)}};
    }
    out.tables.emplace_back("trajectory.csv", std::move(t));
    out.trajectory = std::move(traj);
    rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline RunResult run_spiral(ExperimentConfig cfg) {
    cfg.experiment = "spiral";
    return run_parametric(cfg);
}

inline RunResult run_spiral(double alpha) {
    auto cfg = default_config("spiral");
    cfg.train.alpha = alpha;
    return run_spiral(cfg);
}

inline RunResult run_nn(const std::string& regime, double gamma, std::uint64_t seed) {
    if (regime != "over" && regime != "under") throw ConfigError("regime must be over or under");
    auto cfg = default_config("nn-" + regime);
    cfg.mrp.gamma = gamma;
    cfg.seed = seed;
    cfg.train.seed = seed;
    return run_parametric(cfg);
}

// ---------------------------------------------------------------- mean field

inline FeaturePtr build_features(const MeanFieldSpec& s) {
    if (s.feature == "gaussian") return std::make_shared<GaussianBumpFeature>(s.width);
    if (s.feature == "relu") return std::make_shared<ReluFeature>();
    throw ConfigError("unknown feature family " + s.feature);
}

/// Lexicographic order on (wbar, omega0), so results do not depend on input order.
inline ParticleEnsemble canonical_order(const ParticleEnsemble& e) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(e.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    std::stable_sort(idx.begin(), idx.end(), [&e](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index k = 0; k < e.param_dim(); ++k) {
            if (e.wbar(a, k) != e.wbar(b, k)) return e.wbar(a, k) < e.wbar(b, k);
        }
        return e.omega0(a) < e.omega0(b);
    });
    ParticleEnsemble out{Vec(e.size()), Mat(e.size(), e.param_dim())};
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        out.omega0(r) = e.omega0(idx[i]);
        out.wbar.row(r) = e.wbar.row(idx[i]);
    }
    return out;
}

inline ParticleEnsemble load_particles(const std::filesystem::path& p) {
    const Table t = Table::from_csv(read_text(p));
    const auto c0 = t.column_index("omega0");
    std::vector<std::size_t> wcols;
    for (std::size_t k = 1;; ++k) {
        const auto it = std::find(t.columns.begin(), t.columns.end(), "wbar_" + std::to_string(k));
        if (it == t.columns.end()) break;
        wcols.push_back(static_cast<std::size_t>(it - t.columns.begin()));
    }
    if (wcols.empty() || t.rows.empty()) throw ConfigError(p.string() + ": needs omega0 and wbar_1.. columns");
    const auto n = static_cast<Eigen::Index>(t.rows.size());
    ParticleEnsemble e{Vec(n), Mat(n, static_cast<Eigen::Index>(wcols.size()))};
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = t.rows[static_cast<std::size_t>(i)];
        e.omega0(i) = row[c0];
        for (std::size_t k = 0; k < wcols.size(); ++k) e.wbar(i, static_cast<Eigen::Index>(k)) = row[wcols[k]];
    }
    return e;
}

inline Table particles_table(const ParticleEnsemble& e) {
    Table t;
    t.columns = {"omega0"};
    for (Eigen::Index k = 0; k < e.param_dim(); ++k) t.columns.push_back("wbar_" + std::to_string(k + 1));
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        std::vector<double> row{e.omega0(i)};
        for (Eigen::Index k = 0; k < e.param_dim(); ++k) row.push_back(e.wbar(i, k));
        t.add_row(std::move(row));
    }
    return t;
}

/// Mean-field state space: d equally spaced points on [-1, 1].
inline ParticleEnsemble initial_ensemble(const ExperimentConfig& cfg) {
    const auto& s = cfg.meanfield;
    if (!s.particles_file.empty()) return load_particles(s.particles_file);
    if (s.feature == "gaussian") return doubled_bump_ensemble(s.particles, 1, s.center_lo, s.center_hi, cfg.seed);
    return doubled_relu_ensemble(s.particles, 1, cfg.seed);
}

inline RunResult run_meanfield(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    RunResult out;
    out.config = cfg;
    out.report.experiment = "meanfield";
    const auto& s = cfg.meanfield;

    const MeanFieldSystem sys(build_features(s), grid_states(cfg.mrp.d), build_mrp(cfg.mrp, cfg.seed));
    const ParticleEnsemble e0 = canonical_order(initial_ensemble(cfg));
    require_size(e0.param_dim(), sys.features->param_dim(sys.states.cols()), "particle parameter dimension");
    const auto run = integrate_ensemble(e0, sys, s.dt, s.horizon, s.save_every);

    const auto q = e0.param_dim();
    const bool on_states = s.theta_grid == "states" || (s.theta_grid == "auto" && s.feature == "gaussian");
    const Mat grid = on_states ? sys.states : box_grid(q, s.center_lo, s.center_hi, s.grid_points);
    Binning bins{Vec::Constant(q, s.center_lo), Vec::Constant(q, s.center_hi),
                 std::vector<Eigen::Index>(static_cast<std::size_t>(q), s.profile_bins)};

    Table traj, snaps, gprof, hprof;
    traj.columns = {"t",         "velocity_norm",      "bellman_residual",   "optimality_gap",     "separation_passed",
                    "covered",   "max_abs_omega0",     "h1_total",           "calibration",        "tolerance",
                    "fixed_point", "implication_applies", "implication_holds"};
    snaps.columns = {"t", "i", "omega0"};
    gprof.columns = {"t", "grid_index"};
    for (Eigen::Index k = 0; k < q; ++k) {
        snaps.columns.push_back("wbar_" + std::to_string(k + 1));
        gprof.columns.push_back("theta_" + std::to_string(k + 1));
    }
    gprof.columns.emplace_back("g");
    hprof.columns = {"t", "bin", "h1"};

    std::vector<OptimalityReport> reports;
    for (std::size_t n = 0; n < run.snapshots.size(); ++n) {
        const auto& e = run.snapshots[n];
        const double t = run.times[n];
        const auto sep = separation_check(e, s.r0, grid, s.resolution);
        const auto opt = fixed_point_optimality(e, sys, s.velocity_eps, sep);
        const auto h1 = h1_profile(e, bins);
        reports.push_back(opt);
        traj.add_row({t, opt.velocity_norm, opt.bellman_residual, opt.optimality_gap, sep.passed() ? 1.0 : 0.0,
                      sep.covered ? 1.0 : 0.0, sep.max_abs_omega0, h1.total, opt.calibration, opt.tolerance,
                      opt.fixed_point ? 1.0 : 0.0, opt.implication_applies ? 1.0 : 0.0,
                      opt.implication_holds ? 1.0 : 0.0});
        for (Eigen::Index i = 0; i < e.size(); ++i) {
            std::vector<double> row{t, static_cast<double>(i), e.omega0(i)};
            for (Eigen::Index k = 0; k < q; ++k) row.push_back(e.wbar(i, k));
            snaps.add_row(std::move(row));
        }
        const Vec g = g_profile(e, sys, grid);
        for (Eigen::Index r = 0; r < grid.rows(); ++r) {
            std::vector<double> row{t, static_cast<double>(r)};
            for (Eigen::Index k = 0; k < q; ++k) row.push_back(grid(r, k));
            row.push_back(g(r));
            gprof.add_row(std::move(row));
        }
        for (std::size_t b = 0; b < h1.per_bin.size(); ++b) hprof.add_row({t, static_cast<double>(b), h1.per_bin[b]});
        hprof.add_row({t, -1.0, h1.outside});
    }

    auto& rep = out.report;
    const auto& last = reports.back();
    rep.final_mu_error = last.optimality_gap;
    rep.final_projected_td_error = last.bellman_residual;
    rep.fit_series = "optimality_gap";
    rep.fit = fit_exponential_rate(traj.column("t"), traj.column("optimality_gap"));
    const auto first_fixed = std::find_if(reports.begin(), reports.end(),
                                          [](const OptimalityReport& r) { return r.implication_applies; });
    const auto gaps = traj.column("optimality_gap");
    bool tail_monotone = true;
    for (std::size_t i = gaps.size() / 2 + 1; i < gaps.size(); ++i) tail_monotone = tail_monotone && gaps[i] <= gaps[i - 1];
    rep.certificates["meanfield"] = json{
        {"note", "d, N, bump width, horizon and dt are artifact choices; no reference run exists"},
        {"velocity_eps", s.velocity_eps},
        {"final_velocity_norm", last.velocity_norm},
        {"final_optimality_gap", last.optimality_gap},
        {"final_separation_passed", traj.rows.back()[4] != 0.0},
        {"reached_fixed_point", first_fixed != reports.end()},
        {"first_fixed_point_time",
         first_fixed == reports.end() ? json(nullptr) : json(run.times[static_cast<std::size_t>(first_fixed - reports.begin())])},
        {"implication_holds_everywhere",
         std::all_of(reports.begin(), reports.end(), [](const OptimalityReport& r) { return r.implication_holds; })},
        {"gap_nonincreasing_last_half", tail_monotone}};
    out.tables.emplace_back("trajectory.csv", std::move(traj));
    out.tables.emplace_back("snapshots.csv", std::move(snaps));
    out.tables.emplace_back("g_profile.csv", std::move(gprof));
    out.tables.emplace_back("h1_profile.csv", std::move(hprof));
    rep.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

// ---------------------------------------------------------------- sweeps

struct SweepResult {
    ExperimentConfig config;
    std::vector<std::optional<RunResult>> runs;  // by grid index
    std::vector<std::string> errors;  // empty string when the run completed
    Table summary;
    json certificates = json::object();
    double wall_clock_s = 0.0;
};

inline std::string sweep_child_name(std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "run_%03zu", i);
    return name;
}

inline ExperimentConfig sweep_child(const ExperimentConfig& cfg, std::size_t i) {
    ExperimentConfig c = cfg;
    c.experiment = cfg.sweep.base;
    c.sweep = SweepSpec{};
    const double v = cfg.sweep.grid.at(i);
    if (cfg.experiment == "alpha-sweep") c.train.alpha = v;
    else c.mrp.gamma = v;
    if (!cfg.output_dir.empty()) c.output_dir = (std::filesystem::path(cfg.output_dir) / sweep_child_name(i)).string();
    return c;
}

inline SweepResult run_sweep(const ExperimentConfig& cfg) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    if (cfg.experiment != "alpha-sweep" && cfg.experiment != "gamma-sweep") throw ConfigError("not a sweep: " + cfg.experiment);
    const auto n = cfg.sweep.grid.size();
    SweepResult out;
    out.config = cfg;
    out.runs.resize(n);
    out.errors.assign(n, "");

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out.runs[i] = run_parametric(sweep_child(cfg, i));
            } catch (const std::exception& e) {
                out.errors[i] = e.what();
            }
        }
    };
    const auto jobs = std::min<std::size_t>(static_cast<std::size_t>(cfg.sweep.jobs), n);
    std::vector<std::thread> pool;
    for (std::size_t k = 1; k < jobs; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    out.summary.columns = {"index", "value", "completed", "diverged", "final_projected_td_error", "final_mu_error",
                           "rate", "r2", "displacement"};
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = out.runs[i];
        if (r) {
            const auto& rep = r->report;
            out.summary.add_row({static_cast<double>(i), cfg.sweep.grid[i], 1.0, rep.diverged ? 1.0 : 0.0,
                                 rep.final_projected_td_error, rep.final_mu_error, rep.fit.rate, rep.fit.r2,
                                 rep.displacement});
        } else {
            out.summary.add_row({static_cast<double>(i), cfg.sweep.grid[i], 0.0, nan, nan, nan, nan, nan, nan});
        }
    }

    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < n; ++i)
        if (out.runs[i]) ok.push_back(i);
    if (cfg.experiment == "gamma-sweep") {
        std::vector<std::size_t> order = ok;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return cfg.sweep.grid[a] < cfg.sweep.grid[b]; });
        bool nonincreasing = order.size() == n;
        json rates = json::array();
        for (std::size_t k = 0; k < order.size(); ++k) {
            const auto& rep = out.runs[order[k]]->report;
            rates.push_back(json{{"gamma", cfg.sweep.grid[order[k]]}, {"rate", rep.fit.rate}, {"r2", rep.fit.r2}});
            if (k > 0 && rep.fit.rate > out.runs[order[k - 1]]->report.fit.rate) nonincreasing = false;
        }
        out.certificates["rate_monotonicity"] = json{{"series", out.runs[ok.empty() ? 0 : ok[0]]
                                                                    ? out.runs[ok[0]]->report.fit_series
                                                                    : std::string()},
                                                     {"rates", rates},
                                                     {"nonincreasing", nonincreasing}};
    } else {
        std::vector<double> alphas, disp;
        bool any_diverged = false;
        for (auto i : ok) {
            alphas.push_back(cfg.sweep.grid[i]);
            disp.push_back(out.runs[i]->report.displacement);
            any_diverged = any_diverged || out.runs[i]->report.diverged;
        }
        const double slope = alphas.size() > 1 ? loglog_slope(alphas, disp) : 0.0;
        out.certificates["displacement_scaling"] =
            json{{"slope", slope}, {"max_slope", -0.8}, {"passed", ok.size() == n && !any_diverged && slope <= -0.8}};

        // Local-convergence bound across the alpha grid for zero-initialized, rank-deficient models.
        if (!ok.empty()) {
            const auto& c0 = out.runs[ok[0]]->config;
            const Mrp mrp = build_mrp(c0.mrp, c0.seed);
            const auto mb = build_model(c0.model, mrp.d(), c0.seed);
            const auto prof = model_rank_profile(*mb.model, mb.w0);
            if (prof.under_parametrized() && mb.model->value(mb.w0).lpNorm<Eigen::Infinity>() <= 1e-10) {
                std::vector<AlphaRun> runs;
                for (auto i : ok) runs.push_back({cfg.sweep.grid[i], out.runs[i]->trajectory});
                const auto th2 = theorem2_certificate(*mb.model, mrp, stationary_measure(mrp), cfg.train.lambda, mb.w0,
                                                      runs, 1e-6);
                json entries = json::array();
                for (const auto& e : th2.entries) {
                    entries.push_back(json{{"alpha", e.alpha},
                                           {"converged", e.converged},
                                           {"final_projected_error", number_to_json(e.final_projected_error)},
                                           {"error_to_vstar", number_to_json(e.error_to_vstar)},
                                           {"excess", number_to_json(e.excess)}});
                }
                out.certificates["theorem2"] = json{{"passed", th2.passed()},
                                                    {"envelope_c", th2.envelope_c},
                                                    {"bound_factor", th2.bound_factor},
                                                    {"best_tangent_error", th2.best_tangent_error},
                                                    {"entries", entries}};
            }
        }
    }
    out.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline void write_sweep(SweepResult& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json files = json::array({"config.json", "summary.csv", "report.json"});
    json errors = json::array();
    for (std::size_t i = 0; i < s.runs.size(); ++i) {
        if (s.runs[i]) {
            const auto sub = sweep_child_name(i);
            write_run(*s.runs[i], dir / sub);
            files.push_back(sub + "/");
        }
        if (!s.errors[i].empty()) errors.push_back(json{{"index", i}, {"error", s.errors[i]}});
    }
    write_text(dir / "config.json", to_json(s.config).dump(2) + "\n");
    write_text(dir / "summary.csv", s.summary.to_csv());
    write_text(dir / "report.json", json{{"config", to_json(s.config)},
                                         {"experiment", s.config.experiment},
                                         {"certificates", s.certificates},
                                         {"errors", errors},
                                         {"wall_clock_s", s.wall_clock_s},
                                         {"files", files}}
                                         .dump(2) + "\n");
}

}  // namespace lazytd
