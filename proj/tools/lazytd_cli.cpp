// Command-line front end: runs one experiment (or a sweep) and writes its
// config echo, CSV tables and JSON report into an output directory.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "lazytd/lazytd.hpp"

namespace {

using namespace lazytd;

struct Overrides {
    std::string config_path;
    std::optional<double> alpha;
    std::optional<double> gamma;
    std::optional<std::uint64_t> seed;
    std::optional<long> horizon;
    std::optional<double> dt;
    std::string out;
    std::string mode;
    std::string integrator;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_path, "JSON config; flags below override it")->check(CLI::ExistingFile);
    cmd->add_option("--alpha", o.alpha, "lazy scaling alpha (>= 1)");
    cmd->add_option("--gamma", o.gamma, "discount factor in (0,1)");
    cmd->add_option("--seed", o.seed, "experiment seed");
    cmd->add_option("--horizon", o.horizon, "number of steps");
    cmd->add_option("--dt", o.dt, "integrator step");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--mode", o.mode, "training engine")->check(CLI::IsMember({"stochastic", "ode"}));
    cmd->add_option("--integrator", o.integrator, "ODE integrator")->check(CLI::IsMember({"euler", "rk4"}));
}

ExperimentConfig base_config(const Overrides& o, const std::string& experiment) {
    if (o.config_path.empty()) return default_config(experiment);
    auto c = load_config(o.config_path);
    if (c.experiment != experiment) {
        throw ConfigError(o.config_path + " describes '" + c.experiment + "', expected '" + experiment + "'");
    }
    return c;
}

void apply(const Overrides& o, ExperimentConfig& c) {
    const bool mf = c.experiment == "meanfield";
    if (o.alpha) c.train.alpha = *o.alpha;
    if (o.gamma) c.mrp.gamma = *o.gamma;
    if (o.seed) {
        c.seed = *o.seed;
        c.train.seed = *o.seed;
    }
    if (o.horizon) (mf ? c.meanfield.horizon : c.train.horizon) = *o.horizon;
    if (o.dt) (mf ? c.meanfield.dt : c.train.dt) = *o.dt;
    if (!o.mode.empty()) c.train.mode = mode_from_string(o.mode);
    if (!o.integrator.empty()) c.train.integrator = integrator_from_string(o.integrator);
    if (!o.out.empty()) c.output_dir = o.out;
    if (c.output_dir.empty()) c.output_dir = "runs/" + c.experiment;
}

void print_run(const RunResult& r, const std::string& dir) {
    const auto& rep = r.report;
    std::printf("%s: %s", rep.experiment.c_str(), rep.diverged ? "diverged" : "completed");
    if (rep.diverged) std::printf(" at t=%g", rep.divergence_time);
    std::printf("\n  final projected TD error  %.6g\n  final mu error            %.6g\n",
                rep.final_projected_td_error, rep.final_mu_error);
    std::printf("  rate (%s)  %.6g  r2 %.4f\n  wall clock  %.2f s\n  written to  %s\n", rep.fit_series.c_str(),
                rep.fit.rate, rep.fit.r2, rep.wall_clock_s, dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lazy-training TD experiments"};
    app.require_subcommand(1);

    Overrides o;
    std::string regime = "over";
    std::string particles_file;
    std::string sweep_kind = "alpha";
    std::string sweep_base = "nn-over";
    std::vector<double> grid;
    int jobs = 0;

    auto* spiral = app.add_subcommand("spiral", "three-state spiral counterexample");
    add_common(spiral, o);

    auto* nn = app.add_subcommand("nn", "doubled ReLU network on a cyclic chain");
    add_common(nn, o);
    nn->add_option("--regime", regime, "over or under")->check(CLI::IsMember({"over", "under"}));

    auto* mf = app.add_subcommand("meanfield", "particle mean-field dynamics");
    add_common(mf, o);
    mf->add_option("--particles-file", particles_file, "CSV with omega0, wbar_1.. columns");

    auto* sweep = app.add_subcommand("sweep", "alpha or gamma sweep");
    add_common(sweep, o);
    auto* kind_opt = sweep->add_option("--kind", sweep_kind, "alpha or gamma (default alpha, or the config's)")
                         ->check(CLI::IsMember({"alpha", "gamma"}));
    sweep->add_option("--base", sweep_base, "experiment at each grid value")
        ->check(CLI::IsMember({"spiral", "nn-over", "nn-under"}));
    sweep->add_option("--grid", grid, "grid values")->delimiter(',');
    sweep->add_option("--jobs", jobs, "parallel workers")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(sweep)) {
            std::string kind = sweep_kind + "-sweep";
            ExperimentConfig c;
            if (o.config_path.empty()) {
                c = default_sweep_config(kind, sweep_base);
            } else {
                if (kind_opt->count() == 0) kind = load_config(o.config_path).experiment;
                c = base_config(o, kind);
            }
            if (!grid.empty()) c.sweep.grid = grid;
            if (jobs > 0) c.sweep.jobs = jobs;
            apply(o, c);
            c.validate();
            auto s = run_sweep(c);
            write_sweep(s, c.output_dir);
            std::printf("%s over %zu values (%zu failed) in %.2f s\n%s\nwritten to %s\n", kind.c_str(),
                        c.sweep.grid.size(),
                        static_cast<std::size_t>(std::count_if(s.errors.begin(), s.errors.end(),
                                                               [](const std::string& e) { return !e.empty(); })),
                        s.wall_clock_s, s.certificates.dump(2).c_str(), c.output_dir.c_str());
            return 0;
        }

        ExperimentConfig c;
        RunResult r;
        if (app.got_subcommand(spiral)) {
            c = base_config(o, "spiral");
            apply(o, c);
            r = run_spiral(c);
        } else if (app.got_subcommand(nn)) {
            const std::string experiment = o.config_path.empty() ? "nn-" + regime : load_config(o.config_path).experiment;
            if (experiment != "nn-over" && experiment != "nn-under") throw ConfigError("config is not an nn experiment");
            c = base_config(o, experiment);
            apply(o, c);
            r = run_parametric(c);
        } else {
            c = base_config(o, "meanfield");
            if (!particles_file.empty()) c.meanfield.particles_file = particles_file;
            apply(o, c);
            r = run_meanfield(c);
        }
        write_run(r, c.output_dir);
        print_run(r, c.output_dir);
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
