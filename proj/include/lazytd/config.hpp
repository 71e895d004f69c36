#pragma once

// Experiment configuration and its JSON form.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lazytd/dynamics.hpp"
#include "lazytd/io.hpp"

namespace lazytd {

struct MrpSpec {
    std::string generator = "cyclic";  // cyclic | random | explicit
    Eigen::Index d = 3;
    CyclicOrientation orientation = CyclicOrientation::Backward;
    std::optional<Mat> transition;  // explicit generator only
    std::string reward = "random-target";  // rbar | target | random-target | zero
    std::optional<Vec> values;  // rbar or target vector
    double gamma = 0.9;
};

struct ModelSpec {
    std::string kind = "relu";  // linear | spiral | relu | tangent-of
    Eigen::Index width = 100;
    std::string base = "relu";  // linearized model for tangent-of
    std::optional<Mat> features;  // linear only; identity when absent
};

struct MeanFieldSpec {
    std::string feature = "gaussian";  // gaussian | relu
    double width = 0.5;  // bump width
    Eigen::Index particles = 200;
    double center_lo = -1.5;
    double center_hi = 1.5;
    double dt = 0.02;
    long horizon = 500000;
    long save_every = 25000;
    double r0 = 100.0;
    std::string theta_grid = "auto";  // auto | states (the state locations) | box; auto = states for gaussian
    Eigen::Index grid_points = 16;  // per wbar axis of the box grid on [center_lo, center_hi]
    double resolution = 0.25;
    double velocity_eps = 1e-5;
    Eigen::Index profile_bins = 30;
    std::string particles_file;  // optional CSV with columns omega0, wbar_1..
};

struct SweepSpec {
    std::string base = "nn-over";  // experiment run at each grid value
    std::vector<double> grid;
    int jobs = 1;
};

struct ExperimentConfig {
    std::string experiment = "spiral";  // spiral | nn-over | nn-under | meanfield | alpha-sweep | gamma-sweep
    std::uint64_t seed = 0;
    MrpSpec mrp;
    ModelSpec model;
    TrainConfig train;
    MeanFieldSpec meanfield;
    SweepSpec sweep;
    std::string output_dir;

    void validate() const;
};

/// Independent RNG stream derived from the experiment seed.
inline std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
    return std::mt19937_64(seq);
}

enum : std::uint32_t { kStreamTarget = 1, kStreamTransition = 2 };

inline Mrp build_mrp(const MrpSpec& spec, std::uint64_t seed) {
    Mat p;
    if (spec.generator == "cyclic") {
        p = cyclic_transition(spec.d, spec.orientation);
    } else if (spec.generator == "random") {
        p = random_transition(spec.d, seeded_stream(seed, kStreamTransition)());
    } else if (spec.generator == "explicit") {
        if (!spec.transition) throw ConfigError("explicit MRP needs a transition matrix");
        p = *spec.transition;
    } else {
        throw ConfigError("unknown MRP generator " + spec.generator);
    }
    const auto d = p.rows();
    if (spec.reward == "zero") return Mrp(p, Vec::Zero(d), spec.gamma);
    if (spec.reward == "random-target") {
        auto rng = seeded_stream(seed, kStreamTarget);
        std::normal_distribution<double> normal(0.0, 1.0);
        Vec target(d);
        for (Eigen::Index i = 0; i < d; ++i) target(i) = normal(rng);
        return Mrp::with_value(p, target, spec.gamma);
    }
    if (!spec.values) throw ConfigError("reward '" + spec.reward + "' needs values");
    if (spec.reward == "rbar") return Mrp(p, *spec.values, spec.gamma);
    if (spec.reward == "target") return Mrp::with_value(p, *spec.values, spec.gamma);
    throw ConfigError("unknown reward kind " + spec.reward);
}

// ---- enum names ----

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::Stochastic: return "stochastic";
        case Mode::AveragedOde: return "averaged";
        case Mode::LazyOde: return "ode";
    }
    return "?";
}
inline Mode mode_from_string(const std::string& s) {
    if (s == "stochastic") return Mode::Stochastic;
    if (s == "averaged") return Mode::AveragedOde;
    if (s == "ode") return Mode::LazyOde;
    throw ConfigError("unknown mode " + s);
}
inline std::string to_string(Integrator i) { return i == Integrator::Euler ? "euler" : "rk4"; }
inline Integrator integrator_from_string(const std::string& s) {
    if (s == "euler") return Integrator::Euler;
    if (s == "rk4") return Integrator::Rk4;
    throw ConfigError("unknown integrator " + s);
}
inline std::string to_string(TraceMode t) { return t == TraceMode::Recursive ? "recursive" : "windowed"; }
inline TraceMode trace_from_string(const std::string& s) {
    if (s == "recursive") return TraceMode::Recursive;
    if (s == "windowed") return TraceMode::Windowed;
    throw ConfigError("unknown trace mode " + s);
}
inline std::string to_string(CyclicOrientation o) { return o == CyclicOrientation::Forward ? "forward" : "backward"; }
inline CyclicOrientation orientation_from_string(const std::string& s) {
    if (s == "forward") return CyclicOrientation::Forward;
    if (s == "backward") return CyclicOrientation::Backward;
    throw ConfigError("unknown orientation " + s);
}

// ---- JSON ----

inline json to_json(const TrainConfig& c) {
    return json{{"lambda", c.lambda},
                {"alpha", c.alpha},
                {"mode", to_string(c.mode)},
                {"step", {{"kind", c.step.kind == StepSchedule::Kind::Constant ? "constant" : "robbins-monro"},
                          {"beta0", c.step.beta0},
                          {"t0", c.step.t0}}},
                {"horizon", c.horizon},
                {"integrator", to_string(c.integrator)},
                {"dt", c.dt},
                {"save_every", c.save_every},
                {"divergence_threshold", c.divergence_threshold},
                {"seed", c.seed},
                {"trace", to_string(c.trace)},
                {"trace_window", c.trace_window},
                {"stop_tol", c.stop_tol}};
}

template <class T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

inline TrainConfig train_from_json(const json& j, TrainConfig c = {}) {
    read_opt(j, "lambda", c.lambda);
    read_opt(j, "alpha", c.alpha);
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("step")) {
        const auto& s = j.at("step");
        if (s.contains("kind")) {
            const auto k = s.at("kind").get<std::string>();
            if (k == "constant") c.step.kind = StepSchedule::Kind::Constant;
            else if (k == "robbins-monro") c.step.kind = StepSchedule::Kind::RobbinsMonro;
            else throw ConfigError("unknown step kind " + k);
        }
        read_opt(s, "beta0", c.step.beta0);
        read_opt(s, "t0", c.step.t0);
    }
    read_opt(j, "horizon", c.horizon);
    if (j.contains("integrator")) c.integrator = integrator_from_string(j.at("integrator").get<std::string>());
    read_opt(j, "dt", c.dt);
    read_opt(j, "save_every", c.save_every);
    read_opt(j, "divergence_threshold", c.divergence_threshold);
    read_opt(j, "seed", c.seed);
    if (j.contains("trace")) c.trace = trace_from_string(j.at("trace").get<std::string>());
    read_opt(j, "trace_window", c.trace_window);
    read_opt(j, "stop_tol", c.stop_tol);
    return c;
}

inline json to_json(const MrpSpec& s) {
    json j{{"generator", s.generator},
           {"d", s.d},
           {"orientation", to_string(s.orientation)},
           {"reward", s.reward},
           {"gamma", s.gamma}};
    if (s.transition) j["transition"] = mat_to_json(*s.transition);
    if (s.values) j["values"] = vec_to_json(*s.values);
    return j;
}

inline MrpSpec mrp_from_json(const json& j, MrpSpec s = {}) {
    read_opt(j, "generator", s.generator);
    read_opt(j, "d", s.d);
    if (j.contains("orientation")) s.orientation = orientation_from_string(j.at("orientation").get<std::string>());
    read_opt(j, "reward", s.reward);
    read_opt(j, "gamma", s.gamma);
    if (j.contains("transition")) {
        s.transition = mat_from_json(j.at("transition"));
        s.d = s.transition->rows();
    }
    if (j.contains("values")) s.values = vec_from_json(j.at("values"));
    return s;
}

inline json to_json(const ModelSpec& s) {
    json j{{"kind", s.kind}, {"width", s.width}, {"base", s.base}};
    if (s.features) j["features"] = mat_to_json(*s.features);
    return j;
}

inline ModelSpec model_from_json(const json& j, ModelSpec s = {}) {
    read_opt(j, "kind", s.kind);
    read_opt(j, "width", s.width);
    read_opt(j, "base", s.base);
    if (j.contains("features")) s.features = mat_from_json(j.at("features"));
    return s;
}

inline json to_json(const MeanFieldSpec& s) {
    return json{{"feature", s.feature},       {"width", s.width},         {"particles", s.particles},
                {"center_lo", s.center_lo},   {"center_hi", s.center_hi}, {"dt", s.dt},
                {"horizon", s.horizon},       {"save_every", s.save_every}, {"r0", s.r0},
                {"theta_grid", s.theta_grid}, {"grid_points", s.grid_points}, {"resolution", s.resolution}, {"velocity_eps", s.velocity_eps},
                {"profile_bins", s.profile_bins}, {"particles_file", s.particles_file}};
}

inline MeanFieldSpec meanfield_from_json(const json& j, MeanFieldSpec s = {}) {
    read_opt(j, "feature", s.feature);
    read_opt(j, "width", s.width);
    read_opt(j, "particles", s.particles);
    read_opt(j, "center_lo", s.center_lo);
    read_opt(j, "center_hi", s.center_hi);
    read_opt(j, "dt", s.dt);
    read_opt(j, "horizon", s.horizon);
    read_opt(j, "save_every", s.save_every);
    read_opt(j, "r0", s.r0);
    read_opt(j, "theta_grid", s.theta_grid);
    read_opt(j, "grid_points", s.grid_points);
    read_opt(j, "resolution", s.resolution);
    read_opt(j, "velocity_eps", s.velocity_eps);
    read_opt(j, "profile_bins", s.profile_bins);
    read_opt(j, "particles_file", s.particles_file);
    return s;
}

inline json to_json(const SweepSpec& s) { return json{{"base", s.base}, {"grid", s.grid}, {"jobs", s.jobs}}; }

inline SweepSpec sweep_from_json(const json& j, SweepSpec s = {}) {
    read_opt(j, "base", s.base);
    read_opt(j, "grid", s.grid);
    read_opt(j, "jobs", s.jobs);
    return s;
}

inline json to_json(const ExperimentConfig& c) {
    return json{{"experiment", c.experiment}, {"seed", c.seed},
                {"mrp", to_json(c.mrp)},       {"model", to_json(c.model)},
                {"train", to_json(c.train)},   {"meanfield", to_json(c.meanfield)},
                {"sweep", to_json(c.sweep)},   {"output_dir", c.output_dir}};
}

/// Defaults reproducing the reference setups; fields present in `j` override them.
ExperimentConfig default_config(const std::string& experiment);

/// Sweep over alpha or gamma with every other setting taken from `base`.
inline ExperimentConfig default_sweep_config(const std::string& kind, const std::string& base) {
    if (base != "spiral" && base != "nn-over" && base != "nn-under") throw ConfigError("sweeps run spiral, nn-over or nn-under");
    ExperimentConfig c = default_config(base);
    c.experiment = kind;
    c.sweep.base = base;
    if (kind == "alpha-sweep") {
        c.sweep.grid = base == "nn-over" ? std::vector<double>{1e2, 1e3, 1e4} : std::vector<double>{50, 100, 200};
    } else if (kind == "gamma-sweep") {
        c.sweep.grid = {0.8, 0.83, 0.85, 0.87, 0.9};
    } else {
        throw ConfigError("unknown sweep kind " + kind);
    }
    return c;
}

inline ExperimentConfig config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const auto experiment = j.value("experiment", std::string("spiral"));
    const bool is_sweep = experiment == "alpha-sweep" || experiment == "gamma-sweep";
    ExperimentConfig c = is_sweep && j.contains("sweep") && j.at("sweep").contains("base")
                             ? default_sweep_config(experiment, j.at("sweep").at("base").get<std::string>())
                             : default_config(experiment);
    read_opt(j, "seed", c.seed);
    if (j.contains("mrp")) c.mrp = mrp_from_json(j.at("mrp"), c.mrp);
    if (j.contains("model")) c.model = model_from_json(j.at("model"), c.model);
    if (j.contains("train")) c.train = train_from_json(j.at("train"), c.train);
    if (j.contains("meanfield")) c.meanfield = meanfield_from_json(j.at("meanfield"), c.meanfield);
    if (j.contains("sweep")) c.sweep = sweep_from_json(j.at("sweep"), c.sweep);
    read_opt(j, "output_dir", c.output_dir);
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& p) {
    json j;
    try {
        j = json::parse(read_text(p));
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
}

inline ExperimentConfig default_config(const std::string& experiment) {
    ExperimentConfig c;
    c.experiment = experiment;
    c.train.mode = Mode::LazyOde;
    c.train.integrator = Integrator::Rk4;
    if (experiment == "spiral") {
        c.mrp.generator = "cyclic";
        c.mrp.d = 3;
        c.mrp.reward = "rbar";
        c.mrp.values = (Vec(3) << -6.85, 8.35, -1.5).finished();
        c.mrp.gamma = 0.9;
        c.model.kind = "spiral";
        c.train.alpha = 1.0;
        c.train.step.beta0 = 2e-3;
        c.train.dt = 2e-3;
        c.train.horizon = 200000;
        c.train.save_every = 500;
    } else if (experiment == "nn-over" || experiment == "nn-under") {
        const bool over = experiment == "nn-over";
        c.seed = over ? 6 : 0;
        c.mrp.generator = "cyclic";
        c.mrp.d = over ? 30 : 50;
        c.mrp.reward = "random-target";
        c.mrp.gamma = 0.9;
        c.model.kind = "relu";
        c.model.width = over ? 100 : 10;
        c.train.alpha = over ? 500.0 : 100.0;
        c.train.step.beta0 = 1e-3;
        // The rank-deficient net needs a much longer ODE time to settle on its local fixed point.
        c.train.dt = over ? 1.0 : 20.0;
        c.train.horizon = over ? 100000 : 1000000;
        c.train.save_every = over ? 500 : 5000;
        c.train.stop_tol = over ? 0.0 : 1e-8;
    } else if (experiment == "meanfield") {
        c.seed = 0;
        c.mrp.generator = "cyclic";
        c.mrp.d = 5;
        c.mrp.reward = "random-target";
        c.mrp.gamma = 0.9;
        c.model.kind = "meanfield";
    } else if (experiment == "alpha-sweep" || experiment == "gamma-sweep") {
        return default_sweep_config(experiment, "nn-over");
    } else {
        throw ConfigError("unknown experiment " + experiment);
    }
    return c;
}

inline void ExperimentConfig::validate() const {
    static const std::vector<std::string> kinds{"spiral", "nn-over", "nn-under", "meanfield", "alpha-sweep", "gamma-sweep"};
    if (std::find(kinds.begin(), kinds.end(), experiment) == kinds.end()) throw ConfigError("unknown experiment " + experiment);
    if (mrp.d < 1) throw ConfigError("mrp.d must be positive");
    if (!(mrp.gamma > 0.0 && mrp.gamma < 1.0)) throw ConfigError("mrp.gamma must lie in (0,1)");
    train.validate();
    if (experiment == "alpha-sweep" || experiment == "gamma-sweep") {
        if (sweep.grid.empty()) throw ConfigError("sweep grid is empty");
        if (sweep.jobs < 1) throw ConfigError("sweep.jobs must be >= 1");
        if (sweep.base == "meanfield" || sweep.base.find("sweep") != std::string::npos) {
            throw ConfigError("sweeps run spiral, nn-over or nn-under");
        }
    }
    if (experiment == "meanfield") {
        if (meanfield.particles < 2 || meanfield.particles % 2) throw ConfigError("meanfield.particles must be even");
        if (!meanfield.particles_file.empty() && !std::filesystem::exists(meanfield.particles_file)) {
            throw ConfigError("particles file not found: " + meanfield.particles_file);
        }
        if (meanfield.theta_grid != "auto" && meanfield.theta_grid != "states" && meanfield.theta_grid != "box") {
            throw ConfigError("meanfield.theta_grid must be auto, states or box");
        }
        if (meanfield.theta_grid == "states" && meanfield.feature != "gaussian") {
            throw ConfigError("the states grid applies to gaussian features only");
        }
        if (meanfield.horizon < 0 || meanfield.save_every < 1 || !(meanfield.dt > 0.0)) {
            throw ConfigError("meanfield integration settings are invalid");
        }
    }
    if (model.features && model.features->rows() != mrp.d) throw ConfigError("model.features must have mrp.d rows");
}

}  // namespace lazytd
