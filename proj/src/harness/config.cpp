#include <cmath>
#include <fstream>
#include <string>

#include "dynbid/errors.hpp"
#include "dynbid/harness.hpp"

namespace dynbid {

namespace {

using nlohmann::json;

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: field '") + key + "' has the wrong type");
    }
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return get_or<T>(j, key, T{});
}

PwlCurve curve_from(const json& j, const char* what) {
    try {
        return j.get<PwlCurve>();
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + what + ": " + e.what());
    }
}

SolverSettings solver_from(const json& j) {
    SolverSettings s;
    s.ode_tol.rel = get_or(j, "ode_rtol", s.ode_tol.rel);
    s.ode_tol.abs = get_or(j, "ode_atol", s.ode_tol.abs);
    s.bisect_tol = get_or(j, "bisect_tol", s.bisect_tol);
    s.horizon_pad = get_opt<double>(j, "horizon_pad");
    s.value_cap_factor = get_or(j, "value_cap_factor", s.value_cap_factor);
    s.max_bisect_iters = get_or(j, "max_bisect_iters", s.max_bisect_iters);
    s.max_grid_step = get_or(j, "max_grid_step", s.max_grid_step);
    try {
        s.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("config: solver: ") + e.what());
    }
    return s;
}

AlgorithmSpec algorithm_from(const json& j, const SolverSettings& solver) {
    AlgorithmSpec spec;
    if (j.is_string()) {
        spec.variant = parse_variant(j.get<std::string>());
        spec.params.solver = solver;
        return spec;
    }
    if (!j.is_object() || !j.contains("variant")) throw ConfigError("config: each algorithm needs a 'variant'");
    spec.variant = parse_variant(get_or<std::string>(j, "variant", ""));
    AlgorithmParams& p = spec.params;
    p.rounds = get_or(j, "rounds", p.rounds);
    p.episodes_per_round = get_opt<std::size_t>(j, "episodes_per_round");
    p.c1 = get_or(j, "c1", p.c1);
    p.b0 = get_opt<double>(j, "b0");
    p.warmup_c0 = get_or(j, "warmup_c0", p.warmup_c0);
    const auto lk = get_opt<double>(j, "lambda_k");
    const auto lq = get_opt<double>(j, "lambda_q");
    if (lk.has_value() != lq.has_value()) throw ConfigError("config: give both lambda_k and lambda_q, or neither");
    if (lk) p.bonus = BonusSchedule{*lk, *lq, p.warmup_c0};
    p.calibration_replicates = get_or(j, "calibration_replicates", p.calibration_replicates);
    p.max_refits = get_or(j, "max_refits", p.max_refits);
    p.resolve_tol = get_or(j, "resolve_tol", p.resolve_tol);
    p.ridge = get_opt<double>(j, "ridge");
    p.q_fit.c_floor = get_or(j, "c_floor", p.q_fit.c_floor);
    p.q_fit.eta_fit = get_or(j, "eta_fit", p.q_fit.eta_fit);
    p.q_fit.opt_tol = get_or(j, "opt_tol", p.q_fit.opt_tol);
    p.q_fit.max_iters = get_or(j, "max_opt_iters", p.q_fit.max_iters);
    p.solver = solver;

    if (p.rounds == 0 || (p.episodes_per_round && *p.episodes_per_round == 0)) {
        throw ConfigError("config: rounds and episodes_per_round must be positive");
    }
    if (!(p.c1 > 0.0)) throw ConfigError("config: c1 must be positive");
    if (p.b0 && !(*p.b0 > 0.0)) throw ConfigError("config: b0 must be positive");
    if (p.warmup_c0 == 0 || p.calibration_replicates == 0 || p.max_refits == 0) {
        throw ConfigError("config: warmup_c0, calibration_replicates and max_refits must be positive");
    }
    if (p.bonus && (p.bonus->lambda_k < 0.0 || p.bonus->lambda_q < 0.0)) {
        throw ConfigError("config: bonus coefficients must be nonnegative");
    }
    if (p.ridge && *p.ridge < 0.0) throw ConfigError("config: ridge must be nonnegative");
    if (!(p.q_fit.c_floor > 0.0) || !(p.q_fit.eta_fit > 0.0) || !(p.q_fit.opt_tol > 0.0)) {
        throw ConfigError("config: c_floor, eta_fit and opt_tol must be positive");
    }
    return spec;
}

}  // namespace

double SmoothSpec::t_f() const { return std::log(1.0 / tail_tol) / theta; }

ExperimentConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    ExperimentConfig cfg;
    cfg.source = doc;
    try {
        const json env = doc.value("env", json::object());
        EnvSpec& e = cfg.env;
        if (env.contains("smooth")) {
            const json& s = env.at("smooth");
            SmoothSpec sm;
            sm.theta = get_or(s, "theta", sm.theta);
            sm.alpha_exp = get_or(s, "alpha_exp", sm.alpha_exp);
            sm.tail_tol = get_or(s, "tail_tol", sm.tail_tol);
            sm.q_top = get_or(s, "q_top", sm.q_top);
            if (!(sm.theta > 0.0) || !(sm.alpha_exp > 0.0) || !(sm.q_top > 0.0)) {
                throw ConfigError("config: smooth theta, alpha_exp and q_top must be positive");
            }
            if (!(sm.tail_tol > 0.0 && sm.tail_tol < 1.0)) throw ConfigError("config: tail_tol must lie in (0, 1)");
            e.smooth = sm;
        }
        if (env.contains("k")) e.k = curve_from(env.at("k"), "k");
        if (env.contains("q")) e.q = curve_from(env.at("q"), "q");
        if (e.smooth && (e.k || e.q)) throw ConfigError("config: env is either smooth or explicit, not both");
        if (!e.smooth && !(e.k && e.q)) throw ConfigError("config: env needs 'smooth' or both 'k' and 'q'");
        e.rates.mu = get_or(env, "mu", e.rates.mu);
        e.rates.gamma = get_or(env, "gamma", e.rates.gamma);
        e.noise_sigma = get_or(env, "noise_sigma", e.noise_sigma);
        e.max_auctions = get_or(env, "max_auctions", e.max_auctions);
        e.alpha_floor = get_or(env, "alpha_floor", e.alpha_floor);
        e.eta = get_or(env, "eta", e.eta);

        cfg.grid_m = get_or(doc, "grid_m", cfg.grid_m);
        cfg.adaptive_m = get_or(doc, "adaptive_m", cfg.adaptive_m);
        if (cfg.grid_m == 0) throw ConfigError("config: grid_m must be at least 1");

        cfg.horizons = get_or(doc, "horizons", std::vector<std::size_t>{});
        if (cfg.horizons.empty()) throw ConfigError("config: horizons must be nonempty");
        for (std::size_t n : cfg.horizons) {
            if (n == 0) throw ConfigError("config: horizons must be positive");
        }

        if (doc.contains("seeds") && doc.at("seeds").is_object()) {
            const json& s = doc.at("seeds");
            const auto count = get_or<std::size_t>(s, "count", 1);
            const auto base = get_or<std::uint64_t>(s, "base", 0);
            for (std::size_t i = 0; i < count; ++i) cfg.seeds.push_back(base + i);
        } else {
            cfg.seeds = get_or(doc, "seeds", std::vector<std::uint64_t>{0});
        }
        if (cfg.seeds.empty()) throw ConfigError("config: seeds must be nonempty");

        const SolverSettings solver = solver_from(doc.value("solver", json::object()));
        for (const json& a : doc.value("algorithms", json::array())) cfg.algorithms.push_back(algorithm_from(a, solver));

        cfg.output_dir = get_or<std::string>(doc, "output_dir", cfg.output_dir.string());
        cfg.workers = get_or(doc, "workers", cfg.workers);
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("config: ") + ex.what());
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& ex) {
        throw ConfigError("config: " + path.string() + ": " + ex.what());
    }
    return parse_config(doc);
}

std::size_t adaptive_grid_m(std::size_t horizon) {
    if (horizon == 0) throw ParameterError("adaptive_grid_m: horizon must be positive");
    const auto pow6 = [](std::size_t m) {
        long double p = 1;
        for (int i = 0; i < 6; ++i) p *= static_cast<long double>(m);
        return p;
    };
    std::size_t m = 1;
    while (pow6(m) < static_cast<long double>(horizon)) ++m;
    return m;
}

std::size_t grid_m_for(const ExperimentConfig& cfg, std::size_t horizon) {
    return cfg.adaptive_m ? adaptive_grid_m(horizon) : cfg.grid_m;
}

EnvModel build_environment(const ExperimentConfig& cfg, std::size_t horizon) {
    const EnvSpec& spec = cfg.env;
    EnvModel env;
    env.rates = spec.rates;
    env.noise_sigma = spec.noise_sigma;
    env.max_auctions = spec.max_auctions;
    env.alpha_floor = spec.alpha_floor;
    try {
        if (spec.smooth) {
            const SmoothSpec& s = *spec.smooth;
            const std::size_t m = grid_m_for(cfg, horizon);
            const double theta = s.theta;
            const double alpha = s.alpha_exp;
            env.k_true = ValueCurveK(interpolate_uniform([theta](double t) { return 1.0 - std::exp(-theta * t); }, 0.0,
                                                         s.t_f(), m));
            env.q_true = WinCurveQ(interpolate_uniform([alpha](double v) { return std::pow(v, alpha); }, 0.0, s.q_top, m),
                                   spec.eta);
        } else {
            env.k_true = ValueCurveK(*spec.k);
            env.q_true = WinCurveQ(*spec.q, spec.eta);
        }
        env.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("environment invalid: ") + e.what());
    }
    return env;
}

}  // namespace dynbid
