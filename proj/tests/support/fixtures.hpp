#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynbid/environment.hpp"
#include "dynbid/harness.hpp"
#include "dynbid/primitives.hpp"
#include "dynbid/solver.hpp"

namespace fixtures {

using namespace dynbid;

#ifndef DYNBID_CONFIG_DIR
#define DYNBID_CONFIG_DIR "configs"
#endif

inline WinCurveQ linear_q(double top = 1.0, double headroom = 0.05) {
    return WinCurveQ(PwlCurve({0.0, top}, {1.0}), headroom);
}

inline MarketRates baseline_rates() { return {0.5, 0.1}; }

/// Constant value k0, q(v) = v on [0, 1].
inline EnvModel static_env(double k0 = 0.5, double sigma = 0.1) {
    EnvModel env;
    env.k_true = ValueCurveK::constant(k0);
    env.q_true = linear_q();
    env.rates = baseline_rates();
    env.noise_sigma = sigma;
    return env;
}

/// Learnable stand-in for a constant value: k rises to k0 by age `ramp` and
/// stays there (the estimators model k(0) = 0).
inline EnvModel ramp_env(double k0 = 0.5, double ramp = 1e-3, double sigma = 0.1) {
    EnvModel env = static_env(k0, sigma);
    env.k_true = ValueCurveK(PwlCurve({0.0, ramp}, {k0 / ramp}));
    return env;
}

/// A short value grid that exploration at k(inf) observes on every interval.
inline EnvModel short_grid_env() {
    EnvModel env = static_env();
    env.k_true = ValueCurveK(interpolate_uniform([](double t) { return 0.9 * (1.0 - std::exp(-0.3 * t)); }, 0.0, 8.0, 4));
    env.q_true = WinCurveQ(interpolate_uniform([](double v) { return 0.9 * v * v; }, 0.0, 1.0, 10), 0.05);
    return env;
}

inline nlohmann::json baseline_doc() {
    std::ifstream in(std::string(DYNBID_CONFIG_DIR) + "/smooth_baseline.json");
    nlohmann::json doc;
    in >> doc;
    return doc;
}

inline ExperimentConfig baseline_config() { return parse_config(baseline_doc()); }

/// The smooth experiment environment: k = 1 - exp(-0.1 t), q = v^2, 10 intervals.
inline EnvModel baseline_env() { return build_environment(baseline_config(), 10000); }

/// Random concave nondecreasing k with k(inf) in [0.4, 1] on `d` intervals.
inline ValueCurveK random_k(std::mt19937_64& rng, std::size_t d = 4) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> knots{0.0};
    for (std::size_t i = 0; i < d; ++i) knots.push_back(knots.back() + 1.0 + 9.0 * u(rng));
    std::vector<double> raw(d);
    for (auto& s : raw) s = u(rng) + 0.05;
    std::sort(raw.rbegin(), raw.rend());
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) total += raw[i] * (knots[i + 1] - knots[i]);
    const double target = 0.4 + 0.6 * u(rng);
    for (auto& s : raw) s *= target / total;
    return ValueCurveK(PwlCurve(knots, raw));
}

/// Random increasing q on [0, top] with q(top) in [0.5, 0.9] and positive slopes.
inline WinCurveQ random_q(std::mt19937_64& rng, std::size_t d = 4, double top = 1.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> knots{0.0};
    for (std::size_t i = 1; i <= d; ++i) knots.push_back(top * static_cast<double>(i) / static_cast<double>(d));
    std::vector<double> slopes(d);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        slopes[i] = 0.1 + u(rng);
        total += slopes[i] * (knots[i + 1] - knots[i]);
    }
    const double target = 0.5 + 0.4 * u(rng);
    for (auto& s : slopes) s *= target / total;
    return WinCurveQ(PwlCurve(knots, slopes));
}

inline MarketRates random_rates(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    return {0.3 + 0.7 * u(rng), 0.05 + 0.15 * u(rng)};
}

inline EnvModel random_env(std::mt19937_64& rng) {
    EnvModel env;
    env.k_true = random_k(rng);
    env.q_true = random_q(rng);
    env.rates = random_rates(rng);
    return env;
}

/// Sup distance between two policies over [0, t_max], sampled densely.
inline double policy_distance(const Policy& a, const Policy& b, double t_max, std::size_t samples = 4000) {
    double d = std::abs(a.beta - b.beta);
    for (std::size_t i = 0; i <= samples; ++i) {
        const double t = t_max * static_cast<double>(i) / static_cast<double>(samples);
        d = std::max(d, std::abs(a.at(t) - b.at(t)));
    }
    return d;
}

}  // namespace fixtures
