#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dynbid/ode.hpp"
#include "dynbid/primitives.hpp"

namespace dynbid {

/// Auction arrival rate mu and episode termination rate gamma (per unit time).
struct MarketRates {
    double mu = 0.5;
    double gamma = 0.1;

    /// Throws ParameterError unless both rates are positive.
    void validate() const;
    /// mu > 2 gamma, the regime assumed by the three-phase analysis.
    bool arrival_dominant() const { return mu > 2.0 * gamma; }
};

/// Bellman value sampled on a strictly increasing grid starting at 0.
/// Linear interpolation between samples; `v_inf` beyond the last sample.
struct ValueCurve {
    std::vector<double> grid;
    std::vector<double> values;
    double v0 = 0.0;
    double v_inf = 0.0;

    double at(double t) const;
};

enum class Provenance { optimal, constant, estimate_derived };

std::string_view to_string(Provenance p);

/// Bid as a function of age: linear interpolation on `grid`, `beta` from the
/// last grid point on.
struct Policy {
    std::vector<double> grid;
    std::vector<double> bids;
    double beta = 0.0;
    Provenance provenance = Provenance::constant;

    static Policy constant(double bid);
    /// Bids the curve itself (value bidding); the curve must be flat beyond its
    /// last knot.
    static Policy from_curve(const PwlCurve& curve, Provenance provenance);

    double at(double tau) const;
    double max_bid() const;
};

struct SolverSettings {
    ode::Tolerance ode_tol{1e-8, 1e-10};
    /// Width threshold on the shooting bracket for V(0).
    double bisect_tol = 1e-8;
    /// Extra time past T_f before the divergence direction is read off the
    /// autonomous drift. Defaults to 5 / gamma.
    std::optional<double> horizon_pad;
    /// Trajectories leaving [-0.1 cap, value_cap_factor cap], cap = mu k(inf) / gamma,
    /// are classified immediately.
    double value_cap_factor = 2.0;
    int max_bisect_iters = 200;
    /// Largest spacing between output samples of a ValueCurve.
    double max_grid_step = 0.05;

    void validate() const;
};

/// Phi(t, v, y0) = gamma v - mu Q(max(0, k(t) + y0 - v)).
double bellman_rhs(double t, double v, double y0, const ValueCurveK& k, const WinCurveQ& q,
                   const MarketRates& rates);

/// Value of the stationary point of the autonomous tail equation
/// gamma v = mu Q(k(inf) + y0 - v), to 1e-10.
double stationary_value(double k_inf, double y0, const WinCurveQ& q, const MarketRates& rates);

/// Bellman value by shooting on V(0): bisects y0 on [0, mu k(inf) / gamma]
/// according to the divergence direction of the forward Cauchy problem, then
/// samples the bounded solution by integrating backward from T_f, where it
/// sits at the stationary value.
ValueCurve solve_bellman(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& rates,
                         const SolverSettings& settings = {});

/// max(0, k(tau) + V(0) - V(tau)) on V's grid (merged with k's knots).
Policy synthesize_policy(const ValueCurveK& k, const ValueCurve& value);

double asymptotic_bid(const Policy& pi);

/// Expected payoff of a fixed policy as a function of age.
///
/// V' = (gamma + mu q(pi)) V - mu q(pi) (k + V(0)) + mu p(pi) is linear in
/// (V, V(0)), so V = A + V(0) B with A and B integrated backward from the
/// point where k and pi are both constant; the bounded solution is the one
/// with A(0) + V(0) B(0) = V(0).
ValueCurve evaluate_policy(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& rates,
                           const Policy& pi, const SolverSettings& settings = {});

struct DpOracleSettings {
    double dt = 0.01;
    /// Ages at or above t_max share one absorbing bucket. Defaults to 3 T_f.
    std::optional<double> t_max;
    /// Number of uniformly spaced candidate bids over [0, q.top()].
    std::size_t bid_grid = 401;
    double tol = 1e-9;
    std::size_t max_iters = 100'000;
};

/// V(0) of the time-discretized chain by value iteration: each step of length
/// dt ends the episode w.p. gamma dt and brings an auction w.p. mu dt, where the
/// bid maximizing q(b)(k(tau) + V(0) - V(tau + dt)) - p(b) over the bid grid
/// is played. Independent of the ODE machinery.
double discrete_dp_oracle(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& rates,
                          const DpOracleSettings& settings = {});

void to_json(nlohmann::json& j, const ValueCurve& v);
void to_json(nlohmann::json& j, const Policy& p);
void from_json(const nlohmann::json& j, Policy& p);

}  // namespace dynbid
