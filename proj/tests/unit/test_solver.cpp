#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "dynbid/errors.hpp"
#include "dynbid/solver.hpp"
#include "fixtures.hpp"

using namespace dynbid;

namespace {

// Fixed-step RK4 of the policy-value equation in backward time, done twice to
// pin the affine dependence on V(0). Shares nothing with the library solver
// beyond q, k and the policy.
double policy_value_oracle(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& r, const Policy& pi,
                           double h = 1e-3) {
    const double t_a = std::max(k.t_f(), pi.grid.empty() ? 0.0 : pi.grid.back());
    const auto f = [&](double t, double v, double y0) {
        const double b = pi.at(t);
        const double qb = q(b);
        const double pay = qb * b - q.curve().integral(b);
        return (r.gamma + r.mu * qb) * v - r.mu * qb * (k(t) + y0) + r.mu * pay;
    };
    const auto shoot = [&](double y0) {
        const double qb = q(pi.beta);
        const double pay = qb * pi.beta - q.curve().integral(pi.beta);
        double v = r.mu * (qb * (k.k_inf() + y0) - pay) / (r.gamma + r.mu * qb);
        const std::size_t n = static_cast<std::size_t>(std::ceil(t_a / h));
        const double dt = n ? t_a / static_cast<double>(n) : 0.0;
        for (std::size_t i = n; i-- > 0;) {
            const double t = dt * static_cast<double>(i + 1);
            const double k1 = f(t, v, y0);
            const double k2 = f(t - dt / 2, v - dt / 2 * k1, y0);
            const double k3 = f(t - dt / 2, v - dt / 2 * k2, y0);
            const double k4 = f(t - dt, v - dt * k3, y0);
            v -= dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        }
        return v;
    };
    const double a = shoot(0.0);
    const double b = shoot(1.0) - a;
    return a / (1.0 - b);
}

}  // namespace

TEST_CASE("static value: V = mu k^2 / (2 gamma) for q(v) = v") {
    const EnvModel env = fixtures::static_env(0.5);
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    CHECK(v.v0 == doctest::Approx(0.625).epsilon(1e-7));
    CHECK(v.v_inf == doctest::Approx(0.625).epsilon(1e-7));
    const Policy pi = synthesize_policy(env.k_true, v);
    CHECK(pi.beta == doctest::Approx(0.5).epsilon(1e-7));
    for (double t : {0.0, 3.0, 100.0}) CHECK(pi.at(t) == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("constant bid 0.3 in the static environment is worth 0.525") {
    const EnvModel env = fixtures::static_env(0.5);
    const ValueCurve v = evaluate_policy(env.k_true, env.q_true, env.rates, Policy::constant(0.3));
    CHECK(v.v0 == doctest::Approx(0.525).epsilon(1e-9));
    CHECK(v.v_inf == doctest::Approx(0.525).epsilon(1e-9));
}

TEST_CASE("stationary value solves the tail equation") {
    const WinCurveQ q = fixtures::linear_q();
    const MarketRates r = fixtures::baseline_rates();
    const double v = stationary_value(0.5, 0.625, q, r);
    const double arg = 0.5 + 0.625 - v;
    CHECK(r.gamma * v == doctest::Approx(r.mu * arg * arg / 2).epsilon(1e-9));
    CHECK(stationary_value(0.0, 0.0, q, r) == 0.0);
}

TEST_CASE("bellman_rhs formula and domain") {
    const EnvModel env = fixtures::static_env(0.5);
    CHECK(bellman_rhs(1.0, 0.2, 0.3, env.k_true, env.q_true, env.rates) ==
          doctest::Approx(0.1 * 0.2 - 0.5 * 0.6 * 0.6 / 2));
    CHECK(bellman_rhs(1.0, 5.0, 0.3, env.k_true, env.q_true, env.rates) == doctest::Approx(0.5));
    CHECK_THROWS_AS(bellman_rhs(-1.0, 0.2, 0.3, env.k_true, env.q_true, env.rates), DomainError);
}

TEST_CASE("baseline value agrees with the discretized chain within 1%") {
    const EnvModel env = fixtures::baseline_env();
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    const double dp = discrete_dp_oracle(env.k_true, env.q_true, env.rates);
    CHECK(std::abs(v.v0 - dp) <= 0.01 * std::abs(dp));
    CHECK(v.v0 > 0.0);
}

TEST_CASE("the optimal policy evaluates to the Bellman value") {
    const EnvModel env = fixtures::baseline_env();
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    const Policy pi = synthesize_policy(env.k_true, v);
    const ValueCurve vp = evaluate_policy(env.k_true, env.q_true, env.rates, pi);
    CHECK(vp.v0 == doctest::Approx(v.v0).epsilon(1e-6));
    CHECK(policy_value_oracle(env.k_true, env.q_true, env.rates, pi) == doctest::Approx(vp.v0).epsilon(1e-6));
}

TEST_CASE("the solved curve satisfies the ODE between knots") {
    const EnvModel env = fixtures::baseline_env();
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    for (double t : {0.5, 2.5, 7.3, 20.2, 45.5, 60.1}) {
        // V is sampled and interpolated; compare with a slope across many samples.
        const double left = v.at(t - 0.2), right = v.at(t + 0.2);
        const double slope = (right - left) / 0.4;
        CHECK(slope == doctest::Approx(bellman_rhs(t, v.at(t), v.v0, env.k_true, env.q_true, env.rates))
                           .epsilon(1e-2)
                           .scale(1e-3));
    }
}

TEST_CASE("policy shape") {
    const EnvModel env = fixtures::baseline_env();
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    const Policy pi = synthesize_policy(env.k_true, v);
    CHECK(pi.at(0.0) == env.k_true(0.0));
    CHECK(pi.beta == doctest::Approx(std::max(0.0, env.k_true.k_inf() + v.v0 - v.v_inf)));
    CHECK(pi.at(env.k_true.t_f() + 1.0) == pi.beta);
    CHECK(asymptotic_bid(pi) == pi.beta);
    CHECK(pi.provenance == Provenance::optimal);
    for (std::size_t i = 0; i < pi.grid.size(); ++i) {
        CHECK(pi.bids[i] >= 0.0);
        if (i) CHECK(pi.grid[i] > pi.grid[i - 1]);
    }
}

TEST_CASE("property: on random environments no simple policy beats the optimum") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 8; ++rep) {
        const EnvModel env = fixtures::random_env(rng);
        CAPTURE(rep);
        const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
        const Policy star = synthesize_policy(env.k_true, v);
        const double v_star = evaluate_policy(env.k_true, env.q_true, env.rates, star).v0;
        CHECK(v_star == doctest::Approx(v.v0).epsilon(1e-5));
        CHECK(v.v0 >= 0.0);
        CHECK(v.v0 <= env.rates.mu * env.k_true.k_inf() / env.rates.gamma);
        for (int j = 0; j < 5; ++j) {
            const double b = env.k_true.k_inf() * 1.5 * u(rng);
            const double vc = evaluate_policy(env.k_true, env.q_true, env.rates, Policy::constant(b)).v0;
            CHECK(vc <= v_star + 1e-7);
            CHECK(policy_value_oracle(env.k_true, env.q_true, env.rates, Policy::constant(b)) ==
                  doctest::Approx(vc).epsilon(1e-6));
        }
        // Value bidding (truthful myopic) is a feasible policy too.
        const Policy truthful = Policy::from_curve(env.k_true.curve(), Provenance::constant);
        CHECK(evaluate_policy(env.k_true, env.q_true, env.rates, truthful).v0 <= v_star + 1e-7);
        // Bids above the myopic value by the option value: pi >= 0 and pi <= k + V(0).
        for (double t = 0.0; t < env.k_true.t_f() * 1.2; t += 0.37) {
            CHECK(star.at(t) <= env.k_true(t) + v.v0 + 1e-9);
        }
    }
}

TEST_CASE("settings and rates validation") {
    const EnvModel env = fixtures::static_env(0.5);
    CHECK_THROWS_AS(solve_bellman(env.k_true, env.q_true, MarketRates{0.0, 0.1}), ParameterError);
    CHECK_THROWS_AS(solve_bellman(env.k_true, env.q_true, MarketRates{0.5, -0.1}), ParameterError);
    SolverSettings s;
    s.bisect_tol = 0.0;
    CHECK_THROWS_AS(solve_bellman(env.k_true, env.q_true, env.rates, s), ParameterError);
    SolverSettings few;
    few.max_bisect_iters = 3;
    const EnvModel base = fixtures::baseline_env();
    try {
        solve_bellman(base.k_true, base.q_true, base.rates, few);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.hi() > e.lo());
    }
}

TEST_CASE("a policy that never bids is worth nothing") {
    const EnvModel env = fixtures::static_env(0.5);
    const ValueCurve v = evaluate_policy(env.k_true, env.q_true, env.rates, Policy::constant(0.0));
    CHECK(v.v0 == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("policy json round trip") {
    const EnvModel env = fixtures::baseline_env();
    const Policy pi = synthesize_policy(env.k_true, solve_bellman(env.k_true, env.q_true, env.rates));
    const nlohmann::json j = pi;
    const Policy back = j.get<Policy>();
    CHECK(back.grid == pi.grid);
    CHECK(back.bids == pi.bids);
    CHECK(back.beta == pi.beta);
    CHECK(back.provenance == pi.provenance);
}

TEST_CASE("bellman_rhs spec points") {
    const EnvModel env = fixtures::static_env(0.5);
    const ValueCurveK zero = ValueCurveK::constant(0.0);
    CHECK(bellman_rhs(2.0, 0.0, 0.0, zero, env.q_true, env.rates) == 0.0);
    CHECK(bellman_rhs(2.0, 0.625, 0.625, env.k_true, env.q_true, env.rates) == doctest::Approx(0.0).scale(1.0));
    // 0.1 * 0.625 - 0.5 * 0.575^2 / 2
    CHECK(bellman_rhs(2.0, 0.625, 0.7, env.k_true, env.q_true, env.rates) == doctest::Approx(-0.02015625));
}

TEST_CASE("zero value environment") {
    const EnvModel env = fixtures::static_env(0.0);
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    CHECK(v.v0 == 0.0);
    for (double x : v.values) CHECK(x == 0.0);
    const Policy pi = synthesize_policy(env.k_true, v);
    CHECK(pi.beta == 0.0);
    CHECK(pi.max_bid() == 0.0);
    CHECK(std::abs(discrete_dp_oracle(env.k_true, env.q_true, env.rates)) < 1e-12);
}

TEST_CASE("the discretized chain hits the static closed form") {
    const EnvModel env = fixtures::static_env(0.5);
    CHECK(std::abs(discrete_dp_oracle(env.k_true, env.q_true, env.rates) - 0.625) < 0.01);
}

TEST_CASE("baseline: value bounded and nondecreasing, beta is the largest bid") {
    const EnvModel env = fixtures::baseline_env();
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    const double cap = env.rates.mu * env.k_true.k_inf() / env.rates.gamma;
    for (std::size_t i = 0; i < v.values.size(); ++i) {
        CHECK(v.values[i] >= -1e-9);
        CHECK(v.values[i] <= cap);
        if (i) CHECK(v.values[i] >= v.values[i - 1] - 1e-9);
    }
    const Policy pi = synthesize_policy(env.k_true, v);
    CHECK(pi.at(0.0) == 0.0);
    CHECK(*std::max_element(pi.bids.begin(), pi.bids.end()) == doctest::Approx(pi.beta).epsilon(1e-6));
    CHECK(pi.beta <= env.k_true.k_inf() + 1e-12);
}

TEST_CASE("beta matches integrating the bid equation pi' = k' - V'") {
    // Along the optimal policy pi(t) = k(t) + V(0) - V(t), so
    // beta = k(T_f) + V(0) - V(T_f); integrate V' = Phi directly with RK4 from V(0).
    const EnvModel env = fixtures::baseline_env();
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
    const Policy pi = synthesize_policy(env.k_true, v);
    const double t_f = env.k_true.t_f();
    // Forward integration is unstable over long spans; go backward from the tail.
    const auto f = [&](double t, double y) { return bellman_rhs(t, y, v.v0, env.k_true, env.q_true, env.rates); };
    double y = v.v_inf;
    const int n = 20000;
    const double h = t_f / n;
    for (int i = n; i > 0; --i) {
        const double t = h * i;
        const double k1 = f(t, y), k2 = f(t - h / 2, y - h / 2 * k1), k3 = f(t - h / 2, y - h / 2 * k2),
                     k4 = f(t - h, y - h * k3);
        y -= h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    CHECK(y == doctest::Approx(v.v0).epsilon(1e-6));
    CHECK(pi.beta == doctest::Approx(env.k_true.k_inf() + y - v.v_inf).epsilon(1e-6));
}

TEST_CASE("property: Bellman consistency of the sampled solution") {
    const EnvModel env = fixtures::baseline_env();
    // Fine sampling so the difference quotient's own error sits below the ODE tolerance.
    SolverSettings fine;
    fine.max_grid_step = 0.005;
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates, fine);
    const auto knots = env.k_true.curve().knots();
    double worst = 0.0;
    for (std::size_t i = 1; i + 1 < v.grid.size(); ++i) {
        const double t0 = v.grid[i - 1], t1 = v.grid[i], t2 = v.grid[i + 1];
        if (t2 > env.k_true.t_f()) break;
        bool straddles = false;
        for (double kn : knots) straddles |= kn > t0 && kn < t2;
        if (straddles) continue;
        // Three-point derivative on a nonuniform grid, exact for quadratics.
        const double h1 = t1 - t0, h2 = t2 - t1;
        const double d = (-h2 / (h1 * (h1 + h2))) * v.values[i - 1] + ((h2 - h1) / (h1 * h2)) * v.values[i] +
                         (h1 / (h2 * (h1 + h2))) * v.values[i + 1];
        worst = std::max(worst, std::abs(d - bellman_rhs(t1, v.values[i], v.v0, env.k_true, env.q_true, env.rates)));
    }
    MESSAGE("max |V' - Phi| = " << worst);
    CHECK(worst < 10 * SolverSettings{}.ode_tol.rel);
}

TEST_CASE("property: truthful static reduction for random q") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        const WinCurveQ q = fixtures::random_q(rng);
        const MarketRates r = fixtures::random_rates(rng);
        const double k0 = 0.1 + 0.8 * u(rng);
        const ValueCurveK k = ValueCurveK::constant(k0);
        const ValueCurve v = solve_bellman(k, q, r);
        const Policy pi = synthesize_policy(k, v);
        CHECK(std::abs(v.v0 - r.mu * win_integral(q, k0) / r.gamma) < 1e-3);
        CHECK(fixtures::policy_distance(pi, Policy::constant(k0), 50.0) < 1e-3);
    }
}

TEST_CASE("property: extension invariance above the asymptotic bid") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        const EnvModel env = fixtures::random_env(rng);
        const Policy pi = synthesize_policy(env.k_true, solve_bellman(env.k_true, env.q_true, env.rates));
        // Keep q on [0, beta], then continue with a different slope.
        const PwlCurve& c = env.q_true.curve();
        std::vector<double> knots;
        std::vector<double> values;
        for (std::size_t j = 0; j < c.knots().size() && c.knots()[j] < pi.beta; ++j) {
            knots.push_back(c.knots()[j]);
            values.push_back(c.knot_values()[j]);
        }
        knots.push_back(pi.beta);
        values.push_back(c(pi.beta));
        const double room = 0.94 - values.back();
        knots.push_back(pi.beta + 0.5);
        values.push_back(values.back() + room * u(rng));
        const WinCurveQ alt(PwlCurve::from_values(knots, values));
        const Policy alt_pi = synthesize_policy(env.k_true, solve_bellman(env.k_true, alt, env.rates));
        CHECK(fixtures::policy_distance(pi, alt_pi, env.k_true.t_f() * 1.5) < 1e-3);
        CHECK(std::abs(evaluate_policy(env.k_true, env.q_true, env.rates, pi).v0 -
                       evaluate_policy(env.k_true, alt, env.rates, alt_pi).v0) < 1e-3);
    }
}

TEST_CASE("property: beta is monotone in (k up, q down)") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        const ValueCurveK k1 = fixtures::random_k(rng);
        const double s = 1.0 + 0.5 * u(rng);
        std::vector<double> ks(k1.curve().slopes().begin(), k1.curve().slopes().end());
        for (auto& x : ks) x *= s;
        const ValueCurveK k2(PwlCurve(std::vector<double>(k1.curve().knots().begin(), k1.curve().knots().end()), ks));
        const WinCurveQ q2 = fixtures::random_q(rng);
        std::vector<double> qs(q2.curve().slopes().begin(), q2.curve().slopes().end());
        const double grow = std::min(1.0 + u(rng), 0.94 / q2(q2.top()));
        for (auto& x : qs) x *= grow;
        const WinCurveQ q1(PwlCurve(std::vector<double>(q2.curve().knots().begin(), q2.curve().knots().end()), qs));
        const MarketRates r = fixtures::random_rates(rng);
        const double b1 = synthesize_policy(k1, solve_bellman(k1, q1, r)).beta;
        const double b2 = synthesize_policy(k2, solve_bellman(k2, q2, r)).beta;
        CHECK(b1 <= b2 + 1e-4);
    }
}

TEST_CASE("property: value loss is at most quadratic in the policy perturbation") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 4; ++rep) {
        const EnvModel env = fixtures::random_env(rng);
        const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates);
        const Policy star = synthesize_policy(env.k_true, v);
        for (double delta : {0.01, 0.05, 0.1}) {
            for (double sign : {-1.0, 1.0}) {
                Policy pi = star;
                for (auto& b : pi.bids) b = std::max(0.0, b + sign * delta);
                pi.beta = std::max(0.0, pi.beta + sign * delta);
                const double dist = fixtures::policy_distance(star, pi, pi.grid.back());
                const ValueCurve vp = evaluate_policy(env.k_true, env.q_true, env.rates, pi);
                double gap = 0.0;
                for (double t = 0.0; t <= pi.grid.back(); t += 0.05) gap = std::max(gap, std::abs(v.at(t) - vp.at(t)));
                const double bound = env.rates.mu / env.rates.gamma * env.q_true.c_max() / 2 * dist * dist;
                CHECK(gap <= 1.05 * bound + 1e-7);
            }
        }
    }
}
