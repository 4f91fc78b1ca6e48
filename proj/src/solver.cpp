#include "dynbid/solver.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "dynbid/errors.hpp"
#include "dynbid/kernels.hpp"

namespace dynbid {

namespace {

// Breakpoints of k inside (0, t_end), with t_end appended.
std::vector<double> breaks_until(std::span<const double> knots, double t_end) {
    std::vector<double> out;
    for (double x : knots) {
        if (x > 0.0 && x < t_end) out.push_back(x);
    }
    out.push_back(t_end);
    return out;
}

// Sorted union of two increasing sequences, dropping near-duplicates.
std::vector<double> merge_grids(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    std::vector<double> uniq;
    uniq.reserve(out.size());
    for (double x : out) {
        if (uniq.empty() || x - uniq.back() > 1e-12 * std::max(1.0, x)) uniq.push_back(x);
    }
    return uniq;
}

double interp(std::span<const double> xs, std::span<const double> ys, double x, double beyond) {
    if (xs.empty() || x >= xs.back()) return beyond;
    if (x <= xs.front()) return ys.front();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const auto j = static_cast<std::size_t>(it - xs.begin());
    const double w = (x - xs[j - 1]) / (xs[j] - xs[j - 1]);
    return ys[j - 1] + w * (ys[j] - ys[j - 1]);
}

}  // namespace

void MarketRates::validate() const {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ParameterError("rates: mu must be positive");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ParameterError("rates: gamma must be positive");
}

double ValueCurve::at(double t) const {
    if (t < 0.0) throw DomainError("ValueCurve: negative age");
    return interp(grid, values, t, v_inf);
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::optimal:
            return "optimal";
        case Provenance::constant:
            return "constant";
        case Provenance::estimate_derived:
            return "estimate-derived";
    }
    return "unknown";
}

Policy Policy::constant(double bid) {
    if (!(bid >= 0.0)) throw ParameterError("Policy: bids must be nonnegative");
    return Policy{{0.0}, {bid}, bid, Provenance::constant};
}

Policy Policy::from_curve(const PwlCurve& curve, Provenance provenance) {
    if (curve.tail_slope() != 0.0) throw ParameterError("Policy: curve must be flat beyond its last knot");
    Policy p;
    p.grid.assign(curve.knots().begin(), curve.knots().end());
    p.bids.reserve(p.grid.size());
    for (double v : curve.knot_values()) p.bids.push_back(std::max(0.0, v));
    p.beta = p.bids.back();
    p.provenance = provenance;
    return p;
}

double Policy::at(double tau) const {
    if (tau < 0.0) throw DomainError("Policy: negative age");
    return interp(grid, bids, tau, beta);
}

double Policy::max_bid() const {
    double m = beta;
    for (double b : bids) m = std::max(m, b);
    return m;
}

void SolverSettings::validate() const {
    if (!(ode_tol.rel > 0.0) || !(ode_tol.abs > 0.0)) throw ParameterError("solver: ODE tolerances must be positive");
    if (!(bisect_tol > 0.0)) throw ParameterError("solver: bisect_tol must be positive");
    if (horizon_pad && !(*horizon_pad > 0.0)) throw ParameterError("solver: horizon_pad must be positive");
    if (!(value_cap_factor > 1.0)) throw ParameterError("solver: value_cap_factor must exceed 1");
    if (max_bisect_iters < 1) throw ParameterError("solver: max_bisect_iters must be positive");
    if (!(max_grid_step > 0.0)) throw ParameterError("solver: max_grid_step must be positive");
}

double bellman_rhs(double t, double v, double y0, const ValueCurveK& k, const WinCurveQ& q,
                   const MarketRates& rates) {
    if (t < 0.0) throw DomainError("bellman_rhs: negative time");
    const double arg = std::max(0.0, k(t) + y0 - v);
    return rates.gamma * v - rates.mu * q.curve().integral(arg);
}

double stationary_value(double k_inf, double y0, const WinCurveQ& q, const MarketRates& rates) {
    // gamma v - mu Q(k_inf + y0 - v) is strictly increasing in v.
    const auto g = [&](double v) {
        return rates.gamma * v - rates.mu * q.curve().integral(std::max(0.0, k_inf + y0 - v));
    };
    double lo = 0.0;
    double hi = std::max(0.0, k_inf + y0);
    if (hi == 0.0 || g(lo) >= 0.0) return lo;
    while (hi - lo > 1e-10 * std::max(1.0, hi)) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) > 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

ValueCurve solve_bellman(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& rates,
                         const SolverSettings& settings) {
    rates.validate();
    settings.validate();
    const double k_inf = k.k_inf();
    const double t_f = k.t_f();
    const double cap = rates.mu * k_inf / rates.gamma;
    const double t_h = t_f + settings.horizon_pad.value_or(5.0 / rates.gamma);
    const double upper = settings.value_cap_factor * cap;
    const double lower = -0.1 * cap;

    // +1: Y escapes upward (y0 too large), -1: downward, 0: stays at the fixed point.
    const auto classify = [&](double y0) {
        const auto rhs = [&](double t, const ode::State<1>& y) {
            return ode::State<1>{bellman_rhs(t, y[0], y0, k, q, rates)};
        };
        const auto in_band = [&](double, const ode::State<1>& y) { return y[0] <= upper && y[0] >= lower; };
        double t = 0.0;
        ode::State<1> y{y0};
        for (double t_next : breaks_until(k.curve().knots(), t_h)) {
            const auto res = ode::integrate<1>(rhs, t, y, t_next, settings.ode_tol,
                                               std::numeric_limits<double>::infinity(), in_band);
            y = res.y;
            t = res.t;
            if (res.stopped) return y[0] > upper ? 1 : -1;
        }
        const double drift = rates.gamma * y[0] - rates.mu * q.curve().integral(std::max(0.0, k_inf + y0 - y[0]));
        return drift > 0.0 ? 1 : (drift < 0.0 ? -1 : 0);
    };

    double lo = 0.0;
    double hi = cap;
    if (hi - lo >= settings.bisect_tol) {
        const int c_lo = classify(lo);
        const int c_hi = classify(hi);
        if (c_lo == 0) {
            hi = lo;
        } else if (c_hi == 0) {
            lo = hi;
        } else if (c_lo == c_hi) {
            throw EnvironmentError("solve_bellman: shooting bracket [0, mu k(inf) / gamma] does not separate");
        } else {
            int iters = 0;
            while (hi - lo >= settings.bisect_tol) {
                if (++iters > settings.max_bisect_iters) {
                    throw ConvergenceError("solve_bellman: bisection iteration cap reached", lo, hi);
                }
                const double mid = 0.5 * (lo + hi);
                const int c = classify(mid);
                if (c == 0) {
                    lo = hi = mid;
                } else if ((c > 0) == (c_hi > 0)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
    }
    const double y0 = 0.5 * (lo + hi);

    ValueCurve out;
    out.v_inf = stationary_value(k_inf, y0, q, rates);

    // The bounded solution sits at v_inf from T_f on; backward integration
    // from there is the stable direction.
    std::vector<double> ts{t_f};
    std::vector<double> vs{out.v_inf};
    const auto rhs = [&](double t, const ode::State<1>& y) {
        return ode::State<1>{bellman_rhs(std::max(t, 0.0), y[0], y0, k, q, rates)};
    };
    const auto record = [&](double t, const ode::State<1>& y) {
        ts.push_back(t);
        vs.push_back(y[0]);
        return true;
    };
    const auto knots = k.curve().knots();
    ode::State<1> y{out.v_inf};
    for (std::size_t i = knots.size(); i-- > 1;) {
        y = ode::integrate<1>(rhs, knots[i], y, knots[i - 1], settings.ode_tol, settings.max_grid_step, record).y;
    }
    std::reverse(ts.begin(), ts.end());
    std::reverse(vs.begin(), vs.end());
    ts.front() = 0.0;
    ts.push_back(t_h);
    vs.push_back(out.v_inf);
    out.grid = std::move(ts);
    out.values = std::move(vs);
    out.v0 = out.values.front();
    return out;
}

Policy synthesize_policy(const ValueCurveK& k, const ValueCurve& value) {
    if (value.grid.empty() || value.grid.size() != value.values.size() || value.grid.front() != 0.0) {
        throw ParameterError("synthesize_policy: value grid must start at 0 and match its values");
    }
    std::vector<double> kk;
    for (double x : k.curve().knots()) {
        if (x <= value.grid.back()) kk.push_back(x);
    }
    Policy pi;
    pi.grid = merge_grids(value.grid, kk);
    pi.bids.reserve(pi.grid.size());
    for (double t : pi.grid) pi.bids.push_back(std::max(0.0, k(t) + value.v0 - value.at(t)));
    pi.bids.front() = std::max(0.0, k(0.0));
    pi.beta = std::max(0.0, k.k_inf() + value.v0 - value.v_inf);
    // Past T_f the bid is constant; pin those samples to beta exactly.
    for (std::size_t i = 0; i < pi.grid.size(); ++i) {
        if (pi.grid[i] >= k.t_f()) pi.bids[i] = pi.beta;
    }
    pi.provenance = Provenance::optimal;
    return pi;
}

double asymptotic_bid(const Policy& pi) { return pi.beta; }

ValueCurve evaluate_policy(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& rates, const Policy& pi,
                           const SolverSettings& settings) {
    rates.validate();
    settings.validate();
    if (pi.grid.size() != pi.bids.size()) throw ParameterError("evaluate_policy: policy grid/bids mismatch");
    const double gamma = rates.gamma;
    const double mu = rates.mu;
    const double t_a = std::max(k.t_f(), pi.grid.empty() ? 0.0 : pi.grid.back());

    const double q_b = q(pi.beta);
    const double p_b = expected_payment(q, pi.beta);
    const double a_inf = (mu * q_b * k.k_inf() - mu * p_b) / (gamma + mu * q_b);
    const double b_inf = mu * q_b / (gamma + mu * q_b);

    std::vector<double> breaks = merge_grids(k.curve().knots(), pi.grid);
    while (!breaks.empty() && breaks.back() > t_a) breaks.pop_back();
    if (breaks.empty() || breaks.back() < t_a) breaks.push_back(t_a);

    const auto rhs = [&](double t, const ode::State<2>& y) {
        const double tt = std::max(t, 0.0);
        const double b = pi.at(tt);
        const double qb = q(b);
        const double rate = gamma + mu * qb;
        return ode::State<2>{rate * y[0] - mu * qb * k(tt) + mu * expected_payment(q, b), rate * y[1] - mu * qb};
    };
    std::vector<double> ts{t_a};
    std::vector<ode::State<2>> ys{{a_inf, b_inf}};
    const auto record = [&](double t, const ode::State<2>& y) {
        ts.push_back(t);
        ys.push_back(y);
        return true;
    };
    ode::State<2> y{a_inf, b_inf};
    for (std::size_t i = breaks.size(); i-- > 1;) {
        y = ode::integrate<2>(rhs, breaks[i], y, breaks[i - 1], settings.ode_tol, settings.max_grid_step, record).y;
    }
    const double denom = 1.0 - y[1];
    if (!(denom > 1e-12)) throw EnvironmentError("evaluate_policy: no bounded solution (degenerate policy)");
    const double y0 = y[0] / denom;

    ValueCurve out;
    out.grid.assign(ts.rbegin(), ts.rend());
    out.grid.front() = 0.0;
    out.values.reserve(ys.size());
    for (auto it = ys.rbegin(); it != ys.rend(); ++it) out.values.push_back((*it)[0] + y0 * (*it)[1]);
    out.v0 = y0;
    out.values.front() = y0;
    out.v_inf = a_inf + y0 * b_inf;
    return out;
}

double discrete_dp_oracle(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& rates,
                          const DpOracleSettings& settings) {
    rates.validate();
    const double dt = settings.dt;
    if (!(dt > 0.0) || (rates.mu + rates.gamma) * dt >= 0.1) {
        throw ParameterError("discrete_dp_oracle: need (mu + gamma) dt < 0.1");
    }
    const double t_max = settings.t_max.value_or(3.0 * k.t_f());
    if (t_max < k.t_f()) throw ParameterError("discrete_dp_oracle: t_max must be at least T_f");
    if (settings.bid_grid < 2) throw ParameterError("discrete_dp_oracle: bid grid needs at least 2 points");

    // Candidate bids b_j: the auction term is max_j q_j x - p_j.
    std::vector<double> qs(settings.bid_grid);
    std::vector<double> ps(settings.bid_grid);
    for (std::size_t j = 0; j < settings.bid_grid; ++j) {
        const double b = q.top() * static_cast<double>(j) / static_cast<double>(settings.bid_grid - 1);
        qs[j] = q(b);
        ps[j] = expected_payment(q, b);
    }
    const kernels::Table& kt = kernels::table(kernels::active());
    const auto best = [&](double x) { return kt.max_affine(qs.data(), ps.data(), qs.size(), x); };

    const auto n = static_cast<std::size_t>(std::ceil(t_max / dt));
    std::vector<double> ks(n + 1);
    for (std::size_t i = 0; i <= n; ++i) ks[i] = k(std::min(static_cast<double>(i) * dt, t_max));
    const double keep = 1.0 - rates.gamma * dt;
    const double arrive = rates.mu * dt;
    const double cap = rates.mu * std::max(ks.back(), 0.0) / rates.gamma;

    std::vector<double> v(n + 1, 0.0);
    for (std::size_t iter = 0; iter < settings.max_iters; ++iter) {
        const double v0 = v[0];
        double change = 0.0;
        // Absorbing bucket: V = keep (V + arrive best(k + v0 - V)), increasing residual in V.
        {
            double lo = 0.0;
            double hi = cap + std::abs(v0) + 1.0;
            const auto g = [&](double x) { return x - keep * (x + arrive * best(ks[n] + v0 - x)); };
            for (int it = 0; it < 200 && hi - lo > 1e-14 * std::max(1.0, hi); ++it) {
                const double mid = 0.5 * (lo + hi);
                (g(mid) > 0.0 ? hi : lo) = mid;
            }
            const double vn = 0.5 * (lo + hi);
            change = std::max(change, std::abs(vn - v[n]));
            v[n] = vn;
        }
        for (std::size_t i = n; i-- > 0;) {
            const double next = v[i + 1];
            const double vi = keep * (next + arrive * best(ks[i] + v0 - next));
            change = std::max(change, std::abs(vi - v[i]));
            v[i] = vi;
        }
        if (change < settings.tol) return v[0];
    }
    throw ConvergenceError("discrete_dp_oracle: value iteration did not converge");
}

void to_json(nlohmann::json& j, const ValueCurve& v) {
    j = nlohmann::json{{"grid", v.grid}, {"values", v.values}, {"v0", v.v0}, {"v_inf", v.v_inf}};
}

void to_json(nlohmann::json& j, const Policy& p) {
    j = nlohmann::json{
        {"grid", p.grid}, {"bids", p.bids}, {"beta", p.beta}, {"provenance", std::string(to_string(p.provenance))}};
}

void from_json(const nlohmann::json& j, Policy& p) {
    try {
        p.grid = j.at("grid").get<std::vector<double>>();
        p.bids = j.at("bids").get<std::vector<double>>();
        p.beta = j.at("beta").get<double>();
        const auto prov = j.value("provenance", std::string("constant"));
        if (prov == "optimal") {
            p.provenance = Provenance::optimal;
        } else if (prov == "estimate-derived") {
            p.provenance = Provenance::estimate_derived;
        } else {
            p.provenance = Provenance::constant;
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("Policy JSON: ") + e.what());
    }
    if (p.grid.size() != p.bids.size()) throw ParameterError("Policy JSON: grid/bids size mismatch");
}

}  // namespace dynbid
