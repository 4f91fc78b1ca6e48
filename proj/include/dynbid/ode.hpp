#pragma once

// Adaptive Dormand–Prince 5(4) integrator for the small fixed-size systems the
// solver needs. Integration may run forward or backward in time.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <string>
#include <utility>

#include "dynbid/errors.hpp"

namespace dynbid::ode {

template <std::size_t N>
using State = std::array<double, N>;

struct Tolerance {
    double rel = 1e-8;
    double abs = 1e-10;
};

template <std::size_t N>
struct Result {
    double t = 0.0;
    State<N> y{};
    std::size_t steps = 0;
    bool stopped = false;  // observer requested early termination
};

namespace detail {

// Butcher tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                        b6 = 11.0 / 84;
// b - b*, the embedded error weights.
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;

template <std::size_t N>
State<N> axpy(const State<N>& y, double h, std::initializer_list<std::pair<double, const State<N>*>> terms) {
    State<N> out = y;
    for (const auto& [coef, k] : terms) {
        for (std::size_t i = 0; i < N; ++i) out[i] += h * coef * (*k)[i];
    }
    return out;
}

}  // namespace detail

/// Integrates y' = rhs(t, y) from (t0, y0) to t1. After every accepted step
/// `observer(t, y)` is called; returning false stops the integration there.
/// Steps never exceed `max_step` in magnitude. Throws ConvergenceError when the
/// step size collapses or `max_steps` is exceeded.
template <std::size_t N, class Rhs, class Observer>
Result<N> integrate(Rhs&& rhs, double t0, State<N> y0, double t1, const Tolerance& tol, double max_step,
                    Observer&& observer, std::size_t max_steps = 1'000'000) {
    using namespace detail;
    Result<N> res{t0, y0, 0, false};
    if (t1 == t0) return res;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    max_step = std::min(max_step, span);

    auto err_norm = [&](const State<N>& y, const State<N>& ynew, const State<N>& e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sc = tol.abs + tol.rel * std::max(std::abs(y[i]), std::abs(ynew[i]));
            acc += (e[i] / sc) * (e[i] / sc);
        }
        return std::sqrt(acc / static_cast<double>(N));
    };

    double t = t0;
    State<N> y = y0;
    State<N> k1 = rhs(t, y);

    // Starting step from the scaled size of y and y'.
    double h;
    {
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double sc = tol.abs + tol.rel * std::abs(y[i]);
            d0 = std::max(d0, std::abs(y[i]) / sc);
            d1 = std::max(d1, std::abs(k1[i]) / sc);
        }
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::min(std::max(h, 1e-10 * span), max_step);
    }

    while (true) {
        const double remaining = std::abs(t1 - t);
        bool last = false;
        if (h >= remaining) {
            h = remaining;
            last = true;
        }
        const double hs = dir * h;
        const State<N> k2 = rhs(t + c2 * hs, axpy<N>(y, hs, {{a21, &k1}}));
        const State<N> k3 = rhs(t + c3 * hs, axpy<N>(y, hs, {{a31, &k1}, {a32, &k2}}));
        const State<N> k4 = rhs(t + c4 * hs, axpy<N>(y, hs, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
        const State<N> k5 =
            rhs(t + c5 * hs, axpy<N>(y, hs, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
        const double t_next = last ? t1 : t + hs;
        const State<N> k6 =
            rhs(t_next, axpy<N>(y, hs, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
        const State<N> y_next = axpy<N>(y, hs, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
        const State<N> k7 = rhs(t_next, y_next);
        State<N> e{};
        for (std::size_t i = 0; i < N; ++i) {
            e[i] = hs * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
        }
        const double err = err_norm(y, y_next, e);
        if (!std::isfinite(err)) {
            h *= 0.2;
        } else if (err <= 1.0) {
            t = t_next;
            y = y_next;
            k1 = k7;
            ++res.steps;
            res.t = t;
            res.y = y;
            if (!observer(t, y)) {
                res.stopped = true;
                return res;
            }
            if (last) return res;
            const double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
            h = std::min(h * factor, max_step);
        } else {
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
        }
        if (h < 1e-14 * std::max(1.0, std::abs(t))) {
            throw ConvergenceError("ode: step size underflow at t = " + std::to_string(t));
        }
        if (res.steps > max_steps) throw ConvergenceError("ode: step budget exhausted");
    }
}

template <std::size_t N, class Rhs>
Result<N> integrate(Rhs&& rhs, double t0, State<N> y0, double t1, const Tolerance& tol,
                    double max_step = std::numeric_limits<double>::infinity()) {
    return integrate<N>(std::forward<Rhs>(rhs), t0, y0, t1, tol, max_step,
                        [](double, const State<N>&) { return true; });
}

}  // namespace dynbid::ode
