#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dynbid {

/// Continuous piecewise-linear function on [0, +inf).
///
/// The canonical parameters are the slopes on the finite intervals between
/// consecutive knots, plus an explicit slope beyond the last knot and the value
/// at 0 (`origin`, zero for every curve the model itself produces; non-zero for
/// optimistic bound curves and for constant test curves). Cumulative values and
/// integrals at the knots are cached so evaluation is a binary search.
///
/// Interval membership follows the half-open convention (b_{i-1}, b_i]; x = 0
/// belongs to the first interval.
class PwlCurve {
public:
    /// The zero function: a single knot at 0 and zero tail slope.
    PwlCurve();

    PwlCurve(std::vector<double> knots, std::vector<double> slopes, double tail_slope = 0.0,
             double origin = 0.0);

    static PwlCurve constant(double value);

    /// Interpolates `values` given at `knots` (knots[0] must be 0).
    static PwlCurve from_values(std::vector<double> knots, std::span<const double> values,
                                double tail_slope = 0.0);

    double eval(double x) const;
    double operator()(double x) const { return eval(x); }

    /// Integral of the curve over [0, x].
    double integral(double x) const;

    /// Slope of the interval that owns x under the half-open convention.
    double slope_at(double x) const;

    /// Smallest x >= 0 with eval(x) >= y, for a nondecreasing curve. Returns
    /// +inf when the curve never reaches y.
    double inverse(double y) const;

    /// Index of the interval owning x: i such that knots[i] < x <= knots[i+1],
    /// 0 for x = 0, and segments() for x beyond the last knot.
    std::size_t segment_of(double x) const;

    std::span<const double> knots() const { return knots_; }
    std::span<const double> slopes() const { return slopes_; }
    /// Values at the knots.
    std::span<const double> knot_values() const { return values_; }
    double tail_slope() const { return tail_slope_; }
    double origin() const { return values_.front(); }
    double last_knot() const { return knots_.back(); }
    std::size_t segments() const { return slopes_.size(); }

    /// Largest slope over the finite intervals and the tail.
    double max_slope() const;
    double min_slope() const;

    /// Same function with an extra knot at x (no-op if x is already a knot).
    PwlCurve with_knot(double x) const;

    bool operator==(const PwlCurve& other) const = default;

private:
    void rebuild_cache();

    std::vector<double> knots_;
    std::vector<double> slopes_;
    double tail_slope_ = 0.0;
    std::vector<double> values_;
    std::vector<double> integrals_;
};

/// Concave, nondecreasing value curve k, constant beyond its last knot T_f.
class ValueCurveK {
public:
    ValueCurveK() = default;
    /// Throws ParameterError unless slopes are nonnegative and nonincreasing and
    /// the tail slope is 0.
    explicit ValueCurveK(PwlCurve curve);

    static ValueCurveK constant(double value) { return ValueCurveK(PwlCurve::constant(value)); }

    double operator()(double t) const { return curve_.eval(t); }
    const PwlCurve& curve() const { return curve_; }
    /// Last finite breakpoint.
    double t_f() const { return curve_.last_knot(); }
    /// k(inf) = k(T_f).
    double k_inf() const { return curve_.knot_values().back(); }

private:
    PwlCurve curve_;
};

/// Competition CDF q on the bid domain [0, top]; clamps to q(top) beyond.
class WinCurveQ {
public:
    static constexpr double kDefaultHeadroom = 0.05;

    WinCurveQ() = default;
    /// Throws ParameterError unless slopes are nonnegative, the tail slope is 0,
    /// the origin is 0 and headroom > 0.
    explicit WinCurveQ(PwlCurve curve, double headroom = kDefaultHeadroom);

    double operator()(double b) const { return curve_.eval(b); }
    const PwlCurve& curve() const { return curve_; }
    double headroom() const { return headroom_; }
    double top() const { return curve_.last_knot(); }
    double c_max() const { return curve_.max_slope(); }
    double c_min() const;

    /// Ground-truth checks: every slope strictly positive and q <= 1 - headroom
    /// on [0, up_to]. Throws EnvironmentError naming the violated condition.
    void validate_ground_truth(double up_to) const;

private:
    PwlCurve curve_;
    double headroom_ = kDefaultHeadroom;
};

/// Piecewise-linear value; throws DomainError for x < 0.
double eval(const PwlCurve& curve, double x);

/// Q(v) = integral of q over [0, v]. Equals f(v) = q(v) v - p(v).
double win_integral(const WinCurveQ& q, double v);

/// Expected second-price payment p(b) = q(b) b - Q(b).
double expected_payment(const WinCurveQ& q, double b);

/// Bregman divergence of Q: Q(x) - Q(y) - q(y)(x - y).
double bregman(const WinCurveQ& q, double x, double y);

/// Interpolant of f on the uniform grid of m intervals over [a, b], 0 <= a < b.
/// When a > 0 the first interval is extended linearly down to 0 so the curve
/// stays anchored at knot 0.
PwlCurve interpolate_uniform(const std::function<double(double)>& f, double a, double b,
                             std::size_t m, double tail_slope = 0.0);

/// max |a - b| over [lo, hi]; exact for piecewise-linear curves.
double sup_distance(const PwlCurve& a, const PwlCurve& b, double lo, double hi);

void to_json(nlohmann::json& j, const PwlCurve& c);
void from_json(const nlohmann::json& j, PwlCurve& c);

}  // namespace dynbid
