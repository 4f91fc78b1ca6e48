#include "dynbid/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <nlohmann/json.hpp>

#include "dynbid/errors.hpp"

namespace dynbid {

PwlCurve::PwlCurve() : knots_{0.0}, slopes_{}, tail_slope_(0.0), values_{0.0} { rebuild_cache(); }

PwlCurve::PwlCurve(std::vector<double> knots, std::vector<double> slopes, double tail_slope,
                   double origin)
    : knots_(std::move(knots)), slopes_(std::move(slopes)), tail_slope_(tail_slope), values_{origin} {
    if (knots_.empty() || knots_.front() != 0.0) {
        throw ParameterError("PwlCurve: knots must start at 0");
    }
    if (slopes_.size() + 1 != knots_.size()) {
        throw ParameterError("PwlCurve: need exactly one slope per interval (" +
                             std::to_string(knots_.size()) + " knots, " +
                             std::to_string(slopes_.size()) + " slopes)");
    }
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (!(knots_[i] > knots_[i - 1])) {
            throw ParameterError("PwlCurve: knots must be strictly increasing");
        }
    }
    for (double s : slopes_) {
        if (!std::isfinite(s)) throw ParameterError("PwlCurve: non-finite slope");
    }
    if (!std::isfinite(tail_slope_) || !std::isfinite(origin)) {
        throw ParameterError("PwlCurve: non-finite tail slope or origin");
    }
    rebuild_cache();
}

PwlCurve PwlCurve::constant(double value) { return PwlCurve({0.0}, {}, 0.0, value); }

PwlCurve PwlCurve::from_values(std::vector<double> knots, std::span<const double> values,
                               double tail_slope) {
    if (knots.size() != values.size() || knots.empty()) {
        throw ParameterError("PwlCurve::from_values: knots/values size mismatch");
    }
    std::vector<double> slopes(knots.size() - 1);
    for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        slopes[i] = (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
    }
    return PwlCurve(std::move(knots), std::move(slopes), tail_slope, values.front());
}

void PwlCurve::rebuild_cache() {
    const double origin = values_.empty() ? 0.0 : values_.front();
    values_.assign(knots_.size(), origin);
    integrals_.assign(knots_.size(), 0.0);
    for (std::size_t i = 0; i < slopes_.size(); ++i) {
        const double w = knots_[i + 1] - knots_[i];
        values_[i + 1] = values_[i] + slopes_[i] * w;
        integrals_[i + 1] = integrals_[i] + values_[i] * w + 0.5 * slopes_[i] * w * w;
    }
}

std::size_t PwlCurve::segment_of(double x) const {
    if (x <= knots_.front()) return 0;
    if (x > knots_.back()) return slopes_.size();
    // First knot >= x; the owning interval ends there.
    auto it = std::lower_bound(knots_.begin(), knots_.end(), x);
    return static_cast<std::size_t>(it - knots_.begin()) - 1;
}

double PwlCurve::eval(double x) const {
    const std::size_t i = segment_of(x);
    if (i == slopes_.size()) {
        return values_.back() + tail_slope_ * (x - knots_.back());
    }
    return values_[i] + slopes_[i] * (x - knots_[i]);
}

double PwlCurve::integral(double x) const {
    if (x <= 0.0) return 0.0;
    const std::size_t i = segment_of(x);
    const double slope = i == slopes_.size() ? tail_slope_ : slopes_[i];
    const double d = x - knots_[i];
    return integrals_[i] + values_[i] * d + 0.5 * slope * d * d;
}

double PwlCurve::slope_at(double x) const {
    const std::size_t i = segment_of(x);
    return i == slopes_.size() ? tail_slope_ : slopes_[i];
}

double PwlCurve::inverse(double y) const {
    if (y <= values_.front()) return 0.0;
    auto it = std::lower_bound(values_.begin(), values_.end(), y);
    if (it == values_.end()) {
        if (tail_slope_ <= 0.0) return std::numeric_limits<double>::infinity();
        return knots_.back() + (y - values_.back()) / tail_slope_;
    }
    const auto j = static_cast<std::size_t>(it - values_.begin());  // values_[j] >= y > values_[j-1]
    const double s = slopes_[j - 1];
    return knots_[j - 1] + (y - values_[j - 1]) / s;
}

double PwlCurve::max_slope() const {
    double m = tail_slope_;
    for (double s : slopes_) m = std::max(m, s);
    return m;
}

double PwlCurve::min_slope() const {
    double m = tail_slope_;
    for (double s : slopes_) m = std::min(m, s);
    return m;
}

PwlCurve PwlCurve::with_knot(double x) const {
    if (x <= 0.0) return *this;
    auto it = std::lower_bound(knots_.begin(), knots_.end(), x);
    if (it != knots_.end() && *it == x) return *this;
    const auto pos = static_cast<std::size_t>(it - knots_.begin());
    std::vector<double> knots = knots_;
    std::vector<double> slopes = slopes_;
    knots.insert(knots.begin() + static_cast<std::ptrdiff_t>(pos), x);
    const double s = pos - 1 < slopes_.size() ? slopes_[pos - 1] : tail_slope_;
    slopes.insert(slopes.begin() + static_cast<std::ptrdiff_t>(pos - 1), s);
    return PwlCurve(std::move(knots), std::move(slopes), tail_slope_, origin());
}

ValueCurveK::ValueCurveK(PwlCurve curve) : curve_(std::move(curve)) {
    if (curve_.tail_slope() != 0.0) {
        throw ParameterError("ValueCurveK: value curve must be constant beyond its last knot");
    }
    const auto s = curve_.slopes();
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] < 0.0) throw ParameterError("ValueCurveK: slopes must be nonnegative");
        if (i > 0 && s[i] > s[i - 1]) {
            throw ParameterError("ValueCurveK: slopes must be nonincreasing (concavity)");
        }
    }
}

WinCurveQ::WinCurveQ(PwlCurve curve, double headroom) : curve_(std::move(curve)), headroom_(headroom) {
    if (!(headroom_ > 0.0)) throw ParameterError("WinCurveQ: headroom must be positive");
    if (curve_.origin() != 0.0) throw ParameterError("WinCurveQ: q(0) must be 0");
    if (curve_.tail_slope() != 0.0) {
        throw ParameterError("WinCurveQ: q is clamped beyond its last knot (tail slope 0)");
    }
    for (double s : curve_.slopes()) {
        if (s < 0.0) throw ParameterError("WinCurveQ: slopes must be nonnegative");
    }
}

double WinCurveQ::c_min() const {
    const auto s = curve_.slopes();
    if (s.empty()) return 0.0;
    return *std::min_element(s.begin(), s.end());
}

void WinCurveQ::validate_ground_truth(double up_to) const {
    if (curve_.segments() == 0) throw EnvironmentError("q: ground truth needs at least one interval");
    if (c_min() <= 0.0) throw EnvironmentError("q: ground-truth slopes must be strictly positive (c_min > 0)");
    const double b = std::min(up_to, top());
    if (!(curve_.eval(b) < 1.0 - headroom_)) {
        throw EnvironmentError("q: headroom condition q(b) < 1 - eta violated at b = " + std::to_string(b) +
                               " (q = " + std::to_string(curve_.eval(b)) + ")");
    }
}

double eval(const PwlCurve& curve, double x) {
    if (x < 0.0 || std::isnan(x)) throw DomainError("eval: argument must be nonnegative");
    return curve.eval(x);
}

double win_integral(const WinCurveQ& q, double v) {
    if (v < 0.0 || std::isnan(v)) throw DomainError("win_integral: argument must be nonnegative");
    return q.curve().integral(v);
}

double expected_payment(const WinCurveQ& q, double b) {
    if (b < 0.0 || std::isnan(b)) throw DomainError("expected_payment: bid must be nonnegative");
    // floored: cancellation can leave a -1e-17 residue
    return std::max(0.0, q(b) * b - q.curve().integral(b));
}

double bregman(const WinCurveQ& q, double x, double y) {
    if (x < 0.0 || y < 0.0) throw DomainError("bregman: arguments must be nonnegative");
    const auto& c = q.curve();
    return std::max(0.0, c.integral(x) - c.integral(y) - c.eval(y) * (x - y));
}

PwlCurve interpolate_uniform(const std::function<double(double)>& f, double a, double b, std::size_t m,
                             double tail_slope) {
    if (m == 0) throw ParameterError("interpolate_uniform: m must be at least 1");
    if (!(a < b) || a < 0.0) throw ParameterError("interpolate_uniform: need 0 <= a < b");
    const double h = (b - a) / static_cast<double>(m);
    std::vector<double> xs(m + 1);
    std::vector<double> ys(m + 1);
    for (std::size_t j = 0; j <= m; ++j) {
        xs[j] = j == m ? b : a + h * static_cast<double>(j);
        ys[j] = f(xs[j]);
    }
    if (a > 0.0) {
        const double s0 = (ys[1] - ys[0]) / (xs[1] - xs[0]);
        xs.insert(xs.begin(), 0.0);
        ys.insert(ys.begin(), ys[0] - s0 * a);
    }
    return PwlCurve::from_values(std::move(xs), ys, tail_slope);
}

double sup_distance(const PwlCurve& a, const PwlCurve& b, double lo, double hi) {
    if (!(lo <= hi) || lo < 0.0) throw DomainError("sup_distance: need 0 <= lo <= hi");
    double d = std::max(std::abs(a.eval(lo) - b.eval(lo)), std::abs(a.eval(hi) - b.eval(hi)));
    for (const PwlCurve* c : {&a, &b}) {
        for (double x : c->knots()) {
            if (x > lo && x < hi) d = std::max(d, std::abs(a.eval(x) - b.eval(x)));
        }
    }
    return d;
}

void to_json(nlohmann::json& j, const PwlCurve& c) {
    j = nlohmann::json{{"knots", std::vector<double>(c.knots().begin(), c.knots().end())},
                       {"slopes", std::vector<double>(c.slopes().begin(), c.slopes().end())},
                       {"tail_slope", c.tail_slope()}};
    if (c.origin() != 0.0) j["origin"] = c.origin();
}

void from_json(const nlohmann::json& j, PwlCurve& c) {
    try {
        c = PwlCurve(j.at("knots").get<std::vector<double>>(), j.at("slopes").get<std::vector<double>>(),
                     j.value("tail_slope", 0.0), j.value("origin", 0.0));
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("PwlCurve JSON: ") + e.what());
    }
}

}  // namespace dynbid
