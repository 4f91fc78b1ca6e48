#include "dynbid/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dynbid/errors.hpp"
#include "dynbid/kernels.hpp"

namespace dynbid {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_knots(std::span<const double> knots, const char* who) {
    if (knots.size() < 2 || knots.front() != 0.0) {
        throw ParameterError(std::string(who) + ": need at least one interval starting at 0");
    }
    for (std::size_t i = 1; i < knots.size(); ++i) {
        if (!(knots[i] > knots[i - 1])) throw ParameterError(std::string(who) + ": knots must increase");
    }
}

double inf_norm(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

}  // namespace

KDesign::KDesign(std::vector<double> knots) : knots_(std::move(knots)) {
    check_knots(knots_, "KDesign");
    zz_.assign(dim() * dim(), 0.0);
    zv_.assign(dim(), 0.0);
}

std::vector<double> KDesign::row(const EpisodeKRecord& rec) const {
    std::vector<double> z(dim(), 0.0);
    for (double tau : rec.win_ages) {
        if (tau < 0.0) throw DomainError("KDesign: negative win age");
        for (std::size_t i = 0; i < dim(); ++i) {
            if (tau <= knots_[i]) break;
            z[i] += std::min(knots_[i + 1], tau) - knots_[i];
        }
    }
    return z;
}

void KDesign::add(const EpisodeKRecord& rec) {
    const std::vector<double> z = row(rec);
    const std::size_t d = dim();
    for (std::size_t i = 0; i < d; ++i) {
        if (z[i] == 0.0) continue;
        zv_[i] += z[i] * rec.gross_value;
        for (std::size_t j = 0; j < d; ++j) zz_[i * d + j] += z[i] * z[j];
    }
    ++n_;
}

void KDesign::add(std::span<const EpisodeKRecord> recs) {
    for (const auto& r : recs) add(r);
}

std::vector<double> project_monotone_cone(std::span<const double> raw) {
    struct Block {
        double sum;
        std::size_t count;
        double mean() const { return sum / static_cast<double>(count); }
    };
    std::vector<Block> blocks;
    for (double v : raw) {
        blocks.push_back({v, 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() < blocks.back().mean()) {
            const Block b = blocks.back();
            blocks.pop_back();
            blocks.back().sum += b.sum;
            blocks.back().count += b.count;
        }
    }
    std::vector<double> out;
    out.reserve(raw.size());
    for (const auto& b : blocks) out.insert(out.end(), b.count, std::max(0.0, b.mean()));
    return out;
}

KEstimate estimate_k(const KDesign& design, std::optional<double> ridge) {
    if (design.n() == 0) throw EstimationError("estimate_k: no episodes with a won auction");
    KEstimate est;
    est.n_episodes_used = design.n();
    const auto d = static_cast<Eigen::Index>(design.dim());
    Eigen::Map<const RowMajor> zz(design.zz().data(), d, d);
    Eigen::Map<const Eigen::VectorXd> zv(design.zv().data(), d);

    const double lambda = ridge.value_or(1e-6 * zz.trace() / static_cast<double>(d));
    if (!(lambda >= 0.0)) throw ParameterError("estimate_k: ridge must be nonnegative");
    if (ridge && lambda == 0.0) est.warnings.push_back("ridge = 0: unregularized normal equations");

    Eigen::MatrixXd a = zz;
    a.diagonal().array() += lambda;
    Eigen::VectorXd sol;
    if (lambda > 0.0) {
        Eigen::LLT<Eigen::MatrixXd> llt(a);
        if (llt.info() != Eigen::Success) throw NumericalError("estimate_k: normal equations not positive definite");
        sol = llt.solve(zv);
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
        const auto ev = eig.eigenvalues();
        if (!(ev.minCoeff() > 1e-12 * std::max(ev.maxCoeff(), 1e-300))) {
            throw NumericalError("estimate_k: singular normal equations (some intervals never observed); use ridge > 0");
        }
        sol = a.ldlt().solve(zv);
    }
    est.raw_slopes.assign(sol.data(), sol.data() + sol.size());
    const std::vector<double> slopes = project_monotone_cone(est.raw_slopes);
    est.curve = ValueCurveK(PwlCurve(std::vector<double>(design.knots().begin(), design.knots().end()), slopes));
    return est;
}

KEstimate estimate_k(std::span<const EpisodeKRecord> data, std::span<const double> knots,
                     std::optional<double> ridge) {
    KDesign design(std::vector<double>(knots.begin(), knots.end()));
    design.add(data);
    return estimate_k(design, ridge);
}

QSufficient::QSufficient(std::vector<double> knots) : knots_(std::move(knots)) {
    check_knots(knots_, "QSufficient");
    wins_.assign(dim(), 0.0);
    losses_.resize(dim());
}

void QSufficient::add(const AuctionRecord& a) {
    ++n_;
    const double top = knots_.back();
    if (a.won) {
        if (!(a.price >= 0.0) || a.price > top) {
            throw EstimationError("QSufficient: won price " + std::to_string(a.price) + " outside the grid domain");
        }
        std::size_t seg = 0;
        if (a.price > 0.0) {
            seg = static_cast<std::size_t>(std::lower_bound(knots_.begin(), knots_.end(), a.price) - knots_.begin()) - 1;
        }
        wins_[seg] += 1.0;
        ++informative_;
        return;
    }
    if (!(a.bid > 0.0)) return;  // q(0) = 0: a loss at bid 0 carries no information
    std::size_t seg = dim() - 1;
    double r = knots_.back() - knots_[seg];
    if (a.bid < top) {
        seg = static_cast<std::size_t>(std::lower_bound(knots_.begin(), knots_.end(), a.bid) - knots_.begin()) - 1;
        r = a.bid - knots_[seg];
    }
    losses_[seg].push_back(r);
    ++informative_;
}

void QSufficient::add(std::span<const AuctionRecord> recs) {
    for (const auto& a : recs) add(a);
}

QLikelihood q_loglik(const QSufficient& s, std::span<const double> c, bool derivatives) {
    const std::size_t d = s.dim();
    if (c.size() != d) throw ParameterError("q_loglik: slope vector has the wrong size");
    const auto& kt = kernels::table(kernels::active());
    QLikelihood out;
    std::vector<double> sw(d), swr(d), t2(d), u2(d), x2(d);
    double prefix = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double w = s.wins()[j];
        if (w > 0.0) out.value += w * std::log(c[j]);
        const auto r = s.losses(j);
        if (!r.empty()) {
            const kernels::LossMoments m = kt.loss_moments(r.data(), r.size(), 1.0 - prefix, c[j]);
            out.value += m.log_sum;
            sw[j] = m.w;
            swr[j] = m.wr;
            t2[j] = m.w2;
            u2[j] = m.w2r;
            x2[j] = m.w2r2;
        }
        prefix += c[j] * s.width(j);
    }
    if (!derivatives) return out;

    out.gradient.assign(d, 0.0);
    out.hessian.assign(d * d, 0.0);
    double tail_w = 0.0;  // sum over segments j > i of S_j
    for (std::size_t i = d; i-- > 0;) {
        const double w = s.wins()[i];
        out.gradient[i] = (w > 0.0 ? w / c[i] : 0.0) - s.width(i) * tail_w - swr[i];
        tail_w += sw[i];
    }
    auto h = [&](std::size_t i, std::size_t l) -> double& { return out.hessian[i * d + l]; };
    for (std::size_t i = 0; i < d; ++i) {
        const double w = s.wins()[i];
        if (w > 0.0) h(i, i) -= w / (c[i] * c[i]);
    }
    for (std::size_t j = 0; j < d; ++j) {
        if (s.losses(j).empty()) continue;
        for (std::size_t i = 0; i < j; ++i) {
            for (std::size_t l = 0; l < j; ++l) h(i, l) -= s.width(i) * s.width(l) * t2[j];
            h(i, j) -= s.width(i) * u2[j];
            h(j, i) -= s.width(i) * u2[j];
        }
        h(j, j) -= x2[j];
    }
    return out;
}

std::vector<double> project_q_feasible(std::span<const double> c, std::span<const double> widths, double floor,
                                       double total) {
    const std::size_t d = c.size();
    std::vector<double> x(d);
    double sum = 0.0;
    double min_sum = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        x[i] = std::max(floor, c[i]);
        sum += widths[i] * x[i];
        min_sum += widths[i] * floor;
    }
    if (sum <= total) return x;
    if (min_sum > total) throw ParameterError("project_q_feasible: empty feasible set (floor too large)");

    // sum_i w_i max(floor, c_i - nu w_i) = total, piecewise linear and decreasing in nu.
    std::vector<std::size_t> order;
    double a = 0.0, b = 0.0, base = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        if (c[i] > floor) {
            order.push_back(i);
            a += widths[i] * c[i];
            b += widths[i] * widths[i];
        } else {
            base += widths[i] * floor;
        }
    }
    const auto knee = [&](std::size_t i) { return (c[i] - floor) / widths[i]; };
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return knee(i) < knee(j); });
    double nu = 0.0;
    for (std::size_t i : order) {
        nu = (a + base - total) / b;
        if (nu <= knee(i)) break;
        a -= widths[i] * c[i];
        b -= widths[i] * widths[i];
        base += widths[i] * floor;
    }
    for (std::size_t i = 0; i < d; ++i) x[i] = std::max(floor, c[i] - nu * widths[i]);
    return x;
}

QEstimate estimate_q(const QSufficient& s, const QFitSettings& settings) {
    if (!(settings.c_floor > 0.0) || !(settings.eta_fit > 0.0) || settings.eta_fit >= 1.0 ||
        !(settings.opt_tol > 0.0) || settings.max_iters == 0) {
        throw ParameterError("estimate_q: invalid fit settings");
    }
    if (s.n() == 0) throw EstimationError("estimate_q: no auction records");
    const std::size_t d = s.dim();
    std::vector<double> widths(d);
    for (std::size_t i = 0; i < d; ++i) widths[i] = s.width(i);
    const double total = 1.0 - settings.eta_fit;
    const double top = s.knots().back();
    const double floor = settings.c_floor;
    const auto proj = [&](std::span<const double> v) { return project_q_feasible(v, widths, floor, total); };

    QEstimate est;
    est.n_auctions_used = s.n();
    const std::vector<double> knots(s.knots().begin(), s.knots().end());
    const auto finish = [&](const std::vector<double>& c) {
        est.curve = WinCurveQ(PwlCurve(knots, c), settings.eta_fit);
        est.loglik = q_loglik(s, c, false).value;
        return est;
    };

    if (s.n_informative() == 0) {
        est.warnings.push_back("flat likelihood: every auction was lost at bid 0; returning the floor curve");
        return finish(std::vector<double>(d, floor));
    }

    std::vector<double> c;
    if (settings.warm_start && settings.warm_start->size() == d) {
        c = proj(*settings.warm_start);
    } else {
        c = proj(std::vector<double>(d, std::max(floor, 0.5 * total / top)));
    }

    bool converged = false;
    std::size_t iter = 0;
    for (; iter < settings.max_iters; ++iter) {
        const QLikelihood ll = q_loglik(s, c);
        const auto& g = ll.gradient;
        std::vector<double> probe(d);
        for (std::size_t i = 0; i < d; ++i) probe[i] = c[i] + g[i];
        if (inf_norm(proj(probe), c) < settings.opt_tol) {
            converged = true;
            break;
        }

        // Newton direction on the free coordinates; the sum constraint is kept
        // as an equality when it is tight and the step would push through it.
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < d; ++i) {
            if (!(c[i] <= floor * (1.0 + 1e-12) && g[i] <= 0.0)) free.push_back(i);
        }
        std::vector<double> dir(d, 0.0);
        if (!free.empty()) {
            const auto nf = static_cast<Eigen::Index>(free.size());
            Eigen::MatrixXd m(nf, nf);
            Eigen::VectorXd gf(nf), wf(nf);
            double diag_max = 0.0;
            for (Eigen::Index a = 0; a < nf; ++a) {
                gf[a] = g[free[a]];
                wf[a] = widths[free[a]];
                for (Eigen::Index b = 0; b < nf; ++b) m(a, b) = -ll.hessian[free[a] * d + free[b]];
                diag_max = std::max(diag_max, m(a, a));
            }
            m.diagonal().array() += 1e-10 * std::max(1.0, diag_max);
            Eigen::LLT<Eigen::MatrixXd> llt(m);
            if (llt.info() == Eigen::Success) {
                Eigen::VectorXd step = llt.solve(gf);
                const double slack = total - dot(widths, c);
                if (slack <= 1e-12 * total) {
                    const Eigen::VectorXd u = llt.solve(wf);
                    const double nu = wf.dot(step) / wf.dot(u);
                    if (nu > 0.0) step -= nu * u;
                }
                for (Eigen::Index a = 0; a < nf; ++a) dir[free[a]] = step[a];
            }
        }

        const auto search = [&](const std::vector<double>& direction, double t0, int halvings,
                                std::vector<double>& out) {
            double t = t0;
            for (int h = 0; h < halvings; ++h, t *= 0.5) {
                for (std::size_t i = 0; i < d; ++i) probe[i] = c[i] + t * direction[i];
                out = proj(probe);
                std::vector<double> delta(d);
                for (std::size_t i = 0; i < d; ++i) delta[i] = out[i] - c[i];
                const double pred = dot(g, delta);
                if (!(pred > 0.0)) continue;
                const double value = q_loglik(s, out, false).value;
                if (value >= ll.value + 1e-4 * pred) return true;
                // Within rounding of the optimum: accept and let the stopping test decide.
                if (pred < 1e-13 * (1.0 + std::abs(ll.value)) && value >= ll.value - 1e-13 * std::abs(ll.value)) {
                    return true;
                }
            }
            return false;
        };

        std::vector<double> next;
        bool moved = search(dir, 1.0, 40, next);
        if (!moved) {
            double diag_max = 1.0;
            for (std::size_t i = 0; i < d; ++i) diag_max = std::max(diag_max, -ll.hessian[i * d + i]);
            moved = search(g, 1.0 / diag_max, 60, next);
        }
        if (!moved || inf_norm(next, c) == 0.0) {
            est.warnings.push_back("optimizer stalled before reaching opt_tol");
            break;
        }
        c = std::move(next);
    }
    est.iterations = iter;
    if (!converged && iter == settings.max_iters) est.warnings.push_back("iteration cap reached");
    return finish(c);
}

QEstimate estimate_q(std::span<const AuctionRecord> data, std::span<const double> knots,
                     const QFitSettings& settings) {
    QSufficient s(std::vector<double>(knots.begin(), knots.end()));
    s.add(data);
    return estimate_q(s, settings);
}

void BonusSchedule::validate() const {
    if (!(lambda_k >= 0.0) || !(lambda_q >= 0.0)) throw ParameterError("bonus: lambdas must be nonnegative");
    if (warmup_c0 == 0) throw ParameterError("bonus: warm-up length must be positive");
}

double bonus_rate(std::size_t n) {
    if (n == 0) throw DomainError("bonus_rate: n must be positive");
    const double m = static_cast<double>(std::max<std::size_t>(n, 3));
    return std::sqrt((1.0 + std::log(std::log(m))) / static_cast<double>(n));
}

ValueCurveK ucb_k(const KEstimate& est, std::size_t n, const BonusSchedule& sched, double k_cap) {
    if (n < sched.warmup_c0) return ValueCurveK::constant(k_cap);
    const double bonus = sched.lambda_k * bonus_rate(n);
    const PwlCurve& base = est.curve.curve();
    if (base.origin() + bonus >= k_cap) return ValueCurveK::constant(k_cap);
    const double cross = base.inverse(k_cap - bonus);
    std::vector<double> knots;
    std::vector<double> slopes;
    for (std::size_t i = 0; i < base.knots().size(); ++i) {
        const double x = base.knots()[i];
        if (x >= cross) break;
        knots.push_back(x);
        if (i + 1 < base.knots().size()) slopes.push_back(base.slopes()[i]);
    }
    if (std::isfinite(cross)) {
        knots.push_back(cross);
    }
    slopes.resize(knots.size() - 1);
    return ValueCurveK(PwlCurve(std::move(knots), std::move(slopes), 0.0, base.origin() + bonus));
}

WinCurveQ lcb_q(const QEstimate& est, std::size_t n, const BonusSchedule& sched) {
    const PwlCurve& base = est.curve.curve();
    const std::vector<double> knots(base.knots().begin(), base.knots().end());
    const WinCurveQ zero(PwlCurve(knots, std::vector<double>(base.segments(), 0.0)), est.curve.headroom());
    if (n < sched.warmup_c0) return zero;
    const double bonus = sched.lambda_q * bonus_rate(n);
    if (bonus <= 0.0) return est.curve;
    const double cross = base.inverse(bonus);
    if (!(cross < base.last_knot())) return zero;
    std::vector<double> out_knots{0.0};
    std::vector<double> out_slopes;
    if (cross > 0.0) {
        out_knots.push_back(cross);
        out_slopes.push_back(0.0);
    }
    for (std::size_t i = 1; i < knots.size(); ++i) {
        if (knots[i] <= cross) continue;
        out_knots.push_back(knots[i]);
        out_slopes.push_back(base.slopes()[i - 1]);
    }
    return WinCurveQ(PwlCurve(std::move(out_knots), std::move(out_slopes)), est.curve.headroom());
}

}  // namespace dynbid
