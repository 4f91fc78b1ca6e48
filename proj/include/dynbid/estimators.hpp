#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynbid/environment.hpp"
#include "dynbid/primitives.hpp"

namespace dynbid {

/// Normal equations of the aggregated-value regression, accumulated record by
/// record. Each record contributes z z^T and z v, where
/// z_i = sum_j (t_i ^ tau_j - t_{i-1} ^ tau_j) over the learnable intervals.
class KDesign {
public:
    /// `knots` are the known breakpoints 0 = t_0 < ... < t_{I-1} = T_f.
    explicit KDesign(std::vector<double> knots);

    void add(const EpisodeKRecord& rec);
    void add(std::span<const EpisodeKRecord> recs);

    /// Design row of a single record.
    std::vector<double> row(const EpisodeKRecord& rec) const;

    std::span<const double> knots() const { return knots_; }
    std::size_t dim() const { return knots_.size() - 1; }
    std::size_t n() const { return n_; }
    /// Row-major dim x dim.
    std::span<const double> zz() const { return zz_; }
    std::span<const double> zv() const { return zv_; }

private:
    std::vector<double> knots_;
    std::vector<double> zz_;
    std::vector<double> zv_;
    std::size_t n_ = 0;
};

struct KEstimate {
    ValueCurveK curve;
    std::vector<double> raw_slopes;
    std::size_t n_episodes_used = 0;
    std::vector<std::string> warnings;
};

/// Euclidean projection onto {a_1 >= a_2 >= ... >= a_d >= 0}: pool adjacent
/// violators for the ordering, then clamp at 0.
std::vector<double> project_monotone_cone(std::span<const double> raw);

/// Ridge OLS on the design followed by the cone projection. `ridge` defaults
/// to 1e-6 trace(Z^T Z) / dim. Throws EstimationError on empty data and
/// NumericalError when the system is singular.
KEstimate estimate_k(const KDesign& design, std::optional<double> ridge = std::nullopt);
KEstimate estimate_k(std::span<const EpisodeKRecord> data, std::span<const double> knots,
                     std::optional<double> ridge = std::nullopt);

/// Per-segment sufficient statistics of the auction log-likelihood: win counts
/// per price segment and, per bid segment, the offsets r = b - b_j of losing
/// bids.
class QSufficient {
public:
    explicit QSufficient(std::vector<double> knots);

    void add(const AuctionRecord& a);
    void add(std::span<const AuctionRecord> recs);

    std::span<const double> knots() const { return knots_; }
    std::size_t dim() const { return knots_.size() - 1; }
    double width(std::size_t i) const { return knots_[i + 1] - knots_[i]; }
    std::span<const double> wins() const { return wins_; }
    std::span<const double> losses(std::size_t j) const { return losses_[j]; }
    std::size_t n() const { return n_; }
    std::size_t n_informative() const { return informative_; }

private:
    std::vector<double> knots_;
    std::vector<double> wins_;
    std::vector<std::vector<double>> losses_;
    std::size_t n_ = 0;
    std::size_t informative_ = 0;
};

/// Log-likelihood sum_i W_i log c_i + sum_losses log(1 - q_c(b)), its gradient
/// and Hessian (row-major) at c. Requires q_c(top) < 1.
struct QLikelihood {
    double value = 0.0;
    std::vector<double> gradient;
    std::vector<double> hessian;
};
QLikelihood q_loglik(const QSufficient& s, std::span<const double> c, bool derivatives = true);

/// Euclidean projection onto {c_i >= floor, sum_i width_i c_i <= total}.
std::vector<double> project_q_feasible(std::span<const double> c, std::span<const double> widths, double floor,
                                       double total);

struct QFitSettings {
    double c_floor = 1e-4;
    double eta_fit = 0.01;
    double opt_tol = 1e-8;
    std::size_t max_iters = 100'000;
    std::optional<std::vector<double>> warm_start;
};

struct QEstimate {
    WinCurveQ curve;
    double loglik = 0.0;
    std::size_t n_auctions_used = 0;
    std::size_t iterations = 0;
    std::vector<std::string> warnings;
};

/// Constrained MLE of the density slopes by projected Newton ascent with an
/// Armijo line search (projected-gradient steps as fallback). Stops when the
/// projected-gradient norm drops below opt_tol.
QEstimate estimate_q(const QSufficient& s, const QFitSettings& settings = {});
QEstimate estimate_q(std::span<const AuctionRecord> data, std::span<const double> knots,
                     const QFitSettings& settings = {});

struct BonusSchedule {
    double lambda_k = 0.0;
    double lambda_q = 0.0;
    std::size_t warmup_c0 = 50;

    void validate() const;
};

/// sqrt((1 + log log max(n, 3)) / n).
double bonus_rate(std::size_t n);

/// min(k_hat + bonus, k_cap); the constant k_cap before warm-up.
ValueCurveK ucb_k(const KEstimate& est, std::size_t n, const BonusSchedule& sched, double k_cap);

/// max(q_hat - bonus, 0); the zero curve before warm-up.
WinCurveQ lcb_q(const QEstimate& est, std::size_t n, const BonusSchedule& sched);

}  // namespace dynbid
