#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dynbid/environment.hpp"
#include "dynbid/estimators.hpp"
#include "dynbid/solver.hpp"

namespace dynbid {

enum class Variant { offline_loop, two_phase, three_phase, confidence_bounds };

std::string_view to_string(Variant v);
/// Accepts "offline-loop", "two-phase", "three-phase", "confidence-bounds".
Variant parse_variant(std::string_view s);

using PolicyPtr = std::shared_ptr<const Policy>;

/// Per-episode pseudo-regret of one run. Policies are identified by index into
/// `policies`; consecutive episodes that reuse a policy share its id.
struct RegretTrace {
    double v_star = 0.0;
    std::vector<double> gap;
    std::vector<double> cumulative;
    std::vector<std::size_t> policy_id;
    std::vector<PolicyPtr> policies;
    /// Realized net payoff per episode (diagnostics only).
    std::vector<double> realized;
    /// Dataset sizes after each episode: k-records and auction records.
    std::vector<std::size_t> k_size;
    std::vector<std::size_t> q_size;
    /// Fallbacks and estimator warnings, prefixed by the episode number.
    std::vector<std::string> events;

    std::size_t size() const { return gap.size(); }
    double regret() const { return cumulative.empty() ? 0.0 : cumulative.back(); }
};

/// Caches V_pi(0) per policy object; V*(0) is solved once.
class RegretAccountant {
public:
    RegretAccountant(const EnvModel& env, const SolverSettings& settings = {});

    double v_star() const { return v_star_; }
    const Policy& optimal_policy() const { return *optimal_; }
    PolicyPtr optimal_ptr() const { return optimal_; }
    double value(const PolicyPtr& pi);
    double gap(const PolicyPtr& pi) { return v_star_ - value(pi); }

private:
    const EnvModel& env_;
    SolverSettings settings_;
    double v_star_ = 0.0;
    PolicyPtr optimal_;
    std::unordered_map<const Policy*, double> cache_;
    std::vector<PolicyPtr> keep_alive_;
};

/// Trace of gaps for a given per-episode policy sequence.
RegretTrace pseudo_regret(const EnvModel& env, const std::vector<PolicyPtr>& policies,
                          const SolverSettings& settings = {});

struct AlgorithmParams {
    // offline loop
    std::size_t rounds = 10;
    std::optional<std::size_t> episodes_per_round;  // default ceil(N / rounds)
    // two- and three-phase
    double c1 = 1.0;
    std::optional<double> b0;  // default 0.3 k(inf)
    // confidence bounds
    std::optional<BonusSchedule> bonus;  // calibrated when absent
    std::size_t warmup_c0 = 50;          // used by the calibration
    std::size_t calibration_replicates = 20;
    std::size_t max_refits = 2000;
    double resolve_tol = 1e-4;
    // estimation and solving
    std::optional<double> ridge;
    QFitSettings q_fit;
    SolverSettings solver;
};

struct AlgorithmSpec {
    Variant variant = Variant::confidence_bounds;
    AlgorithmParams params;
};

/// Per-episode view of the confidence-bounds state, for instrumentation.
struct CbStep {
    std::size_t n = 0;
    const ValueCurveK* k_ucb = nullptr;
    const WinCurveQ* q_lcb = nullptr;
    const Policy* policy = nullptr;
    bool resolved = false;
};
using CbObserver = std::function<void(const CbStep&)>;

struct OfflineResult {
    RegretTrace trace;
    PolicyPtr final_policy;
};

/// Alternates one round of play with a refit on the accumulated data and a
/// re-solve. Estimation failures are rethrown with the round index.
OfflineResult run_offline_loop(const EnvModel& env, const Policy& init_policy, std::size_t rounds,
                               std::size_t episodes_per_round, std::uint64_t seed,
                               const AlgorithmParams& params = {});

/// N1 = ceil(c1 sqrt(N)) episodes bidding k(inf), then the plug-in policy.
RegretTrace run_two_phase(const EnvModel& env, std::size_t n, double c1, std::uint64_t seed,
                          const AlgorithmParams& params = {});

/// N1 episodes bidding b0 (fit k), N2 = N1 episodes bidding k_hat (fit q),
/// then the plug-in policy. Records a warning event when mu <= 2 gamma.
RegretTrace run_three_phase(const EnvModel& env, std::size_t n, double b0, double c1, std::uint64_t seed,
                            const AlgorithmParams& params = {});

/// Plays S(k_ucb, q_lcb) each episode. Refits every episode for N <= max_refits,
/// otherwise every ceil(N / max_refits) episodes, and re-solves only when a
/// bound curve moved by more than resolve_tol in sup norm.
RegretTrace run_confidence_bounds(const EnvModel& env, std::size_t n, const BonusSchedule& sched,
                                  std::uint64_t seed, const AlgorithmParams& params = {},
                                  const CbObserver& observer = {});

/// Bonus coefficients such that the bonus at n = C0 equals twice the median
/// sup-error of the estimators after C0 episodes bidding k(inf). Uses run
/// index 1 so it never shares draws with the main run.
BonusSchedule calibrate_bonus(const EnvModel& env, std::size_t warmup_c0, std::size_t replicates,
                              std::uint64_t seed, const AlgorithmParams& params = {});

/// Dispatches on the variant with the defaults of the parameter block.
RegretTrace run_algorithm(const EnvModel& env, const AlgorithmSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace dynbid
