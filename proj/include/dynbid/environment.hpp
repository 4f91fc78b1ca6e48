#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "dynbid/primitives.hpp"
#include "dynbid/rng.hpp"
#include "dynbid/solver.hpp"

namespace dynbid {

/// Ground-truth environment.
struct EnvModel {
    ValueCurveK k_true;
    WinCurveQ q_true;
    MarketRates rates;
    double noise_sigma = 0.1;
    std::size_t max_auctions = 500;
    double alpha_floor = 0.0;

    /// Checks rates, sigma, L, the identifiability floor q(b) > alpha_floor b on
    /// (0, k(T_f)] and the headroom condition on q. Throws EnvironmentError or
    /// ParameterError naming the violated condition.
    void validate() const;
};

/// Aggregated value feedback of one episode with at least one win.
struct EpisodeKRecord {
    std::vector<double> win_ages;
    double gross_value = 0.0;
};

struct AuctionRecord {
    double t = 0.0;  // time within the episode
    double bid = 0.0;
    bool won = false;
    double price = 0.0;  // 0 when lost
};

struct EpisodeOutcome {
    std::optional<EpisodeKRecord> k_record;
    std::vector<AuctionRecord> auctions;
    double net_payoff = 0.0;
    double length = 0.0;
    bool truncated = false;  // hit max_auctions before the episode ended
};

/// Price-to-beat drawn by inverse CDF from u in (0, 1); +inf with probability
/// 1 - q(top).
double sample_price(const WinCurveQ& q, double u);

/// Simulates one episode under `pi`.
EpisodeOutcome run_episode(const EnvModel& env, const Policy& pi, RandomStream& rng);

struct Batch {
    std::vector<EpisodeKRecord> k_data;
    std::vector<AuctionRecord> q_data;
    std::vector<EpisodeOutcome> outcomes;
    std::size_t truncated = 0;
};

/// `n` episodes; episode i draws from the stream {first.seed, first.run,
/// first.episode + i}.
Batch run_batch(const EnvModel& env, const Policy& pi, std::size_t n, StreamKey first);

struct MonteCarloEstimate {
    double mean = 0.0;
    double ci_halfwidth = 0.0;  // 95% normal approximation
};

/// Mean realized net payoff over `n_episodes` independent episodes.
MonteCarloEstimate evaluate_policy_mc(const EnvModel& env, const Policy& pi, std::size_t n_episodes,
                                      std::uint64_t seed);

}  // namespace dynbid
