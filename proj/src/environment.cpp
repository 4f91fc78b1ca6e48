#include "dynbid/environment.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "dynbid/errors.hpp"

namespace dynbid {

void EnvModel::validate() const {
    rates.validate();
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ParameterError("environment: noise_sigma must be nonnegative");
    }
    if (max_auctions == 0) throw ParameterError("environment: max_auctions must be positive");
    if (!(alpha_floor >= 0.0)) throw ParameterError("environment: alpha_floor must be nonnegative");
    const double b_max = k_true.k_inf();
    q_true.validate_ground_truth(b_max);
    if (alpha_floor > 0.0 && b_max > 0.0) {
        constexpr int kScan = 2000;
        for (int i = 1; i <= kScan; ++i) {
            const double b = b_max * i / kScan;
            if (!(q_true(b) > alpha_floor * b)) {
                throw EnvironmentError("environment: identifiability q(b) > alpha_floor b fails at b = " +
                                       std::to_string(b));
            }
        }
    }
}

double sample_price(const WinCurveQ& q, double u) {
    const double top = q(q.top());
    if (u >= top) return std::numeric_limits<double>::infinity();
    return q.curve().inverse(u);
}

EpisodeOutcome run_episode(const EnvModel& env, const Policy& pi, RandomStream& rng) {
    EpisodeOutcome out;
    std::exponential_distribution<double> length(env.rates.gamma);
    std::exponential_distribution<double> gap(env.rates.mu);
    std::normal_distribution<double> noise(0.0, 1.0);
    out.length = length(rng);

    EpisodeKRecord rec;
    double payments = 0.0;
    double t = 0.0;
    double last_win = 0.0;
    while (true) {
        t += gap(rng);
        if (t > out.length) break;
        if (out.auctions.size() == env.max_auctions) {
            out.truncated = true;
            break;
        }
        const double age = t - last_win;
        const double bid = pi.at(age);
        const double price = sample_price(env.q_true, rng.uniform());
        AuctionRecord a{t, bid, bid > price, 0.0};
        if (a.won) {
            a.price = price;
            payments += price;
            rec.win_ages.push_back(age);
            rec.gross_value += env.k_true(age) + env.noise_sigma * noise(rng);
            last_win = t;
        }
        out.auctions.push_back(a);
    }
    if (!rec.win_ages.empty()) {
        out.net_payoff = rec.gross_value - payments;
        out.k_record = std::move(rec);
    }
    return out;
}

Batch run_batch(const EnvModel& env, const Policy& pi, std::size_t n, StreamKey first) {
    Batch batch;
    batch.outcomes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        RandomStream rng({first.seed, first.run, first.episode + static_cast<std::uint32_t>(i)});
        EpisodeOutcome o = run_episode(env, pi, rng);
        if (o.k_record) batch.k_data.push_back(*o.k_record);
        batch.q_data.insert(batch.q_data.end(), o.auctions.begin(), o.auctions.end());
        if (o.truncated) ++batch.truncated;
        batch.outcomes.push_back(std::move(o));
    }
    return batch;
}

MonteCarloEstimate evaluate_policy_mc(const EnvModel& env, const Policy& pi, std::size_t n_episodes,
                                      std::uint64_t seed) {
    if (n_episodes == 0) throw ParameterError("evaluate_policy_mc: need at least one episode");
    double mean = 0.0;
    double m2 = 0.0;
    for (std::size_t i = 0; i < n_episodes; ++i) {
        RandomStream rng({seed, 0, static_cast<std::uint32_t>(i)});
        const double x = run_episode(env, pi, rng).net_payoff;
        const double d = x - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (x - mean);
    }
    const double n = static_cast<double>(n_episodes);
    const double var = n_episodes > 1 ? m2 / (n - 1.0) : 0.0;
    return {mean, 1.96 * std::sqrt(var / n)};
}

}  // namespace dynbid
