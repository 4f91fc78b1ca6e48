#include "dynbid/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dynbid/errors.hpp"

namespace dynbid {

namespace {

std::size_t ceil_sqrt_scaled(double c1, std::size_t n) {
    return static_cast<std::size_t>(std::ceil(c1 * std::sqrt(static_cast<double>(n))));
}

std::vector<double> knots_of(const PwlCurve& c) { return {c.knots().begin(), c.knots().end()}; }

// Plays episodes in order, one Philox stream per episode index, and records
// the pseudo-regret trace.
class Runner {
public:
    Runner(const EnvModel& env, std::uint64_t seed, const SolverSettings& solver)
        : env_(env), seed_(seed), acc_(env, solver) {
        trace_.v_star = acc_.v_star();
    }

    EpisodeOutcome play(const PolicyPtr& pi) {
        RandomStream rng({seed_, 0, static_cast<std::uint32_t>(episode_)});
        EpisodeOutcome out = run_episode(env_, *pi, rng);
        k_total_ += out.k_record ? 1 : 0;
        q_total_ += out.auctions.size();
        const double g = acc_.gap(pi);
        trace_.gap.push_back(g);
        trace_.cumulative.push_back(trace_.regret() + g);
        trace_.policy_id.push_back(id_of(pi));
        trace_.realized.push_back(out.net_payoff);
        trace_.k_size.push_back(k_total_);
        trace_.q_size.push_back(q_total_);
        ++episode_;
        return out;
    }

    void event(const std::string& what) {
        trace_.events.push_back("episode " + std::to_string(episode_ + 1) + ": " + what);
    }

    std::size_t episode() const { return episode_; }
    RegretTrace take() { return std::move(trace_); }

private:
    std::size_t id_of(const PolicyPtr& pi) {
        auto& ps = trace_.policies;
        if (!ps.empty() && ps.back().get() == pi.get()) return ps.size() - 1;
        for (std::size_t i = ps.size(); i-- > 0;) {
            if (ps[i].get() == pi.get()) return i;
        }
        ps.push_back(pi);
        return ps.size() - 1;
    }

    const EnvModel& env_;
    std::uint64_t seed_;
    RegretAccountant acc_;
    RegretTrace trace_;
    std::size_t episode_ = 0;
    std::size_t k_total_ = 0;
    std::size_t q_total_ = 0;
};

void feed(KDesign* kd, QSufficient* qs, const EpisodeOutcome& out) {
    if (kd && out.k_record) kd->add(*out.k_record);
    if (qs) qs->add(out.auctions);
}

PolicyPtr plug_in(const ValueCurveK& k, const WinCurveQ& q, const MarketRates& rates,
                  const SolverSettings& settings) {
    Policy pi = synthesize_policy(k, solve_bellman(k, q, rates, settings));
    pi.provenance = Provenance::estimate_derived;
    return std::make_shared<const Policy>(std::move(pi));
}

void truncate(RegretTrace& t, std::size_t n) {
    if (t.size() <= n) return;
    t.gap.resize(n);
    t.cumulative.resize(n);
    t.policy_id.resize(n);
    t.realized.resize(n);
    t.k_size.resize(n);
    t.q_size.resize(n);
}

void note_warnings(Runner& run, const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) run.event("estimator warning: " + w);
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::offline_loop:
            return "offline-loop";
        case Variant::two_phase:
            return "two-phase";
        case Variant::three_phase:
            return "three-phase";
        case Variant::confidence_bounds:
            return "confidence-bounds";
    }
    return "unknown";
}

Variant parse_variant(std::string_view s) {
    for (Variant v : {Variant::offline_loop, Variant::two_phase, Variant::three_phase, Variant::confidence_bounds}) {
        if (s == to_string(v)) return v;
    }
    throw ConfigError("unknown algorithm variant '" + std::string(s) + "'");
}

RegretAccountant::RegretAccountant(const EnvModel& env, const SolverSettings& settings)
    : env_(env), settings_(settings) {
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates, settings_);
    v_star_ = v.v0;
    optimal_ = std::make_shared<const Policy>(synthesize_policy(env.k_true, v));
    cache_.emplace(optimal_.get(), v_star_);
    keep_alive_.push_back(optimal_);
}

double RegretAccountant::value(const PolicyPtr& pi) {
    const auto it = cache_.find(pi.get());
    if (it != cache_.end()) return it->second;
    const double v = evaluate_policy(env_.k_true, env_.q_true, env_.rates, *pi, settings_).v0;
    cache_.emplace(pi.get(), v);
    keep_alive_.push_back(pi);
    return v;
}

RegretTrace pseudo_regret(const EnvModel& env, const std::vector<PolicyPtr>& policies,
                          const SolverSettings& settings) {
    RegretAccountant acc(env, settings);
    RegretTrace t;
    t.v_star = acc.v_star();
    for (const auto& p : policies) {
        const double g = acc.gap(p);
        t.gap.push_back(g);
        t.cumulative.push_back(t.regret() + g);
        std::size_t id = t.policies.size();
        for (std::size_t i = 0; i < t.policies.size(); ++i) {
            if (t.policies[i].get() == p.get()) id = i;
        }
        if (id == t.policies.size()) t.policies.push_back(p);
        t.policy_id.push_back(id);
    }
    return t;
}

OfflineResult run_offline_loop(const EnvModel& env, const Policy& init_policy, std::size_t rounds,
                               std::size_t episodes_per_round, std::uint64_t seed, const AlgorithmParams& params) {
    if (rounds == 0 || episodes_per_round == 0) throw ParameterError("offline loop: rounds and episodes must be positive");
    if (!(init_policy.beta > 0.0)) throw ParameterError("offline loop: initial policy needs a positive asymptotic bid");
    Runner run(env, seed, params.solver);
    KDesign kd(knots_of(env.k_true.curve()));
    QSufficient qs(knots_of(env.q_true.curve()));
    PolicyPtr pi = std::make_shared<const Policy>(init_policy);
    for (std::size_t r = 0; r < rounds; ++r) {
        for (std::size_t e = 0; e < episodes_per_round; ++e) feed(&kd, &qs, run.play(pi));
        try {
            const KEstimate k_hat = estimate_k(kd, params.ridge);
            const QEstimate q_hat = estimate_q(qs, params.q_fit);
            note_warnings(run, k_hat.warnings);
            note_warnings(run, q_hat.warnings);
            pi = plug_in(k_hat.curve, q_hat.curve, env.rates, params.solver);
        } catch (const EstimationError& e) {
            throw EstimationError("offline loop round " + std::to_string(r + 1) + ": " + e.what());
        }
    }
    return {run.take(), pi};
}

RegretTrace run_two_phase(const EnvModel& env, std::size_t n, double c1, std::uint64_t seed,
                          const AlgorithmParams& params) {
    if (n < 4) throw ParameterError("two-phase: need N >= 4");
    if (!(c1 > 0.0)) throw ParameterError("two-phase: c1 must be positive");
    const std::size_t n1 = ceil_sqrt_scaled(c1, n);
    if (n1 >= n) throw ParameterError("two-phase: N1 = ceil(c1 sqrt(N)) must be below N");
    Runner run(env, seed, params.solver);
    KDesign kd(knots_of(env.k_true.curve()));
    QSufficient qs(knots_of(env.q_true.curve()));
    const auto explore = std::make_shared<const Policy>(Policy::constant(env.k_true.k_inf()));
    for (std::size_t e = 0; e < n1; ++e) feed(&kd, &qs, run.play(explore));
    const KEstimate k_hat = estimate_k(kd, params.ridge);
    const QEstimate q_hat = estimate_q(qs, params.q_fit);
    note_warnings(run, k_hat.warnings);
    note_warnings(run, q_hat.warnings);
    const PolicyPtr exploit = plug_in(k_hat.curve, q_hat.curve, env.rates, params.solver);
    for (std::size_t e = n1; e < n; ++e) run.play(exploit);
    return run.take();
}

RegretTrace run_three_phase(const EnvModel& env, std::size_t n, double b0, double c1, std::uint64_t seed,
                            const AlgorithmParams& params) {
    if (n < 9) throw ParameterError("three-phase: need N >= 9");
    if (!(b0 > 0.0)) throw ParameterError("three-phase: b0 must be positive");
    if (!(c1 > 0.0)) throw ParameterError("three-phase: c1 must be positive");
    const std::size_t n1 = ceil_sqrt_scaled(c1, n);
    const std::size_t n2 = n1;
    if (n1 + n2 >= n) throw ParameterError("three-phase: N1 + N2 must be below N");
    Runner run(env, seed, params.solver);
    if (!env.rates.arrival_dominant()) run.event("warning: mu <= 2 gamma, k_hat may not dominate the optimal policy");

    KDesign kd(knots_of(env.k_true.curve()));
    const auto explore = std::make_shared<const Policy>(Policy::constant(b0));
    for (std::size_t e = 0; e < n1; ++e) feed(&kd, nullptr, run.play(explore));
    const KEstimate k_hat = estimate_k(kd, params.ridge);
    note_warnings(run, k_hat.warnings);

    QSufficient qs(knots_of(env.q_true.curve()));
    const auto value_bidding =
        std::make_shared<const Policy>(Policy::from_curve(k_hat.curve.curve(), Provenance::estimate_derived));
    for (std::size_t e = 0; e < n2; ++e) feed(nullptr, &qs, run.play(value_bidding));
    const QEstimate q_hat = estimate_q(qs, params.q_fit);
    note_warnings(run, q_hat.warnings);

    const PolicyPtr exploit = plug_in(k_hat.curve, q_hat.curve, env.rates, params.solver);
    for (std::size_t e = n1 + n2; e < n; ++e) run.play(exploit);
    return run.take();
}

RegretTrace run_confidence_bounds(const EnvModel& env, std::size_t n, const BonusSchedule& sched,
                                  std::uint64_t seed, const AlgorithmParams& params, const CbObserver& observer) {
    if (n == 0) throw ParameterError("confidence bounds: need N >= 1");
    sched.validate();
    if (params.max_refits == 0) throw ParameterError("confidence bounds: max_refits must be positive");
    const double k_cap = env.k_true.k_inf();
    const std::size_t every = n <= params.max_refits ? 1 : (n + params.max_refits - 1) / params.max_refits;

    Runner run(env, seed, params.solver);
    KDesign kd(knots_of(env.k_true.curve()));
    QSufficient qs(knots_of(env.q_true.curve()));
    const auto cap_policy = std::make_shared<const Policy>(Policy::constant(k_cap));
    const ValueCurveK warm_k = ValueCurveK::constant(k_cap);
    const WinCurveQ warm_q(PwlCurve(knots_of(env.q_true.curve()), std::vector<double>(env.q_true.curve().segments(), 0.0)),
                           env.q_true.headroom());

    PolicyPtr pi = cap_policy;
    ValueCurveK k_ucb = warm_k;
    WinCurveQ q_lcb = warm_q;
    bool solved = false;
    QFitSettings fit = params.q_fit;

    for (std::size_t ep = 1; ep <= n; ++ep) {
        bool resolved = false;
        if (ep >= sched.warmup_c0 && (ep - sched.warmup_c0) % every == 0) {
            ValueCurveK next_k = warm_k;
            if (kd.n() > 0) next_k = ucb_k(estimate_k(kd, params.ridge), ep, sched, k_cap);
            WinCurveQ next_q = warm_q;
            if (qs.n() > 0) {
                const QEstimate q_hat = estimate_q(qs, fit);
                fit.warm_start.emplace(q_hat.curve.curve().slopes().begin(), q_hat.curve.curve().slopes().end());
                next_q = lcb_q(q_hat, ep, sched);
            }
            const double dk = sup_distance(next_k.curve(), k_ucb.curve(), 0.0,
                                           std::max(next_k.t_f(), k_ucb.t_f()));
            const double dq = sup_distance(next_q.curve(), q_lcb.curve(), 0.0,
                                           std::max(next_q.top(), q_lcb.top()));
            if (!solved || dk > params.resolve_tol || dq > params.resolve_tol) {
                k_ucb = std::move(next_k);
                q_lcb = std::move(next_q);
                try {
                    pi = plug_in(k_ucb, q_lcb, env.rates, params.solver);
                } catch (const Error& e) {
                    run.event(std::string("solver failed, bidding k(inf): ") + e.what());
                    pi = cap_policy;
                }
                solved = true;
                resolved = true;
            }
        }
        if (observer) observer(CbStep{ep, &k_ucb, &q_lcb, pi.get(), resolved});
        feed(&kd, &qs, run.play(pi));
    }
    return run.take();
}

BonusSchedule calibrate_bonus(const EnvModel& env, std::size_t warmup_c0, std::size_t replicates,
                              std::uint64_t seed, const AlgorithmParams& params) {
    if (warmup_c0 == 0 || replicates == 0) throw ParameterError("calibrate_bonus: C0 and replicates must be positive");
    const Policy explore = Policy::constant(env.k_true.k_inf());
    std::vector<double> err_k;
    std::vector<double> err_q;
    for (std::size_t r = 0; r < replicates; ++r) {
        const Batch b = run_batch(env, explore, warmup_c0, {seed, 1, static_cast<std::uint32_t>(r * warmup_c0)});
        if (!b.k_data.empty()) {
            const KEstimate k_hat = estimate_k(b.k_data, env.k_true.curve().knots(), params.ridge);
            err_k.push_back(sup_distance(k_hat.curve.curve(), env.k_true.curve(), 0.0, env.k_true.t_f()));
        }
        if (!b.q_data.empty()) {
            const QEstimate q_hat = estimate_q(b.q_data, env.q_true.curve().knots(), params.q_fit);
            err_q.push_back(sup_distance(q_hat.curve.curve(), env.q_true.curve(), 0.0, env.q_true.top()));
        }
    }
    const auto median = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    };
    const double rate = bonus_rate(warmup_c0);
    return {2.0 * median(err_k) / rate, 2.0 * median(err_q) / rate, warmup_c0};
}

RegretTrace run_algorithm(const EnvModel& env, const AlgorithmSpec& spec, std::size_t n, std::uint64_t seed) {
    const AlgorithmParams& p = spec.params;
    switch (spec.variant) {
        case Variant::offline_loop: {
            const std::size_t rounds = std::max<std::size_t>(1, p.rounds);
            const std::size_t per = p.episodes_per_round.value_or((n + rounds - 1) / rounds);
            RegretTrace t =
                run_offline_loop(env, Policy::constant(env.k_true.k_inf()), rounds, per, seed, p).trace;
            truncate(t, n);
            return t;
        }
        case Variant::two_phase:
            return run_two_phase(env, n, p.c1, seed, p);
        case Variant::three_phase:
            return run_three_phase(env, n, p.b0.value_or(0.3 * env.k_true.k_inf()), p.c1, seed, p);
        case Variant::confidence_bounds: {
            const BonusSchedule sched =
                p.bonus ? *p.bonus : calibrate_bonus(env, p.warmup_c0, p.calibration_replicates, seed, p);
            return run_confidence_bounds(env, n, sched, seed, p);
        }
    }
    throw ParameterError("run_algorithm: unknown variant");
}

}  // namespace dynbid
