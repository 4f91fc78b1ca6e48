// Command-line front end: solve, simulate, estimate, run, sweep.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dynbid/algorithms.hpp"
#include "dynbid/environment.hpp"
#include "dynbid/errors.hpp"
#include "dynbid/estimators.hpp"
#include "dynbid/harness.hpp"
#include "dynbid/solver.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dynbid;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--out", c.out, "output directory (overrides output_dir)");
}

json load_doc(const Common& c) {
    std::ifstream in(c.config);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError(c.config + ": " + e.what());
    }
    if (!c.out.empty()) doc["output_dir"] = c.out;
    return doc;
}

fs::path out_dir(const ExperimentConfig& cfg) {
    fs::create_directories(cfg.output_dir);
    return cfg.output_dir;
}

std::size_t pick_horizon(const ExperimentConfig& cfg, std::optional<std::size_t> h) {
    return h.value_or(cfg.horizons.front());
}

Policy load_policy(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open policy " + path);
    json j;
    in >> j;
    return j.get<Policy>();
}

int cmd_solve(const Common& c, std::optional<std::size_t> horizon) {
    const ExperimentConfig cfg = parse_config(load_doc(c));
    const EnvModel env = build_environment(cfg, pick_horizon(cfg, horizon));
    const SolverSettings settings = cfg.algorithms.empty() ? SolverSettings{} : cfg.algorithms.front().params.solver;
    const ValueCurve v = solve_bellman(env.k_true, env.q_true, env.rates, settings);
    const Policy pi = synthesize_policy(env.k_true, v);
    const fs::path dir = out_dir(cfg);
    write_json(dir / "value.json", v);
    write_json(dir / "policy.json", pi);
    write_json(dir / "env.json", json{{"k", env.k_true.curve()}, {"q", env.q_true.curve()}});
    std::cout << "v0 " << format_double(v.v0) << "\nbeta " << format_double(pi.beta) << '\n';
    return 0;
}

int cmd_simulate(const Common& c, std::optional<std::size_t> horizon, std::size_t episodes,
                 const std::string& policy_path) {
    const ExperimentConfig cfg = parse_config(load_doc(c));
    const EnvModel env = build_environment(cfg, pick_horizon(cfg, horizon));
    const Policy pi = policy_path.empty() ? synthesize_policy(env.k_true, solve_bellman(env.k_true, env.q_true, env.rates))
                                          : load_policy(policy_path);
    const std::uint64_t seed = c.seed.value_or(cfg.seeds.front());
    const Batch b = run_batch(env, pi, episodes, {seed, 0, 0});
    const fs::path dir = out_dir(cfg);
    write_k_records_csv(dir / "k_records.csv", b.outcomes);
    write_auctions_csv(dir / "auctions.csv", b.outcomes);
    double total = 0.0;
    for (const auto& o : b.outcomes) total += o.net_payoff;
    write_json(dir / "simulation.json", json{{"episodes", episodes},
                                             {"seed", seed},
                                             {"mean_net_payoff", total / static_cast<double>(episodes)},
                                             {"episodes_with_win", b.k_data.size()},
                                             {"auctions", b.q_data.size()},
                                             {"truncated_episodes", b.truncated}});
    return 0;
}

int cmd_estimate(const Common& c, std::optional<std::size_t> horizon, const std::string& k_path,
                 const std::string& q_path) {
    const ExperimentConfig cfg = parse_config(load_doc(c));
    const EnvModel env = build_environment(cfg, pick_horizon(cfg, horizon));
    const AlgorithmParams params = cfg.algorithms.empty() ? AlgorithmParams{} : cfg.algorithms.front().params;
    const fs::path dir = out_dir(cfg);
    if (!k_path.empty()) {
        const KEstimate k = estimate_k(read_k_records_csv(k_path), env.k_true.curve().knots(), params.ridge);
        json j = k.curve.curve();
        j["raw_slopes"] = k.raw_slopes;
        j["n_episodes_used"] = k.n_episodes_used;
        j["warnings"] = k.warnings;
        write_json(dir / "k_hat.json", j);
    }
    if (!q_path.empty()) {
        const QEstimate q = estimate_q(read_auctions_csv(q_path), env.q_true.curve().knots(), params.q_fit);
        json j = q.curve.curve();
        j["loglik"] = q.loglik;
        j["n_auctions_used"] = q.n_auctions_used;
        j["warnings"] = q.warnings;
        write_json(dir / "q_hat.json", j);
    }
    if (k_path.empty() && q_path.empty()) throw ConfigError("estimate: give --k-data and/or --q-data");
    return 0;
}

int cmd_run(const Common& c, const std::string& variant, std::optional<std::size_t> horizon) {
    json doc = load_doc(c);
    ExperimentConfig cfg = parse_config(doc);
    cfg.seeds = {c.seed.value_or(cfg.seeds.front())};
    if (!variant.empty()) {
        const Variant v = parse_variant(variant);
        std::erase_if(cfg.algorithms, [v](const AlgorithmSpec& a) { return a.variant != v; });
        if (cfg.algorithms.empty()) cfg.algorithms.push_back(AlgorithmSpec{v, {}});
    }
    if (horizon) cfg.horizons = {*horizon};
    const ExperimentResult res = run_experiment(cfg);
    for (const auto& r : res.rows) std::cout << r.variant << " N=" << r.horizon << " regret " << format_double(r.final_regret) << '\n';
    for (const auto& f : res.failures) std::cerr << "failed: " << f.variant << " N=" << f.horizon << ": " << f.message << '\n';
    return res.exit_code();
}

int cmd_sweep(const Common& c, std::optional<std::size_t> workers) {
    json doc = load_doc(c);
    if (workers) doc["workers"] = *workers;
    ExperimentConfig cfg = parse_config(doc);
    if (c.seed) {
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = *c.seed + i;
    }
    const ExperimentResult res = run_experiment(cfg);
    std::cout << res.rows.size() << " runs, " << res.failures.size() << " failed; results in "
              << cfg.output_dir.string() << '\n';
    return res.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bidding with dynamic, age-dependent values in repeated second-price auctions"};
    app.require_subcommand(1);

    Common solve_c, sim_c, est_c, run_c, sweep_c;
    std::optional<std::size_t> solve_h, sim_h, est_h, run_h, sweep_workers;
    std::size_t episodes = 1000;
    std::string policy_path, k_path, q_path, variant;

    auto* solve = app.add_subcommand("solve", "optimal value and policy for the configured environment");
    add_common(solve, solve_c);
    solve->add_option("--horizon", solve_h, "horizon used to size adaptive grids");

    auto* sim = app.add_subcommand("simulate", "simulate episodes and write the feedback datasets");
    add_common(sim, sim_c);
    sim->add_option("--horizon", sim_h, "horizon used to size adaptive grids");
    sim->add_option("--episodes", episodes, "number of episodes")->check(CLI::PositiveNumber);
    sim->add_option("--policy", policy_path, "policy JSON (default: the optimal policy)");

    auto* est = app.add_subcommand("estimate", "fit k and q from dataset CSVs");
    add_common(est, est_c);
    est->add_option("--horizon", est_h, "horizon used to size adaptive grids");
    est->add_option("--k-data", k_path, "k-records CSV");
    est->add_option("--q-data", q_path, "auction records CSV");

    auto* run = app.add_subcommand("run", "run the configured algorithms for one seed");
    add_common(run, run_c);
    run->add_option("--variant", variant, "only this algorithm variant");
    run->add_option("--horizon", run_h, "only this horizon");

    auto* sweep = app.add_subcommand("sweep", "every (algorithm, horizon, seed) cell on a worker pool");
    add_common(sweep, sweep_c);
    sweep->add_option("--workers", sweep_workers, "worker threads (default: hardware concurrency)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*solve) return cmd_solve(solve_c, solve_h);
        if (*sim) return cmd_simulate(sim_c, sim_h, episodes, policy_path);
        if (*est) return cmd_estimate(est_c, est_h, k_path, q_path);
        if (*run) return cmd_run(run_c, variant, run_h);
        if (*sweep) return cmd_sweep(sweep_c, sweep_workers);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
