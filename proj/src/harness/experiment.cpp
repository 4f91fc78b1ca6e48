#include <algorithm>
#include <atomic>
#include <chrono>
#include <mutex>
#include <string>
#include <thread>

#include "dynbid/errors.hpp"
#include "dynbid/harness.hpp"
#include "dynbid/kernels.hpp"
#include "dynbid/rng.hpp"

namespace dynbid {

namespace {

constexpr const char* kVersion = "0.1.0";

struct Cell {
    std::size_t algorithm = 0;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
};

std::string trace_name(std::string_view variant, std::size_t n, std::uint64_t seed) {
    return "traces/" + std::string(variant) + "_N" + std::to_string(n) + "_seed" + std::to_string(seed) + ".csv";
}

// Single point through which worker results reach the disk.
class Collector {
public:
    Collector(const std::filesystem::path& root, std::size_t cells) : root_(root), rows_(cells), ok_(cells, false) {}

    void success(std::size_t index, SweepRow row, const RegretTrace& trace) {
        const std::lock_guard lock(mu_);
        const std::string rel = trace_name(row.variant, row.horizon, row.seed);
        write_trace_csv(root_ / rel, trace, row.variant, row.seed);
        rows_[index] = std::move(row);
        ok_[index] = true;
        traces_.emplace_back(index, rel);
    }

    void failure(RunFailure f) {
        const std::lock_guard lock(mu_);
        failures_.push_back(std::move(f));
    }

    ExperimentResult finish() {
        ExperimentResult res;
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            if (ok_[i]) res.rows.push_back(rows_[i]);
        }
        std::sort(traces_.begin(), traces_.end());
        for (const auto& t : traces_) res.files.emplace_back(t.second);
        std::sort(failures_.begin(), failures_.end(), [](const RunFailure& a, const RunFailure& b) {
            return std::tie(a.variant, a.horizon, a.seed) < std::tie(b.variant, b.horizon, b.seed);
        });
        res.failures = std::move(failures_);
        return res;
    }

private:
    std::filesystem::path root_;
    std::mutex mu_;
    std::vector<SweepRow> rows_;
    std::vector<bool> ok_;
    std::vector<std::pair<std::size_t, std::string>> traces_;
    std::vector<RunFailure> failures_;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    std::vector<EnvModel> envs;
    envs.reserve(cfg.horizons.size());
    for (std::size_t n : cfg.horizons) envs.push_back(build_environment(cfg, n));

    std::vector<Cell> cells;
    for (std::size_t a = 0; a < cfg.algorithms.size(); ++a) {
        for (std::size_t h = 0; h < cfg.horizons.size(); ++h) {
            for (std::uint64_t s : cfg.seeds) cells.push_back({a, h, s});
        }
    }

    std::filesystem::create_directories(cfg.output_dir);
    Collector collector(cfg.output_dir, cells.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            const Cell& c = cells[i];
            const AlgorithmSpec& spec = cfg.algorithms[c.algorithm];
            const std::size_t n = cfg.horizons[c.horizon];
            const std::string variant(to_string(spec.variant));
            const auto start = std::chrono::steady_clock::now();
            try {
                const RegretTrace trace = run_algorithm(envs[c.horizon], spec, n, c.seed);
                const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
                collector.success(i, SweepRow{variant, n, c.seed, trace.regret(), wall.count()}, trace);
            } catch (const std::exception& e) {
                collector.failure({variant, n, c.seed, e.what()});
            }
        }
    };
    std::size_t workers = cfg.workers ? cfg.workers : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, std::max<std::size_t>(1, cells.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();

    ExperimentResult res = collector.finish();
    if (!cfg.algorithms.empty()) {
        write_sweep_csv(cfg.output_dir / "sweep.csv", res.rows);
        res.files.insert(res.files.begin(), "sweep.csv");
    }

    nlohmann::json manifest;
    manifest["tool"] = "dynbid";
    manifest["version"] = kVersion;
    manifest["compiler"] = __VERSION__;
    manifest["config_sha256"] = sha256_hex(cfg.source.dump());
    manifest["config"] = cfg.source;
    manifest["rng"] = {{"name", Philox4x32::kName}, {"stream_key", "(master_seed, run_index, episode_index)"}};
    manifest["kernels"] = std::string(kernels::name(kernels::active()));
    nlohmann::json defaults;
    defaults["noise_sigma"] = cfg.env.noise_sigma;
    defaults["max_auctions"] = cfg.env.max_auctions;
    defaults["eta"] = cfg.env.eta;
    defaults["seed_count"] = cfg.seeds.size();
    if (cfg.env.smooth) {
        defaults["tail_tol"] = cfg.env.smooth->tail_tol;
        defaults["t_f"] = cfg.env.smooth->t_f();
    }
    nlohmann::json grid = nlohmann::json::object();
    for (std::size_t n : cfg.horizons) grid[std::to_string(n)] = grid_m_for(cfg, n);
    defaults["grid_m_per_horizon"] = grid;
    manifest["defaults"] = defaults;
    nlohmann::json files = nlohmann::json::array();
    for (const auto& f : res.files) files.push_back({{"path", f.generic_string()}, {"sha256", sha256_file(cfg.output_dir / f)}});
    manifest["files"] = files;
    nlohmann::json failures = nlohmann::json::array();
    for (const auto& f : res.failures) {
        failures.push_back({{"variant", f.variant}, {"N", f.horizon}, {"seed", f.seed}, {"error", f.message}});
    }
    manifest["failures"] = failures;
    write_json(cfg.output_dir / "manifest.json", manifest);
    return res;
}

}  // namespace dynbid
