#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dynbid/algorithms.hpp"
#include "dynbid/environment.hpp"

namespace dynbid {

/// k(t) = 1 - exp(-theta t) truncated at T_f = ln(1 / tail_tol) / theta, and
/// q(v) = v^alpha_exp on [0, q_top], both interpolated on uniform grids.
struct SmoothSpec {
    double theta = 0.1;
    double alpha_exp = 2.0;
    double tail_tol = 1e-3;
    double q_top = 1.0;

    double t_f() const;
};

struct EnvSpec {
    std::optional<SmoothSpec> smooth;
    std::optional<PwlCurve> k;  // explicit mode
    std::optional<PwlCurve> q;
    MarketRates rates;
    double noise_sigma = 0.1;
    std::size_t max_auctions = 500;
    double alpha_floor = 0.0;
    double eta = WinCurveQ::kDefaultHeadroom;
};

struct ExperimentConfig {
    EnvSpec env;
    std::size_t grid_m = 10;
    /// Derive the grid per horizon as the smallest m with m^6 >= N.
    bool adaptive_m = false;
    std::vector<std::size_t> horizons;
    std::vector<std::uint64_t> seeds;
    std::vector<AlgorithmSpec> algorithms;
    std::filesystem::path output_dir = "out";
    /// 0 picks the hardware concurrency.
    std::size_t workers = 0;
    /// The document the config was parsed from (hashed into the manifest).
    nlohmann::json source;
};

/// Parses and validates a config document. Throws ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// ceil(N^(1/6)), computed exactly in integers.
std::size_t adaptive_grid_m(std::size_t horizon);

/// Grid size used for a horizon.
std::size_t grid_m_for(const ExperimentConfig& cfg, std::size_t horizon);

/// Interpolates smooth primitives (or passes explicit curves through) and
/// validates the result. Throws ConfigError naming the violated condition.
EnvModel build_environment(const ExperimentConfig& cfg, std::size_t horizon);

struct RunFailure {
    std::string variant;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    std::string message;
};

struct SweepRow {
    std::string variant;
    std::size_t horizon = 0;
    std::uint64_t seed = 0;
    double final_regret = 0.0;
    double wallclock_s = 0.0;
};

struct ExperimentResult {
    std::vector<SweepRow> rows;  // sorted by (variant order, N, seed)
    std::vector<RunFailure> failures;
    std::vector<std::filesystem::path> files;  // relative to output_dir
    int exit_code() const { return failures.empty() ? 0 : 3; }
};

/// Runs every (algorithm, horizon, seed) cell on a worker pool and writes
/// traces/<variant>_N<N>_seed<seed>.csv, sweep.csv and manifest.json under
/// cfg.output_dir. Failed cells are recorded in the manifest; the rest run.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// CSV emission. Numbers are written with 17 significant digits so files
// round-trip and compare byte for byte across runs.
std::string format_double(double x);
void write_trace_csv(const std::filesystem::path& path, const RegretTrace& trace, std::string_view variant,
                     std::uint64_t seed);
void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);
/// k-records: `episode_id,age,gross_value`, one row per win age (gross_value
/// empty) and one aggregate row per episode (age empty).
void write_k_records_csv(const std::filesystem::path& path, const std::vector<EpisodeOutcome>& outcomes);
/// `episode_id,t,bid,won,price`.
void write_auctions_csv(const std::filesystem::path& path, const std::vector<EpisodeOutcome>& outcomes);
std::vector<EpisodeKRecord> read_k_records_csv(const std::filesystem::path& path);
std::vector<AuctionRecord> read_auctions_csv(const std::filesystem::path& path);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace dynbid
