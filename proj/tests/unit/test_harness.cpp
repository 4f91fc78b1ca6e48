#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "dynbid/errors.hpp"
#include "dynbid/harness.hpp"
#include "fixtures.hpp"

using namespace dynbid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("dynbid_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// sweep.csv without its wallclock column.
std::string drop_last_column(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line)) out += line.substr(0, line.rfind(',')) + '\n';
    return out;
}

json small_doc(const fs::path& out) {
    json doc = fixtures::baseline_doc();
    doc["horizons"] = {60, 120};
    doc["seeds"] = {3, 4};
    doc["output_dir"] = out.string();
    doc["workers"] = 2;
    for (auto& a : doc["algorithms"]) a["calibration_replicates"] = 3;
    return doc;
}

}  // namespace

TEST_CASE("baseline config parses with the documented values") {
    const ExperimentConfig cfg = fixtures::baseline_config();
    REQUIRE(cfg.env.smooth.has_value());
    CHECK(cfg.env.smooth->theta == 0.1);
    CHECK(cfg.env.smooth->alpha_exp == 2.0);
    CHECK(cfg.env.rates.mu == 0.5);
    CHECK(cfg.env.rates.gamma == 0.1);
    CHECK(cfg.grid_m == 10);
    CHECK(cfg.horizons == std::vector<std::size_t>{625, 2500, 10000});
    CHECK(cfg.seeds.size() == 20);
    CHECK(cfg.seeds.front() == 0);
    CHECK(cfg.seeds.back() == 19);
    REQUIRE(cfg.algorithms.size() == 3);
    CHECK(cfg.algorithms[0].variant == Variant::two_phase);
    CHECK(cfg.algorithms[2].variant == Variant::confidence_bounds);
}

TEST_CASE("config errors name the problem") {
    json doc = fixtures::baseline_doc();
    doc.erase("horizons");
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    doc = fixtures::baseline_doc();
    doc["env"]["k"] = json{{"knots", {0.0, 1.0}}, {"slopes", {0.5}}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    doc = fixtures::baseline_doc();
    doc["algorithms"] = {"greedy"};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    doc = fixtures::baseline_doc();
    doc["grid_m"] = "ten";
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    doc = fixtures::baseline_doc();
    doc["solver"] = {{"bisect_tol", -1.0}};
    CHECK_THROWS_AS(parse_config(doc), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("seed list forms") {
    json doc = fixtures::baseline_doc();
    doc["seeds"] = {7, 9};
    CHECK(parse_config(doc).seeds == std::vector<std::uint64_t>{7, 9});
    doc["seeds"] = {{"count", 3}, {"base", 100}};
    CHECK(parse_config(doc).seeds == std::vector<std::uint64_t>{100, 101, 102});
}

TEST_CASE("adaptive grid is ceil of the sixth root") {
    CHECK(adaptive_grid_m(1'000'000) == 10);
    CHECK(adaptive_grid_m(1) == 1);
    CHECK(adaptive_grid_m(64) == 2);
    CHECK(adaptive_grid_m(65) == 3);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = 1 + rng() % 100'000'000;
        const std::size_t m = adaptive_grid_m(n);
        CHECK(std::pow(static_cast<double>(m), 6) >= static_cast<double>(n));
        CHECK(std::pow(static_cast<double>(m - 1), 6) < static_cast<double>(n));
    }
    json doc = fixtures::baseline_doc();
    doc["adaptive_m"] = true;
    const ExperimentConfig cfg = parse_config(doc);
    CHECK(grid_m_for(cfg, 10000) == 5);
    CHECK(build_environment(cfg, 10000).k_true.curve().segments() == 5);
}

TEST_CASE("smooth environment is interpolated on uniform grids") {
    const ExperimentConfig cfg = fixtures::baseline_config();
    const EnvModel env = build_environment(cfg, 625);
    const double t_f = std::log(1000.0) / 0.1;
    const auto kk = env.k_true.curve().knots();
    REQUIRE(kk.size() == 11);
    for (std::size_t j = 0; j <= 10; ++j) {
        CHECK(kk[j] == doctest::Approx(t_f * j / 10.0));
        CHECK(env.k_true(kk[j]) == doctest::Approx(1.0 - std::exp(-0.1 * kk[j])));
    }
    const auto qk = env.q_true.curve().knots();
    REQUIRE(qk.size() == 11);
    for (std::size_t j = 0; j <= 10; ++j) {
        CHECK(qk[j] == doctest::Approx(j / 10.0));
        CHECK(env.q_true(qk[j]) == doctest::Approx(qk[j] * qk[j]));
    }
    CHECK(1.0 - env.k_true.k_inf() < 1.0001e-3);
    CHECK(env.rates.mu == 0.5);
    CHECK(env.noise_sigma == 0.1);
}

TEST_CASE("explicit curves pass through; invalid ones are config errors") {
    json doc = fixtures::baseline_doc();
    doc["env"].erase("smooth");
    doc["env"]["k"] = json{{"knots", {0.0, 2.0, 5.0}}, {"slopes", {0.2, 0.1}}};
    doc["env"]["q"] = json{{"knots", {0.0, 1.0}}, {"slopes", {0.8}}};
    const EnvModel env = build_environment(parse_config(doc), 100);
    CHECK(env.k_true.curve() == PwlCurve({0.0, 2.0, 5.0}, {0.2, 0.1}));
    CHECK(env.q_true.curve() == PwlCurve({0.0, 1.0}, {0.8}));
    doc["env"]["k"] = json{{"knots", {0.0, 2.0, 5.0}}, {"slopes", {0.1, 0.2}}};
    CHECK_THROWS_AS(build_environment(parse_config(doc), 100), ConfigError);
    doc["env"]["k"] = json{{"knots", {0.0, 2.0}}, {"slopes", {0.5}}};
    doc["env"]["q"] = json{{"knots", {0.0, 1.0}}, {"slopes", {0.9995}}};
    try {
        build_environment(parse_config(doc), 100);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("headroom") != std::string::npos);
    }
}

TEST_CASE("dataset CSVs round trip") {
    const EnvModel env = fixtures::baseline_env();
    const Batch b = run_batch(env, Policy::constant(0.8), 200, {2, 0, 0});
    const fs::path dir = scratch("csv");
    write_k_records_csv(dir / "k.csv", b.outcomes);
    write_auctions_csv(dir / "a.csv", b.outcomes);
    const auto k = read_k_records_csv(dir / "k.csv");
    const auto a = read_auctions_csv(dir / "a.csv");
    REQUIRE(k.size() == b.k_data.size());
    for (std::size_t i = 0; i < k.size(); ++i) {
        CHECK(k[i].win_ages == b.k_data[i].win_ages);
        CHECK(k[i].gross_value == b.k_data[i].gross_value);
    }
    REQUIRE(a.size() == b.q_data.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].t == b.q_data[i].t);
        CHECK(a[i].bid == b.q_data[i].bid);
        CHECK(a[i].won == b.q_data[i].won);
        CHECK(a[i].price == b.q_data[i].price);
    }
    fs::remove_all(dir);
}

TEST_CASE("sha256 known answers") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("empty algorithm list writes only the manifest") {
    const fs::path out = scratch("empty");
    json doc = small_doc(out);
    doc["algorithms"] = json::array();
    const ExperimentResult res = run_experiment(parse_config(doc));
    CHECK(res.rows.empty());
    CHECK(res.exit_code() == 0);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK_FALSE(fs::exists(out / "sweep.csv"));
    fs::remove_all(out);
}

TEST_CASE("sweep outputs, manifest completeness and determinism") {
    const fs::path a = scratch("sweep_a"), b = scratch("sweep_b");
    const ExperimentResult ra = run_experiment(parse_config(small_doc(a)));
    json doc_b = small_doc(b);
    doc_b["workers"] = 1;
    const ExperimentResult rb = run_experiment(parse_config(doc_b));
    CHECK(ra.exit_code() == 0);
    CHECK(ra.rows.size() == 3 * 2 * 2);

    const json manifest = json::parse(slurp(a / "manifest.json"));
    CHECK(manifest.at("rng").at("name") == Philox4x32::kName);
    CHECK(manifest.at("failures").empty());
    CHECK(manifest.at("config_sha256").get<std::string>().size() == 64);
    CHECK(manifest.at("defaults").at("grid_m_per_horizon").at("120") == 10);
    std::size_t listed = 0;
    for (const auto& f : manifest.at("files")) {
        ++listed;
        CHECK(f.at("sha256") == sha256_file(a / f.at("path").get<std::string>()));
    }
    std::size_t on_disk = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") ++on_disk;
    }
    CHECK(listed == on_disk);
    CHECK(listed == 1 + 12);

    for (const auto& e : fs::recursive_directory_iterator(a / "traces")) {
        CHECK(slurp(e.path()) == slurp(b / "traces" / e.path().filename()));
    }
    CHECK(drop_last_column(slurp(a / "sweep.csv")) == drop_last_column(slurp(b / "sweep.csv")));
    const std::string head = slurp(a / "sweep.csv").substr(0, slurp(a / "sweep.csv").find('\n'));
    CHECK(head == "variant,N,seed,final_regret,wallclock_s");
    const std::string trace = slurp(a / "traces" / "two-phase_N60_seed3.csv");
    CHECK(trace.substr(0, trace.find('\n')) == "episode,variant,seed,gap,cumulative_regret,policy_id");
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("a failing cell is recorded and the others still run") {
    const fs::path out = scratch("partial");
    json doc = small_doc(out);
    doc["horizons"] = {3, 60};  // two-phase needs N >= 4
    doc["algorithms"] = {"two-phase"};
    doc["seeds"] = {1};
    const ExperimentResult res = run_experiment(parse_config(doc));
    CHECK(res.exit_code() == 3);
    REQUIRE(res.failures.size() == 1);
    CHECK(res.failures[0].horizon == 3);
    CHECK(res.rows.size() == 1);
    const json manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("failures").size() == 1);
    fs::remove_all(out);
}

#ifdef DYNBID_CLI_PATH
TEST_CASE("command line exit codes") {
    const fs::path out = scratch("cli");
    const std::string cli = DYNBID_CLI_PATH;
    const std::string cfg = std::string(DYNBID_CONFIG_DIR) + "/smooth_baseline.json";
    const auto run = [](const std::string& cmd) {
        const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WEXITSTATUS(rc);
    };
    CHECK(run(cli + " solve --config " + cfg + " --out " + out.string()) == 0);
    CHECK(fs::exists(out / "policy.json"));
    CHECK(run(cli + " simulate --config " + cfg + " --out " + out.string() + " --episodes 50 --seed 1") == 0);
    CHECK(run(cli + " estimate --config " + cfg + " --out " + out.string() + " --k-data " + (out / "k_records.csv").string() +
              " --q-data " + (out / "auctions.csv").string()) == 0);
    CHECK(fs::exists(out / "q_hat.json"));
    CHECK(run(cli + " run --config " + cfg + " --out " + out.string() + " --variant two-phase --horizon 50 --seed 2") == 0);
    CHECK(fs::exists(out / "traces" / "two-phase_N50_seed2.csv"));
    std::ofstream(out / "bad.json") << R"({"horizons": []})";
    CHECK(run(cli + " solve --config " + (out / "bad.json").string()) == 2);
    fs::remove_all(out);
}
#endif
