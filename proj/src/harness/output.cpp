#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <openssl/evp.h>

#include "dynbid/errors.hpp"
#include "dynbid/harness.hpp"

namespace dynbid {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_double(const std::string& s, const std::filesystem::path& path) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParameterError(path.string() + ": bad number '" + s + "'");
    }
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path, std::size_t columns) {
    std::ifstream in(path);
    if (!in) throw ParameterError("cannot open " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto cells = split(line);
        if (cells.size() != columns) {
            throw ParameterError(path.string() + ": expected " + std::to_string(columns) + " columns in '" + line + "'");
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

}  // namespace

std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

void write_trace_csv(const std::filesystem::path& path, const RegretTrace& trace, std::string_view variant,
                     std::uint64_t seed) {
    std::ofstream out = open_out(path);
    out << "episode,variant,seed,gap,cumulative_regret,policy_id\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << i + 1 << ',' << variant << ',' << seed << ',' << format_double(trace.gap[i]) << ','
            << format_double(trace.cumulative[i]) << ',' << trace.policy_id[i] << '\n';
    }
}

void write_sweep_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
    std::ofstream out = open_out(path);
    out << "variant,N,seed,final_regret,wallclock_s\n";
    for (const auto& r : rows) {
        char wall[32];
        std::snprintf(wall, sizeof wall, "%.3f", r.wallclock_s);
        out << r.variant << ',' << r.horizon << ',' << r.seed << ',' << format_double(r.final_regret) << ',' << wall
            << '\n';
    }
}

void write_k_records_csv(const std::filesystem::path& path, const std::vector<EpisodeOutcome>& outcomes) {
    std::ofstream out = open_out(path);
    out << "episode_id,age,gross_value\n";
    for (std::size_t e = 0; e < outcomes.size(); ++e) {
        if (!outcomes[e].k_record) continue;
        const EpisodeKRecord& rec = *outcomes[e].k_record;
        for (double a : rec.win_ages) out << e << ',' << format_double(a) << ",\n";
        out << e << ",," << format_double(rec.gross_value) << '\n';
    }
}

void write_auctions_csv(const std::filesystem::path& path, const std::vector<EpisodeOutcome>& outcomes) {
    std::ofstream out = open_out(path);
    out << "episode_id,t,bid,won,price\n";
    for (std::size_t e = 0; e < outcomes.size(); ++e) {
        for (const auto& a : outcomes[e].auctions) {
            out << e << ',' << format_double(a.t) << ',' << format_double(a.bid) << ',' << (a.won ? 1 : 0) << ','
                << format_double(a.price) << '\n';
        }
    }
}

std::vector<EpisodeKRecord> read_k_records_csv(const std::filesystem::path& path) {
    std::map<std::string, EpisodeKRecord> by_episode;
    std::vector<std::string> order;
    for (const auto& row : read_rows(path, 3)) {
        auto [it, inserted] = by_episode.try_emplace(row[0]);
        if (inserted) order.push_back(row[0]);
        if (!row[1].empty()) it->second.win_ages.push_back(to_double(row[1], path));
        if (!row[2].empty()) it->second.gross_value = to_double(row[2], path);
    }
    std::vector<EpisodeKRecord> out;
    for (const auto& id : order) {
        if (!by_episode[id].win_ages.empty()) out.push_back(std::move(by_episode[id]));
    }
    return out;
}

std::vector<AuctionRecord> read_auctions_csv(const std::filesystem::path& path) {
    std::vector<AuctionRecord> out;
    for (const auto& row : read_rows(path, 5)) {
        AuctionRecord a;
        a.t = to_double(row[1], path);
        a.bid = to_double(row[2], path);
        a.won = row[3] == "1" || row[3] == "true";
        a.price = to_double(row[4], path);
        out.push_back(a);
    }
    return out;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256: digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
    std::ofstream out = open_out(path);
    out << doc.dump(2) << '\n';
}

}  // namespace dynbid
