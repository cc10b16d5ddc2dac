#include "gpp/results.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gpp/errors.hpp"

namespace gpp::results {

namespace {

using nlohmann::json;

json record_to_json(const ResultRecord& r) {
    json axes = json::object();
    for (const auto& [name, value] : r.axes) axes[name] = value;
    return json{{"fingerprint", r.fingerprint},
                {"experiment", r.experiment},
                {"axes", axes},
                {"utility_auc", format_six_digits(r.utility_auc)},
                {"adversary_auc", format_six_digits(r.adversary_auc)},
                {"privacy_gap", format_six_digits(r.privacy_gap)},
                {"wall_time_s", format_six_digits(r.wall_time_s)},
                {"traces_ref", r.traces_ref}};
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

std::string axes_cell(const ResultRecord& r) {
    std::string out;
    for (const auto& [name, value] : r.axes) {
        if (!out.empty()) out += ";";
        out += name + "=" + value;
    }
    return out;
}

std::string record_to_csv(const ResultRecord& r) {
    std::ostringstream os;
    os << r.fingerprint << "," << csv_escape(r.experiment) << "," << csv_escape(axes_cell(r))
       << "," << format_six_digits(r.utility_auc) << "," << format_six_digits(r.adversary_auc)
       << "," << format_six_digits(r.privacy_gap) << "," << format_six_digits(r.wall_time_s)
       << "," << csv_escape(r.traces_ref);
    return os.str();
}

std::string header_line(Format format, const std::string& config_fingerprint) {
    if (format == Format::kJsonLines) {
        return json{{"artifact_version", kArtifactVersion},
                    {"config_fingerprint", config_fingerprint}}
            .dump();
    }
    return "# artifact_version=" + std::string(kArtifactVersion) +
           " config_fingerprint=" + config_fingerprint +
           "\nfingerprint,experiment,axes,utility_auc,adversary_auc,privacy_gap,wall_time_s,"
           "traces_ref";
}

}  // namespace

Format parse_format(const std::string& name) {
    if (name == "jsonl" || name == "json-lines") return Format::kJsonLines;
    if (name == "csv") return Format::kCsv;
    throw ConfigError("unknown results format '" + name + "' (want jsonl or csv)");
}

std::string fingerprint(const std::vector<std::pair<std::string, std::string>>& fields) {
    std::string canonical;
    for (const auto& [key, value] : fields) canonical += key + "=" + value + ";";
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return std::string(buf);
}

std::string format_six_digits(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
}

void emit_results(const std::vector<ResultRecord>& records, Format format, std::ostream& sink,
                  const std::string& config_fingerprint) {
    sink << header_line(format, config_fingerprint) << "\n";
    for (const auto& r : records)
        sink << (format == Format::kJsonLines ? record_to_json(r).dump() : record_to_csv(r))
             << "\n";
    if (!sink) throw DataError("emit_results: sink write failed");
}

void append_record(const ResultRecord& record, Format format, const std::string& path,
                   const std::string& config_fingerprint) {
    const bool exists = std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) throw DataError("append_record: cannot open " + path);
    std::string chunk;
    if (!exists) chunk += header_line(format, config_fingerprint) + "\n";
    chunk +=
        (format == Format::kJsonLines ? record_to_json(record).dump() : record_to_csv(record)) +
        "\n";
    out << chunk;
    out.flush();
    if (!out) throw DataError("append_record: write failed for " + path);
}

std::set<std::string> load_fingerprints(const std::string& path, Format format) {
    std::set<std::string> seen;
    std::ifstream in(path);
    if (!in) return seen;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (format == Format::kJsonLines) {
            const json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("fingerprint")) continue;
            seen.insert(j["fingerprint"].get<std::string>());
        } else {
            if (line[0] == '#' || line.rfind("fingerprint,", 0) == 0) continue;
            const auto comma = line.find(',');
            if (comma != std::string::npos) seen.insert(line.substr(0, comma));
        }
    }
    return seen;
}

}  // namespace gpp::results
