#pragma once

#include <cstdint>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace gpp::results {

inline constexpr const char* kArtifactVersion = "0.1.0";

struct ResultRecord {
    std::string fingerprint;  // stable hash of the semantic config
    std::string experiment;
    std::vector<std::pair<std::string, std::string>> axes;  // sweep point, in axis order
    double utility_auc = 0.0;
    double adversary_auc = 0.0;
    double privacy_gap = 0.0;
    double wall_time_s = 0.0;
    std::string traces_ref;  // sidecar path, empty when traces are not kept
};

enum class Format { kJsonLines, kCsv };

Format parse_format(const std::string& name);

// FNV-1a over a canonical key=value rendering; stable across runs and
// processes for semantically equal configs.
std::string fingerprint(const std::vector<std::pair<std::string, std::string>>& fields);

// One record per line, numeric fields at 6 significant digits, preceded by a
// metadata header line carrying the artifact version and config fingerprint.
void emit_results(const std::vector<ResultRecord>& records, Format format, std::ostream& sink,
                  const std::string& config_fingerprint);

// Appends a single record to a results file, creating it (with the metadata
// header) when absent. The line is written with one flush so concurrent
// writers under the results mutex never interleave partial records.
void append_record(const ResultRecord& record, Format format, const std::string& path,
                   const std::string& config_fingerprint);

// Fingerprints already present in a results file; used for idempotent reruns.
std::set<std::string> load_fingerprints(const std::string& path, Format format);

std::string format_six_digits(double v);

}  // namespace gpp::results
