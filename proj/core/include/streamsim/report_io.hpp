#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "streamsim/metrics.hpp"

namespace streamsim {

/// Pretty-printed JSON with stable field names. Durations are in seconds.
std::string report_to_json(const MetricsReport& report);
/// Throws Error(parse_error) on malformed input.
MetricsReport report_from_json(std::string_view text);

/// A column a sweep prepends to summary rows (e.g. "consumers").
struct SweepColumn {
  std::string field;
  std::string value;
};

std::string summary_csv_header(const std::optional<std::string>& sweep_field = {});
std::string summary_csv_row(const MetricsReport& report,
                            const std::optional<SweepColumn>& sweep = {});
/// Header plus one row.
std::string summary_csv(const MetricsReport& report);
/// `rtt_seconds,cum_fraction` rows; header only when there is no RTT.
std::string cdf_csv(const MetricsReport& report);

/// Quotes a field per RFC 4180 when it contains a comma, quote, or newline.
std::string csv_field(std::string_view text);

/// Writes report.json, summary.csv, and cdf.csv into `dir` (created if
/// needed). Throws Error(io_error).
void write_report_dir(const std::filesystem::path& dir,
                      const MetricsReport& report);

/// Writes `content` to `path`, replacing any existing file. Throws
/// Error(io_error).
void write_text_file(const std::filesystem::path& path,
                     std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace streamsim
