#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamsim/harness.hpp"
#include "streamsim/units.hpp"

namespace streamsim {

struct ThroughputSample {
  /// Settled deliveries (a mean after merge_repetitions).
  double messages = 0;
  Seconds span{0};
  /// messages / span for a single run; the mean of per-run rates after a
  /// merge.
  double rate = 0;

  bool operator==(const ThroughputSample&) const = default;
};

struct RttSample {
  MessageId id;
  std::uint32_t consumer = 0;
  Nanos rtt{0};

  bool operator==(const RttSample&) const = default;
};

struct CdfPoint {
  double rtt_seconds = 0;
  double cum_fraction = 0;

  bool operator==(const CdfPoint&) const = default;
};

/// Ranks reported alongside the median.
inline constexpr std::array<int, 7> kPercentileRanks{10, 25, 50, 75, 90, 95, 99};

struct RttStats {
  Seconds median{0};
  /// Indexed like kPercentileRanks.
  std::array<Seconds, kPercentileRanks.size()> percentiles{};
  std::vector<CdfPoint> cdf;

  Seconds percentile(int rank) const;
  bool operator==(const RttStats&) const = default;
};

struct OverheadRatios {
  double throughput = 1.0;
  /// Absent when either side has no reply leg.
  std::optional<double> rtt;

  bool operator==(const OverheadRatios&) const = default;
};

/// Identifies what a report measured. Repetitions share one echo.
struct ConfigEcho {
  std::string name;
  std::string architecture;
  std::string proxy_kind;  // empty outside PRS
  std::uint32_t num_conn = 1;
  std::string pattern;
  std::string workload;
  std::string transport;
  std::uint32_t producers = 0;
  std::uint32_t consumers = 0;
  std::uint64_t message_count = 0;
  std::uint64_t seed = 0;

  bool operator==(const ConfigEcho&) const = default;
};

ConfigEcho echo_config(const ExperimentConfig& config);

/// Why a configuration produced no measurements.
struct Infeasibility {
  std::string reason;
  std::string hop;
  std::uint32_t limit = 0;

  bool operator==(const Infeasibility&) const = default;
};

struct MetricsReport {
  ConfigEcho config;
  ThroughputSample throughput;
  /// Absent for work_sharing, which has no reply leg.
  std::optional<RttStats> rtt;
  std::vector<double> per_consumer_counts;
  double rejected_publishes = 0;
  std::optional<OverheadRatios> overhead_vs_baseline;
  std::uint32_t repetition_mean_over = 1;
  /// Set on stub reports for configurations that could not run.
  std::optional<Infeasibility> infeasible;
  /// Set on stub reports for runs that failed for any other reason.
  std::optional<std::string> error;

  std::string_view status() const noexcept;

  bool operator==(const MetricsReport&) const = default;
};

/// Throws Error(empty_record) when there are no deliveries or the span is not
/// positive.
ThroughputSample compute_throughput(const RunRecord& record);

/// One sample per delivery whose reply came back, in event order.
std::vector<RttSample> rtt_samples(const RunRecord& record);

/// Nearest-rank percentiles on the sorted samples: rank q picks index
/// ceil(q*n/100)-1, so the median is the lower middle element for even n.
/// Throws Error(empty_samples).
RttStats compute_rtt_stats(std::span<const RttSample> samples);
RttStats compute_rtt_stats(std::span<const Nanos> samples);

/// Report for one repetition.
MetricsReport build_report(const ExperimentConfig& config,
                           const RunRecord& record);

/// Stub for a configuration rejected as infeasible.
MetricsReport infeasible_report(const ExperimentConfig& config,
                                Infeasibility why);

/// Stub for a run that failed with `message`.
MetricsReport error_report(const ExperimentConfig& config, std::string message);

/// throughput = baseline.rate / report.rate; rtt = report.median /
/// baseline.median. Throws Error(mismatched_config) when pattern, workload,
/// or scale differ, or the baseline is degenerate.
OverheadRatios compute_overhead(const MetricsReport& report,
                                const MetricsReport& baseline);

/// Means of throughput, percentiles, and counts; CDF pooled over every
/// sample. Throws Error(mismatched_config) on differing echoes and
/// Error(empty_record) for an empty list.
MetricsReport merge_repetitions(std::span<const MetricsReport> reports);

}  // namespace streamsim
