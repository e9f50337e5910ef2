#include "streamsim/metrics.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "streamsim/error.hpp"

namespace streamsim {

Seconds RttStats::percentile(int rank) const {
  for (std::size_t i = 0; i < kPercentileRanks.size(); ++i) {
    if (kPercentileRanks[i] == rank) return percentiles[i];
  }
  throw Error(Errc::invalid_argument,
              fmt::format("rank {} is not reported", rank));
}

ConfigEcho echo_config(const ExperimentConfig& c) {
  ConfigEcho e;
  e.name = c.name;
  e.architecture = std::string(to_string(c.architecture));
  if (c.architecture == Architecture::prs) {
    e.proxy_kind = std::string(
        to_string(build_path(c.architecture, path_options(c)).proxy_kind.value()));
  }
  e.num_conn = c.num_conn;
  e.pattern = std::string(to_string(c.pattern));
  e.workload = c.workload.name;
  e.transport = std::string(to_string(c.transport));
  e.producers = c.producers;
  e.consumers = c.consumers;
  e.message_count = c.message_count;
  e.seed = c.seed;
  return e;
}

ThroughputSample compute_throughput(const RunRecord& record) {
  if (record.events.empty()) {
    throw Error(Errc::empty_record, "run recorded no deliveries");
  }
  Nanos first = record.events.front().publish_ts;
  Nanos last = record.events.front().deliver_ts;
  for (const auto& e : record.events) {
    first = std::min(first, e.publish_ts);
    last = std::max(last, e.deliver_ts);
  }
  if (last <= first) {
    throw Error(Errc::empty_record, "delivery span is not positive");
  }
  ThroughputSample t;
  t.messages = static_cast<double>(record.events.size());
  t.span = Seconds(to_seconds(last - first));
  t.rate = t.messages / t.span.count();
  return t;
}

std::vector<RttSample> rtt_samples(const RunRecord& record) {
  std::vector<RttSample> out;
  for (const auto& e : record.events) {
    if (e.reply_ts) out.push_back({e.id, e.consumer, *e.reply_ts - e.publish_ts});
  }
  return out;
}

namespace {

RttStats stats_from_sorted(const std::vector<double>& sorted) {
  if (sorted.empty()) {
    throw Error(Errc::empty_samples, "no RTT samples");
  }
  const std::size_t n = sorted.size();
  RttStats s;
  for (std::size_t i = 0; i < kPercentileRanks.size(); ++i) {
    auto q = static_cast<std::size_t>(kPercentileRanks[i]);
    std::size_t idx = (q * n + 99) / 100;
    idx = idx == 0 ? 0 : idx - 1;
    s.percentiles[i] = Seconds(sorted[idx]);
  }
  s.median = s.percentile(50);
  s.cdf.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.cdf.push_back({sorted[i], static_cast<double>(i + 1) /
                                    static_cast<double>(n)});
  }
  return s;
}

}  // namespace

RttStats compute_rtt_stats(std::span<const Nanos> samples) {
  std::vector<Nanos> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> secs;
  secs.reserve(sorted.size());
  for (auto d : sorted) secs.push_back(to_seconds(d));
  return stats_from_sorted(secs);
}

RttStats compute_rtt_stats(std::span<const RttSample> samples) {
  std::vector<Nanos> rtts;
  rtts.reserve(samples.size());
  for (const auto& s : samples) rtts.push_back(s.rtt);
  return compute_rtt_stats(std::span<const Nanos>(rtts));
}

MetricsReport build_report(const ExperimentConfig& config,
                           const RunRecord& record) {
  MetricsReport r;
  r.config = echo_config(config);
  r.throughput = compute_throughput(record);
  if (has_reply_leg(record.pattern)) {
    r.rtt = compute_rtt_stats(rtt_samples(record));
  }
  for (auto n : record.per_consumer_counts) {
    r.per_consumer_counts.push_back(static_cast<double>(n));
  }
  r.rejected_publishes = static_cast<double>(record.rejected_publishes);
  return r;
}

MetricsReport infeasible_report(const ExperimentConfig& config,
                                Infeasibility why) {
  MetricsReport r;
  r.config = echo_config(config);
  r.repetition_mean_over = 0;
  r.infeasible = std::move(why);
  return r;
}

MetricsReport error_report(const ExperimentConfig& config, std::string message) {
  MetricsReport r;
  r.config = echo_config(config);
  r.repetition_mean_over = 0;
  r.error = std::move(message);
  return r;
}

std::string_view MetricsReport::status() const noexcept {
  if (infeasible) return "infeasible";
  if (error) return "error";
  return "ok";
}

OverheadRatios compute_overhead(const MetricsReport& report,
                                const MetricsReport& baseline) {
  const auto& a = report.config;
  const auto& b = baseline.config;
  if (a.pattern != b.pattern || a.workload != b.workload ||
      a.producers != b.producers || a.consumers != b.consumers ||
      a.message_count != b.message_count) {
    throw Error(Errc::mismatched_config,
                "report and baseline differ in pattern, workload, or scale");
  }
  if (report.status() != "ok" || baseline.status() != "ok") {
    throw Error(Errc::mismatched_config, "no overhead for a run without data");
  }
  if (!(baseline.throughput.rate > 0) || !(report.throughput.rate > 0)) {
    throw Error(Errc::mismatched_config, "throughput rate must be positive");
  }
  OverheadRatios o;
  o.throughput = baseline.throughput.rate / report.throughput.rate;
  if (report.rtt && baseline.rtt) {
    if (!(baseline.rtt->median.count() > 0)) {
      throw Error(Errc::mismatched_config, "baseline median RTT is zero");
    }
    o.rtt = report.rtt->median / baseline.rtt->median;
  }
  return o;
}

namespace {

// Running mean: identical inputs come back unchanged, bit for bit.
class Mean {
 public:
  void add(double x) {
    ++n_;
    value_ += (x - value_) / static_cast<double>(n_);
  }
  double value() const noexcept { return value_; }

 private:
  double value_ = 0;
  std::uint64_t n_ = 0;
};

}  // namespace

MetricsReport merge_repetitions(std::span<const MetricsReport> reports) {
  if (reports.empty()) {
    throw Error(Errc::empty_record, "no repetitions to merge");
  }
  const auto& first = reports.front();
  for (const auto& r : reports) {
    if (!(r.config == first.config)) {
      throw Error(Errc::mismatched_config,
                  "repetitions come from different configurations");
    }
    if (r.rtt.has_value() != first.rtt.has_value() ||
        r.per_consumer_counts.size() != first.per_consumer_counts.size() ||
        r.status() != "ok") {
      throw Error(Errc::mismatched_config, "repetitions are not comparable");
    }
  }
  Mean messages, span, rate, rejected;
  std::vector<Mean> counts(first.per_consumer_counts.size());
  std::array<Mean, kPercentileRanks.size()> pct;
  std::vector<double> pooled;
  for (const auto& r : reports) {
    messages.add(r.throughput.messages);
    span.add(r.throughput.span.count());
    rate.add(r.throughput.rate);
    rejected.add(r.rejected_publishes);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      counts[i].add(r.per_consumer_counts[i]);
    }
    if (r.rtt) {
      for (std::size_t i = 0; i < pct.size(); ++i) {
        pct[i].add(r.rtt->percentiles[i].count());
      }
      for (const auto& p : r.rtt->cdf) pooled.push_back(p.rtt_seconds);
    }
  }

  MetricsReport m;
  m.config = first.config;
  m.throughput = {messages.value(), Seconds(span.value()), rate.value()};
  m.rejected_publishes = rejected.value();
  for (const auto& c : counts) m.per_consumer_counts.push_back(c.value());
  if (first.rtt) {
    RttStats stats;
    for (std::size_t i = 0; i < pct.size(); ++i) {
      stats.percentiles[i] = Seconds(pct[i].value());
    }
    // Averaging the p50 column keeps median == p50 exactly.
    stats.median = stats.percentile(50);
    std::sort(pooled.begin(), pooled.end());
    stats.cdf.reserve(pooled.size());
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      stats.cdf.push_back({pooled[i], static_cast<double>(i + 1) /
                                          static_cast<double>(pooled.size())});
    }
    m.rtt = std::move(stats);
  }
  m.repetition_mean_over = static_cast<std::uint32_t>(reports.size());
  return m;
}

}  // namespace streamsim
