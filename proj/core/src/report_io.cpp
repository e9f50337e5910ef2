#include "streamsim/report_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "streamsim/error.hpp"

namespace streamsim {
namespace {

using json = nlohmann::ordered_json;

json to_json(const RttStats& s) {
  json pct = json::object();
  for (std::size_t i = 0; i < kPercentileRanks.size(); ++i) {
    pct[fmt::format("p{}", kPercentileRanks[i])] = s.percentiles[i].count();
  }
  json cdf = json::array();
  for (const auto& p : s.cdf) cdf.push_back({p.rtt_seconds, p.cum_fraction});
  return {{"median_seconds", s.median.count()},
          {"percentiles_seconds", pct},
          {"cdf", cdf}};
}

RttStats rtt_from_json(const json& j) {
  RttStats s;
  s.median = Seconds(j.at("median_seconds").get<double>());
  const auto& pct = j.at("percentiles_seconds");
  for (std::size_t i = 0; i < kPercentileRanks.size(); ++i) {
    s.percentiles[i] =
        Seconds(pct.at(fmt::format("p{}", kPercentileRanks[i])).get<double>());
  }
  for (const auto& p : j.at("cdf")) {
    s.cdf.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }
  return s;
}

std::string num(double v) { return fmt::format("{}", v); }

std::string opt_num(const std::optional<double>& v) {
  return v ? num(*v) : std::string{};
}

}  // namespace

std::string report_to_json(const MetricsReport& r) {
  const auto& c = r.config;
  json j;
  j["status"] = r.status();
  j["config"] = {{"name", c.name},
                 {"architecture", c.architecture},
                 {"proxy_kind", c.proxy_kind},
                 {"num_conn", c.num_conn},
                 {"pattern", c.pattern},
                 {"workload", c.workload},
                 {"transport", c.transport},
                 {"producers", c.producers},
                 {"consumers", c.consumers},
                 {"message_count", c.message_count},
                 {"seed", c.seed}};
  if (r.infeasible) {
    j["infeasible"] = {{"reason", r.infeasible->reason},
                       {"hop", r.infeasible->hop},
                       {"limit", r.infeasible->limit}};
  }
  if (r.error) j["error"] = *r.error;
  j["throughput"] = {{"messages", r.throughput.messages},
                     {"span_seconds", r.throughput.span.count()},
                     {"rate_msgs_per_sec", r.throughput.rate}};
  j["rtt"] = r.rtt ? to_json(*r.rtt) : json(nullptr);
  j["per_consumer_counts"] = r.per_consumer_counts;
  j["rejected_publishes"] = r.rejected_publishes;
  if (r.overhead_vs_baseline) {
    j["overhead_vs_baseline"] = {
        {"throughput", r.overhead_vs_baseline->throughput},
        {"rtt", r.overhead_vs_baseline->rtt ? json(*r.overhead_vs_baseline->rtt)
                                            : json(nullptr)}};
  } else {
    j["overhead_vs_baseline"] = nullptr;
  }
  j["repetition_mean_over"] = r.repetition_mean_over;
  return j.dump(2) + "\n";
}

MetricsReport report_from_json(std::string_view text) {
  try {
    auto j = json::parse(text);
    MetricsReport r;
    const auto& c = j.at("config");
    r.config.name = c.at("name");
    r.config.architecture = c.at("architecture");
    r.config.proxy_kind = c.at("proxy_kind");
    r.config.num_conn = c.at("num_conn");
    r.config.pattern = c.at("pattern");
    r.config.workload = c.at("workload");
    r.config.transport = c.at("transport");
    r.config.producers = c.at("producers");
    r.config.consumers = c.at("consumers");
    r.config.message_count = c.at("message_count");
    r.config.seed = c.at("seed");
    if (j.contains("infeasible")) {
      const auto& i = j["infeasible"];
      r.infeasible = Infeasibility{i.at("reason"), i.at("hop"), i.at("limit")};
    }
    if (j.contains("error")) r.error = j["error"].get<std::string>();
    const auto& t = j.at("throughput");
    r.throughput.messages = t.at("messages");
    r.throughput.span = Seconds(t.at("span_seconds").get<double>());
    r.throughput.rate = t.at("rate_msgs_per_sec");
    if (!j.at("rtt").is_null()) r.rtt = rtt_from_json(j["rtt"]);
    r.per_consumer_counts = j.at("per_consumer_counts").get<std::vector<double>>();
    r.rejected_publishes = j.at("rejected_publishes");
    if (const auto& o = j.at("overhead_vs_baseline"); !o.is_null()) {
      OverheadRatios ratios;
      ratios.throughput = o.at("throughput");
      if (!o.at("rtt").is_null()) ratios.rtt = o["rtt"].get<double>();
      r.overhead_vs_baseline = ratios;
    }
    r.repetition_mean_over = j.at("repetition_mean_over");
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, fmt::format("bad report JSON: {}", e.what()));
  }
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(text);
  }
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::string summary_csv_header(const std::optional<std::string>& sweep_field) {
  std::string h;
  if (sweep_field) h += csv_field(*sweep_field) + ",";
  h += "architecture,proxy_kind,pattern,workload,transport,producers,"
       "consumers,message_count,status,reason,messages,span_seconds,"
       "rate_msgs_per_sec,rtt_median_seconds";
  for (int q : kPercentileRanks) h += fmt::format(",rtt_p{}_seconds", q);
  h += ",rejected_publishes,throughput_overhead,rtt_overhead,"
       "repetition_mean_over\r\n";
  return h;
}

std::string summary_csv_row(const MetricsReport& r,
                            const std::optional<SweepColumn>& sweep) {
  const auto& c = r.config;
  std::vector<std::string> cols;
  if (sweep) cols.push_back(csv_field(sweep->value));
  cols.push_back(csv_field(c.architecture));
  cols.push_back(csv_field(c.proxy_kind));
  cols.push_back(csv_field(c.pattern));
  cols.push_back(csv_field(c.workload));
  cols.push_back(csv_field(c.transport));
  cols.push_back(std::to_string(c.producers));
  cols.push_back(std::to_string(c.consumers));
  cols.push_back(std::to_string(c.message_count));
  if (r.status() != "ok") {
    cols.push_back(std::string(r.status()));
    cols.push_back(csv_field(
        r.infeasible ? fmt::format("{} at {} (limit {})", r.infeasible->reason,
                                   r.infeasible->hop, r.infeasible->limit)
                     : *r.error));
    for (int i = 0; i < 4 + static_cast<int>(kPercentileRanks.size()) + 3; ++i) {
      cols.emplace_back();
    }
    cols.push_back(std::to_string(r.repetition_mean_over));
  } else {
    cols.push_back("ok");
    cols.emplace_back();
    cols.push_back(num(r.throughput.messages));
    cols.push_back(num(r.throughput.span.count()));
    cols.push_back(num(r.throughput.rate));
    if (r.rtt) {
      cols.push_back(num(r.rtt->median.count()));
      for (auto p : r.rtt->percentiles) cols.push_back(num(p.count()));
    } else {
      for (std::size_t i = 0; i <= kPercentileRanks.size(); ++i) {
        cols.emplace_back();
      }
    }
    cols.push_back(num(r.rejected_publishes));
    if (r.overhead_vs_baseline) {
      cols.push_back(num(r.overhead_vs_baseline->throughput));
      cols.push_back(opt_num(r.overhead_vs_baseline->rtt));
    } else {
      cols.emplace_back();
      cols.emplace_back();
    }
    cols.push_back(std::to_string(r.repetition_mean_over));
  }
  std::string row;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) row += ',';
    row += cols[i];
  }
  return row + "\r\n";
}

std::string summary_csv(const MetricsReport& report) {
  return summary_csv_header() + summary_csv_row(report);
}

std::string cdf_csv(const MetricsReport& report) {
  std::string out = "rtt_seconds,cum_fraction\r\n";
  if (report.rtt) {
    for (const auto& p : report.rtt->cdf) {
      out += fmt::format("{},{}\r\n", p.rtt_seconds, p.cum_fraction);
    }
  }
  return out;
}

void write_text_file(const std::filesystem::path& path,
                     std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(Errc::io_error,
                fmt::format("cannot open '{}' for writing", path.string()));
  }
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) {
    throw Error(Errc::io_error, fmt::format("write to '{}' failed", path.string()));
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_error, fmt::format("cannot read '{}'", path.string()));
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_report_dir(const std::filesystem::path& dir,
                      const MetricsReport& report) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw Error(Errc::io_error, fmt::format("cannot create '{}': {}",
                                            dir.string(), ec.message()));
  }
  write_text_file(dir / "report.json", report_to_json(report));
  write_text_file(dir / "summary.csv", summary_csv(report));
  write_text_file(dir / "cdf.csv", cdf_csv(report));
}

}  // namespace streamsim
