#include <gtest/gtest.h>

#include "record_gen.hpp"
#include "streamsim/error.hpp"
#include "streamsim/report_io.hpp"

namespace streamsim {
namespace {

MetricsReport sample_report(testing::Gen& g) {
  ExperimentConfig c;
  c.pattern = Pattern::work_sharing_feedback;
  c.consumers = c.producers = 4;
  auto rec = testing::random_record(g, c.pattern);
  MetricsReport r;
  r.config = echo_config(c);
  r.throughput = compute_throughput(rec);
  r.rtt = compute_rtt_stats(rtt_samples(rec));
  r.per_consumer_counts = {1.5, 2, 3, 4};
  r.rejected_publishes = 7;
  r.overhead_vs_baseline = OverheadRatios{2.5, 1.25};
  r.repetition_mean_over = 3;
  return r;
}

TEST(ReportIo, JsonRoundTrip) {
  testing::Gen g(21);
  for (int i = 0; i < 10; ++i) {
    auto r = sample_report(g);
    auto back = report_from_json(report_to_json(r));
    EXPECT_EQ(back, r);
  }
  auto stub = infeasible_report(ExperimentConfig{}, {"connection-limit", "local-proxy", 16});
  EXPECT_EQ(report_from_json(report_to_json(stub)), stub);
  auto err = error_report(ExperimentConfig{}, "timeout: budget spent");
  EXPECT_EQ(report_from_json(report_to_json(err)), err);
}

TEST(ReportIo, JsonRejectsGarbage) {
  try {
    report_from_json("{not json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse_error);
  }
  EXPECT_THROW(report_from_json("{}"), Error);
}

TEST(ReportIo, CsvQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(ReportIo, SummaryShape) {
  testing::Gen g(2);
  auto r = sample_report(g);
  auto header = summary_csv_header();
  auto row = summary_csv_row(r);
  auto cols = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(cols(header), cols(row));
  EXPECT_EQ(header.rfind("\r\n"), header.size() - 2);
  EXPECT_EQ(summary_csv(r), header + row);
  auto swept = summary_csv_header(std::string("consumers"));
  EXPECT_EQ(swept.rfind("consumers,", 0), 0u);
  EXPECT_EQ(summary_csv_row(r, SweepColumn{"consumers", "4"}).rfind("4,", 0), 0u);
}

TEST(ReportIo, CdfCsv) {
  testing::Gen g(3);
  auto r = sample_report(g);
  auto text = cdf_csv(r);
  EXPECT_EQ(text.rfind("rtt_seconds,cum_fraction", 0), 0u);
  EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')),
            r.rtt->cdf.size() + 1);
  r.rtt.reset();
  auto empty = cdf_csv(r);
  EXPECT_EQ(std::count(empty.begin(), empty.end(), '\n'), 1);
}

TEST(ReportIo, WriteDir) {
  testing::TempDir tmp;
  testing::Gen g(4);
  auto r = sample_report(g);
  write_report_dir(tmp.path() / "x", r);
  EXPECT_EQ(report_from_json(read_text_file(tmp.path() / "x" / "report.json")), r);
  EXPECT_EQ(read_text_file(tmp.path() / "x" / "summary.csv"), summary_csv(r));
  EXPECT_EQ(read_text_file(tmp.path() / "x" / "cdf.csv"), cdf_csv(r));
  EXPECT_THROW(read_text_file(tmp.path() / "missing"), Error);
}

}  // namespace
}  // namespace streamsim
