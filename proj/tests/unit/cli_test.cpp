#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "streamsim/config.hpp"
#include "streamsim/report_io.hpp"
#include "streamsim_cli/commands.hpp"
#include "test_support.hpp"

namespace streamsim::cli {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string write_conf(const testing::TempDir& tmp, const std::string& name,
                       const std::string& text) {
  auto p = tmp.path() / name;
  write_text_file(p, text);
  return p.string();
}

constexpr const char* kSmall =
    "[experiment]\n"
    "architecture = dts\n"
    "pattern = work_sharing_feedback\n"
    "consumers = 2\n"
    "message_count = 200\n"
    "repetitions = 2\n";

TEST(Cli, RunWritesArtifacts) {
  testing::TempDir tmp;
  auto conf = write_conf(tmp, "a.conf", kSmall);
  auto out = (tmp.path() / "out").string();
  auto r = cli({"run", conf, "--out", out});
  EXPECT_EQ(r.code, 0) << r.err;
  auto dir = fs::path(out) / "dts_work_sharing_feedback_dstream_c2";
  for (auto f : {"report.json", "summary.csv", "cdf.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  auto report = report_from_json(read_text_file(dir / "report.json"));
  EXPECT_EQ(report.repetition_mean_over, 2u);
  EXPECT_EQ(report.status(), "ok");
}

TEST(Cli, UnknownKeyIsConfigError) {
  testing::TempDir tmp;
  auto conf = write_conf(tmp, "bad.conf", "[experiment]\nconsumrs = 2\n");
  auto out = tmp.path() / "out";
  auto r = cli({"run", conf, "--out", out.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_NE(r.err.find("consumrs"), std::string::npos);
}

TEST(Cli, StunnelThirtyTwoIsInfeasible) {
  testing::TempDir tmp;
  auto conf = write_conf(tmp, "s.conf",
                         "[experiment]\narchitecture = prs\nproxy_kind = stunnel-like\n"
                         "consumers = 32\nmessage_count = 100\n");
  auto out = tmp.path() / "out";
  auto r = cli({"run", conf, "--out", out.string()});
  EXPECT_EQ(r.code, 3);
  auto dir = out / "prs_work_sharing_dstream_c32";
  auto report = report_from_json(read_text_file(dir / "report.json"));
  ASSERT_TRUE(report.infeasible);
  EXPECT_EQ(report.infeasible->reason, "connection-limit");
}

TEST(Cli, DumpEffectiveConfigRoundTrips) {
  testing::TempDir tmp;
  auto conf = write_conf(tmp, "a.conf", kSmall);
  auto r = cli({"run", conf, "--dump-effective-config"});
  ASSERT_EQ(r.code, 0);
  auto again = write_conf(tmp, "b.conf", r.out);
  auto r2 = cli({"run", again, "--dump-effective-config"});
  EXPECT_EQ(r2.out, r.out);
  EXPECT_EQ(parse_config(r.out).experiments, load_config(conf).experiments);
}

TEST(Cli, SweepWritesCombinedCsv) {
  testing::TempDir tmp;
  auto conf = write_conf(tmp, "a.conf",
                         "[experiment]\narchitecture = prs\nproxy_kind = stunnel-like\n"
                         "message_count = 64\nrepetitions = 1\n");
  auto out = tmp.path() / "sweep";
  auto r = cli({"sweep", conf, "--values", "1,8,32", "--out", out.string()});
  EXPECT_EQ(r.code, 3);  // the 32 point is infeasible, the rest complete
  auto csv = read_text_file(out / "summary.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_NE(csv.find("infeasible,connection-limit"), std::string::npos);
  EXPECT_TRUE(fs::exists(out / "prs_work_sharing_dstream_c8" / "report.json"));
}

TEST(Cli, SweepRejectsBadValues) {
  testing::TempDir tmp;
  auto conf = write_conf(tmp, "a.conf", kSmall);
  EXPECT_EQ(cli({"sweep", conf, "--values", "4,2"}).code, 2);
  EXPECT_EQ(cli({"sweep", conf, "--values", "0"}).code, 2);
  EXPECT_EQ(cli({"sweep", conf, "--field", "latency"}).code, 2);
}

TEST(Cli, SessionFlow) {
  testing::TempDir tmp;
  auto state = (tmp.path() / "state.json").string();
  auto in = cli({"session", "inbound-request", "--state", state, "--num_conn", "2"});
  ASSERT_EQ(in.code, 0) << in.err;
  std::istringstream lines(in.out);
  std::string uid, endpoint;
  lines >> uid >> endpoint;
  EXPECT_FALSE(uid.empty());
  EXPECT_EQ(endpoint.rfind("localhost:51", 0), 0u) << endpoint;

  auto bad = cli({"session", "outbound-request", "--state", state, "no-such-uid"});
  EXPECT_EQ(bad.code, 4);
  EXPECT_FALSE(bad.err.empty());

  auto mismatch = cli({"session", "outbound-request", "--state", state, uid});
  EXPECT_EQ(mismatch.code, 4);

  auto out = cli({"session", "outbound-request", "--state", state, "--num_conn", "2", uid,
                  endpoint});
  EXPECT_EQ(out.code, 0) << out.err;
  auto list = cli({"session", "list", "--state", state});
  EXPECT_NE(list.out.find(uid), std::string::npos);
  EXPECT_NE(list.out.find("established"), std::string::npos);
  EXPECT_EQ(cli({"session", "release", "--state", state, uid}).code, 0);
  EXPECT_EQ(cli({"session", "release", "--state", state, uid}).code, 4);
}

TEST(Cli, SessionValidation) {
  testing::TempDir tmp;
  auto state = (tmp.path() / "state.json").string();
  EXPECT_EQ(cli({"session", "inbound-request", "--state", state, "--num_conn", "0"}).code, 2);
  EXPECT_EQ(cli({"session", "inbound-request", "--state", state, "--s2cs", "nohost"}).code, 2);
  EXPECT_EQ(
      cli({"session", "inbound-request", "--state", state, "--receiver_ports", "0"}).code, 2);
}

TEST(Cli, ReportCommand) {
  testing::TempDir tmp;
  auto conf = write_conf(tmp, "a.conf", kSmall);
  auto out = tmp.path() / "out";
  ASSERT_EQ(cli({"run", conf, "--out", out.string()}).code, 0);
  auto json = (out / "dts_work_sharing_feedback_dstream_c2" / "report.json").string();
  auto summary = cli({"report", json});
  EXPECT_EQ(summary.code, 0);
  EXPECT_EQ(summary.out.rfind("architecture,", 0), 0u);
  auto ratio = cli({"report", json, "--baseline", json, "--format", "json"});
  EXPECT_EQ(ratio.code, 0);
  auto r = report_from_json(ratio.out);
  ASSERT_TRUE(r.overhead_vs_baseline);
  EXPECT_EQ(r.overhead_vs_baseline->throughput, 1.0);
  EXPECT_EQ(cli({"report", json, "--format", "xml"}).code, 2);
  auto dir = (out / "dts_work_sharing_feedback_dstream_c2").string();
  EXPECT_EQ(cli({"report", dir}).out, summary.out);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"bogus"}).code, 2);
  EXPECT_EQ(cli({"run"}).code, 2);
  auto help = cli({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("sweep"), std::string::npos);
}

TEST(Cli, ExitCodeContract) {
  EXPECT_EQ(exit_code_for(Errc::invalid_config), 2);
  EXPECT_EQ(exit_code_for(Errc::infeasible_configuration), 3);
  EXPECT_EQ(exit_code_for(Errc::unknown_uid), 4);
  EXPECT_EQ(exit_code_for(Errc::timeout), 1);
}

}  // namespace
}  // namespace streamsim::cli
