#include "streamsim_cli/commands.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <memory>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "streamsim/config.hpp"
#include "streamsim/overlay.hpp"
#include "streamsim/report_io.hpp"

namespace streamsim::cli {
namespace fs = std::filesystem;

int exit_code_for(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_config:
    case Errc::parse_error:
    case Errc::invalid_option:
    case Errc::invalid_argument:
    case Errc::unknown_profile:
    case Errc::name_conflict:
      return kExitConfig;
    case Errc::infeasible_configuration:
    case Errc::connection_limit_exceeded:
      return kExitInfeasible;
    case Errc::credential_rejected:
    case Errc::unknown_uid:
    case Errc::num_conn_mismatch:
    case Errc::pool_exhausted:
      return kExitControlPlane;
    default:
      return kExitFailure;
  }
}

std::string output_dir_name(const ExperimentConfig& c) {
  auto name = fmt::format("{}_{}_{}_c{}", to_string(c.architecture),
                          to_string(c.pattern), c.workload.name, c.consumers);
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  return name;
}

RunOutcome run_repetitions(const ExperimentConfig& config) {
  try {
    validate(config);
    std::vector<MetricsReport> reps;
    for (std::uint32_t r = 0; r < config.repetitions; ++r) {
      auto rep = config;
      rep.seed = config.seed + r;
      reps.push_back(build_report(config, run_experiment(rep)));
    }
    return {merge_repetitions(reps), kExitOk};
  } catch (const InfeasibleConfiguration& e) {
    return {infeasible_report(config, {e.reason(), e.hop(), e.limit()}),
            kExitInfeasible};
  } catch (const Error& e) {
    return {error_report(config, fmt::format("{}: {}", to_string(e.code()),
                                             e.what())),
            exit_code_for(e.code())};
  }
}

ExperimentConfig baseline_config(const ExperimentConfig& config) {
  auto b = config;
  b.architecture = Architecture::dts;
  b.proxy_kind.reset();
  b.num_conn = 1;
  b.mss_consumer_full_chain = false;
  const auto dts = build_path(Architecture::dts);
  std::erase_if(b.hop_overrides, [&](const auto& kv) {
    return std::none_of(dts.hops.begin(), dts.hops.end(),
                        [&](const HopSpec& h) { return h.name == kv.first; });
  });
  return b;
}

namespace {

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

int worst(int a, int b) {
  // Any hard failure outranks an infeasible data point.
  if (a == kExitOk) return b;
  if (b == kExitOk) return a;
  if (a == kExitInfeasible) return b;
  return a;
}

void attach_baseline(MetricsReport& report, const ExperimentConfig& config) {
  if (report.status() != "ok") return;
  auto base = run_repetitions(baseline_config(config));
  if (base.report.status() == "ok") {
    report.overhead_vs_baseline = compute_overhead(report, base.report);
  }
}

std::vector<ExperimentConfig> select_experiments(const ConfigFile& file,
                                                 const std::string& name) {
  std::vector<ExperimentConfig> out;
  for (auto c : file.experiments) {
    if (!name.empty() && c.name != name) continue;
    apply_env_overrides(c);
    out.push_back(std::move(c));
  }
  if (out.empty()) {
    throw Error(Errc::invalid_config,
                fmt::format("no experiment named '{}' in the config", name));
  }
  return out;
}

struct RunArgs {
  std::string config;
  std::string out_dir = "out";
  std::string experiment;
  bool dump = false;
  bool baseline = false;
};

int cmd_run(const RunArgs& a, Streams io) {
  auto experiments = select_experiments(load_config(a.config), a.experiment);
  if (a.dump) {
    io.out << dump_effective_config(experiments);
    return kExitOk;
  }
  int code = kExitOk;
  for (const auto& cfg : experiments) {
    auto outcome = run_repetitions(cfg);
    if (a.baseline) attach_baseline(outcome.report, cfg);
    auto dir = fs::path(a.out_dir) / output_dir_name(cfg);
    write_report_dir(dir, outcome.report);
    io.out << fmt::format("{} {}\n", outcome.report.status(), dir.string());
    if (outcome.report.infeasible) {
      const auto& i = *outcome.report.infeasible;
      io.err << fmt::format("infeasible: {} at hop '{}' (limit {})\n", i.reason,
                            i.hop, i.limit);
    } else if (outcome.report.error) {
      io.err << fmt::format("error: {}\n", *outcome.report.error);
    }
    code = worst(code, outcome.exit_code);
  }
  return code;
}

struct SweepArgs {
  std::string config;
  std::string field = "consumers";
  std::string values = "1,2,4,8,16,32,64";
  std::string out_dir = "out";
  std::string experiment;
  bool baseline = false;
};

std::vector<std::uint64_t> parse_values(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    auto item = text.substr(pos, comma - pos);
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0) {
      throw Error(Errc::invalid_config,
                  fmt::format("sweep value '{}' is not a positive integer", item));
    }
    if (!out.empty() && v <= out.back()) {
      throw Error(Errc::invalid_config, "sweep values must be strictly increasing");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

void apply_sweep_value(ExperimentConfig& c, const std::string& field,
                       std::uint64_t v, bool lockstep) {
  auto u32 = [&] {
    if (v > 0xffffffffu) throw Error(Errc::invalid_config, "sweep value too large");
    return static_cast<std::uint32_t>(v);
  };
  if (field == "consumers") {
    c.consumers = u32();
    if (lockstep) c.producers = c.consumers;
  } else if (field == "producers") {
    c.producers = u32();
  } else if (field == "num_conn") {
    c.num_conn = u32();
  } else if (field == "work_queue_count") {
    c.work_queue_count = u32();
  } else if (field == "prefetch") {
    c.prefetch = u32();
  } else if (field == "message_count") {
    c.message_count = v;
  } else {
    throw Error(Errc::invalid_config,
                fmt::format("cannot sweep '{}' (consumers, producers, num_conn, "
                            "work_queue_count, prefetch, message_count)",
                            field));
  }
}

int cmd_sweep(const SweepArgs& a, Streams io) {
  auto experiments = select_experiments(load_config(a.config), a.experiment);
  if (experiments.size() != 1) {
    throw Error(Errc::invalid_config,
                "the config holds several experiments; pick one with --experiment");
  }
  const auto base = experiments.front();
  const auto values = parse_values(a.values);
  // Work-sharing patterns scale producers with consumers unless the config
  // pins a different producer count.
  const bool lockstep = a.field == "consumers" &&
                        base.pattern != Pattern::broadcast_gather &&
                        base.producers == base.consumers;
  {
    auto probe = base;  // reject an unknown field before anything runs
    apply_sweep_value(probe, a.field, values.front(), lockstep);
  }

  std::string combined = summary_csv_header(a.field);
  int code = kExitOk;
  for (auto v : values) {
    auto cfg = base;
    apply_sweep_value(cfg, a.field, v, lockstep);
    auto dir_name = output_dir_name(cfg);
    if (a.field != "consumers") dir_name += fmt::format("_{}{}", a.field, v);
    RunOutcome outcome;
    try {
      outcome = run_repetitions(cfg);
    } catch (const Error& e) {
      outcome = {error_report(cfg, e.what()), exit_code_for(e.code())};
    }
    if (a.baseline) attach_baseline(outcome.report, cfg);
    auto dir = fs::path(a.out_dir) / dir_name;
    write_report_dir(dir, outcome.report);
    combined += summary_csv_row(outcome.report,
                                SweepColumn{a.field, std::to_string(v)});
    io.out << fmt::format("{}={} {} {}\n", a.field, v, outcome.report.status(),
                          dir.string());
    code = worst(code, outcome.exit_code);
  }
  write_text_file(fs::path(a.out_dir) / "summary.csv", combined);
  return code;
}

struct SessionArgs {
  std::string state = "streamsim-overlay.json";
  std::string server_cert = "streamsim-cli";
  std::string remote_ip = "127.0.0.1";
  std::string s2cs = "localhost:5000";
  std::string receiver_ports = "5672";
  std::uint32_t num_conn = 1;
  std::string uid;
  std::string remote_endpoint;
};

std::vector<std::uint16_t> parse_ports(const std::string& text) {
  std::vector<std::uint16_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    auto item = text.substr(pos, comma - pos);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v == 0 || v > 65535) {
      throw Error(Errc::invalid_argument,
                  fmt::format("receiver port '{}' is not a port number", item));
    }
    out.push_back(static_cast<std::uint16_t>(v));
    pos = comma + 1;
  }
  return out;
}

std::unique_ptr<ControlPlane> load_plane(const std::string& path) {
  auto plane = std::make_unique<ControlPlane>();
  if (fs::exists(path)) plane->restore(read_text_file(path));
  return plane;
}

SessionRequest make_request(const SessionArgs& a, Direction d) {
  SessionRequest r;
  r.direction = d;
  r.control_endpoint = Endpoint::parse(a.s2cs);
  r.receiver_ports = parse_ports(a.receiver_ports);
  r.remote_endpoint = {a.remote_ip, r.receiver_ports.front()};
  r.num_conn = a.num_conn;
  r.credential = a.server_cert;
  return r;
}

int cmd_inbound(const SessionArgs& a, Streams io) {
  auto plane = load_plane(a.state);
  auto res = plane->inbound_request(make_request(a, Direction::inbound));
  write_text_file(a.state, plane->serialize());
  io.out << res.uid << "\n" << res.consumer_proxy.str() << "\n";
  return kExitOk;
}

int cmd_outbound(const SessionArgs& a, Streams io) {
  auto plane = load_plane(a.state);
  auto req = make_request(a, Direction::outbound);
  if (!a.remote_endpoint.empty()) {
    req.remote_endpoint = Endpoint::parse(a.remote_endpoint);
  }
  auto proxy = plane->outbound_request(req, a.uid);
  write_text_file(a.state, plane->serialize());
  io.out << proxy.str() << "\n";
  return kExitOk;
}

int cmd_release(const SessionArgs& a, Streams io) {
  auto plane = load_plane(a.state);
  plane->release(a.uid);
  write_text_file(a.state, plane->serialize());
  io.out << "released " << a.uid << "\n";
  return kExitOk;
}

int cmd_list(const SessionArgs& a, Streams io) {
  auto plane = load_plane(a.state);
  for (const auto& s : plane->live_sessions()) {
    io.out << fmt::format(
        "{} {} consumer={} producer={} num_conn={}\n", s.uid,
        s.state == SessionState::established ? "established" : "half-open",
        s.consumer_proxy.str(),
        s.producer_proxy ? s.producer_proxy->str() : std::string("-"),
        s.num_conn);
  }
  return kExitOk;
}

struct ReportArgs {
  std::string report;
  std::string baseline;
  std::string format = "summary";
};

// Accepts a report.json path or the run directory that holds one.
MetricsReport load_report(const std::string& path) {
  std::filesystem::path p(path);
  if (std::filesystem::is_directory(p)) p /= "report.json";
  return report_from_json(read_text_file(p.string()));
}

int cmd_report(const ReportArgs& a, Streams io) {
  auto report = load_report(a.report);
  if (!a.baseline.empty()) {
    auto base = load_report(a.baseline);
    report.overhead_vs_baseline = compute_overhead(report, base);
  }
  if (a.format == "json") {
    io.out << report_to_json(report);
  } else if (a.format == "cdf") {
    io.out << cdf_csv(report);
  } else {
    io.out << summary_csv(report);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  Streams io{out, err};
  CLI::App app{"Cross-facility streaming architecture simulator", "streamsim"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run every experiment in a config");
  run_cmd->add_option("config", run.config, "Experiment config file")->required();
  run_cmd->add_option("--out", run.out_dir, "Output directory")->capture_default_str();
  run_cmd->add_option("--experiment", run.experiment, "Only this experiment");
  run_cmd->add_flag("--dump-effective-config", run.dump,
                    "Print the fully resolved config and exit");
  run_cmd->add_flag("--baseline", run.baseline,
                    "Also run the DTS baseline and fill overhead ratios");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Sweep one field of a config");
  sweep_cmd->add_option("config", sweep.config, "Experiment config file")->required();
  sweep_cmd->add_option("--field", sweep.field, "Field to sweep")->capture_default_str();
  sweep_cmd->add_option("--values", sweep.values, "Comma-separated values")
      ->capture_default_str();
  sweep_cmd->add_option("--out", sweep.out_dir, "Output directory")->capture_default_str();
  sweep_cmd->add_option("--experiment", sweep.experiment, "Experiment to sweep");
  sweep_cmd->add_flag("--with-baseline", sweep.baseline,
                      "Fill overhead columns against DTS");

  SessionArgs session;
  auto* session_cmd = app.add_subcommand("session", "Manage overlay sessions");
  session_cmd->require_subcommand(1);
  auto state_opt = [&](CLI::App* c) {
    c->add_option("--state", session.state, "Control-plane state file")
        ->capture_default_str();
  };
  auto session_opts = [&](CLI::App* c) {
    state_opt(c);
    c->add_option("--server_cert", session.server_cert, "Credential presented")
        ->capture_default_str();
    c->add_option("--remote_ip", session.remote_ip, "Peer address")
        ->capture_default_str();
    c->add_option("--s2cs", session.s2cs, "Control server host:port")
        ->capture_default_str();
    c->add_option("--receiver_ports", session.receiver_ports,
                  "Comma-separated receiver ports")
        ->capture_default_str();
    c->add_option("--num_conn", session.num_conn, "Parallel connections")
        ->capture_default_str();
  };
  auto* inbound_cmd =
      session_cmd->add_subcommand("inbound-request", "Create the consumer proxy");
  session_opts(inbound_cmd);
  auto* outbound_cmd =
      session_cmd->add_subcommand("outbound-request", "Create the producer proxy");
  session_opts(outbound_cmd);
  outbound_cmd->add_option("uid", session.uid, "UID from inbound-request")->required();
  outbound_cmd->add_option("remote", session.remote_endpoint,
                           "Consumer proxy host:port");
  auto* release_cmd = session_cmd->add_subcommand("release", "Tear a session down");
  release_cmd->add_option("uid", session.uid, "Session UID")->required();
  state_opt(release_cmd);
  auto* list_cmd = session_cmd->add_subcommand("list", "List live sessions");
  state_opt(list_cmd);

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Render a saved report");
  report_cmd->add_option("report", report.report, "report.json or its run directory")->required();
  report_cmd->add_option("--baseline", report.baseline,
                         "Baseline report.json for overhead ratios");
  report_cmd->add_option("--format", report.format, "summary, cdf, or json")
      ->check(CLI::IsMember({"summary", "cdf", "json"}))
      ->capture_default_str();

  std::vector<std::string> argv_store{"streamsim"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run, io);
    if (sweep_cmd->parsed()) return cmd_sweep(sweep, io);
    if (inbound_cmd->parsed()) return cmd_inbound(session, io);
    if (outbound_cmd->parsed()) return cmd_outbound(session, io);
    if (release_cmd->parsed()) return cmd_release(session, io);
    if (list_cmd->parsed()) return cmd_list(session, io);
    if (report_cmd->parsed()) return cmd_report(report, io);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace streamsim::cli
