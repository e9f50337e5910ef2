#include "streamsim/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <set>

#include <fmt/format.h>

#include "streamsim/error.hpp"
#include "streamsim/report_io.hpp"

namespace streamsim {
namespace {

constexpr std::int64_t kNsPerUs = 1'000;
constexpr std::int64_t kNsPerMs = 1'000'000;
constexpr std::int64_t kNsPerS = 1'000'000'000;

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(std::string_view what) {
  throw Error(Errc::invalid_config, std::string(what));
}

std::uint64_t parse_uint(std::string_view text) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty()) {
    bad(fmt::format("'{}' is not a non-negative integer", text));
  }
  return v;
}

std::uint32_t parse_u32(std::string_view text) {
  auto v = parse_uint(text);
  if (v > 0xffffffffu) bad(fmt::format("'{}' is out of range", text));
  return static_cast<std::uint32_t>(v);
}

double parse_double(std::string_view text) {
  double v = 0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || p != text.data() + text.size() || text.empty()) {
    bad(fmt::format("'{}' is not a number", text));
  }
  return v;
}

bool parse_bool(std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  bad(fmt::format("'{}' is not true/false", text));
}

/// Exact decimal scaling: "1.5" * 1000 -> 1500. Fails when the product is
/// not an integer.
std::uint64_t scale_decimal(std::string_view number, std::uint64_t unit,
                            std::string_view original) {
  auto dot = number.find('.');
  std::string_view whole = number.substr(0, dot);
  std::string_view frac =
      dot == std::string_view::npos ? std::string_view{} : number.substr(dot + 1);
  if (whole.empty() && frac.empty()) bad(fmt::format("'{}' has no digits", original));
  std::uint64_t w = whole.empty() ? 0 : parse_uint(whole);
  std::uint64_t f = frac.empty() ? 0 : parse_uint(frac);
  if (frac.size() > 9) bad(fmt::format("'{}' is too precise", original));
  std::uint64_t denom = 1;
  for (std::size_t i = 0; i < frac.size(); ++i) denom *= 10;
  if (w > UINT64_MAX / unit) bad(fmt::format("'{}' is out of range", original));
  // f < 1e9 and unit <= 1 GiB, so the product fits in 64 bits.
  std::uint64_t frac_scaled = f * unit;
  if (frac_scaled % denom != 0) {
    bad(fmt::format("'{}' is finer than the smallest unit", original));
  }
  return w * unit + frac_scaled / denom;
}

std::string unquote(std::string_view v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
    return std::string(v.substr(1, v.size() - 2));
  }
  return std::string(v);
}

std::string_view payload_format_name(PayloadFormat f) {
  return f == PayloadFormat::binary ? "binary" : "opaque_hdf5_like";
}

PayloadFormat parse_payload_format(std::string_view text) {
  if (text == "binary") return PayloadFormat::binary;
  if (text == "opaque_hdf5_like") return PayloadFormat::opaque_hdf5_like;
  bad(fmt::format("unknown payload_format '{}' (binary, opaque_hdf5_like)", text));
}

std::string_view proxy_kind_name(ProxyKind k) { return to_string(k); }

using Setter = std::function<void(std::string_view)>;

struct PendingExperiment {
  ExperimentConfig config;
  std::string workload = "dstream";
  bool producers_set = false;
  int line = 0;
};

class Parser {
 public:
  ConfigFile run(std::string_view text) {
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string_view::npos) end = text.size();
      ++line_no;
      line(text.substr(pos, end - pos), line_no);
      pos = end + 1;
    }
    return finish();
  }

 private:
  enum class Section { none, experiment, hop, profile };

  void line(std::string_view raw, int no) {
    line_no_ = no;
    auto s = trim(strip_comment(raw));
    if (s.empty()) return;
    try {
      if (s.front() == '[') {
        if (s.back() != ']') bad("section header is missing ']'");
        open_section(trim(s.substr(1, s.size() - 2)));
        return;
      }
      auto eq = s.find('=');
      if (eq == std::string_view::npos) bad("expected 'key = value'");
      auto key = trim(s.substr(0, eq));
      auto value = unquote(trim(s.substr(eq + 1)));
      if (key.empty()) bad("empty key");
      assign(std::string(key), value);
    } catch (const Error& e) {
      throw Error(Errc::invalid_config,
                  fmt::format("line {}: {}", no, e.what()));
    }
  }

  static std::string_view strip_comment(std::string_view s) {
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '"') quoted = !quoted;
      if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
  }

  void open_section(std::string_view name) {
    seen_keys_.clear();
    auto dot = name.find('.');
    auto kind = name.substr(0, dot);
    std::string label =
        dot == std::string_view::npos ? std::string{} : std::string(name.substr(dot + 1));
    if (kind == "experiment") {
      section_ = Section::experiment;
      auto& e = experiments_.emplace_back();
      e.config.name = label;
      e.line = line_no_;
    } else if (kind == "hop") {
      if (label.empty()) bad("hop sections need a name: [hop.NAME]");
      if (hops_.count(label)) bad(fmt::format("hop '{}' defined twice", label));
      section_ = Section::hop;
      label_ = label;
      hops_[label];
    } else if (kind == "profile") {
      if (label.empty()) bad("profile sections need a name: [profile.NAME]");
      if (profiles_.count(label)) bad(fmt::format("profile '{}' defined twice", label));
      if (ProfileRegistry::is_builtin(label)) {
        bad(fmt::format("profile '{}' is built in and cannot be redefined", label));
      }
      section_ = Section::profile;
      label_ = label;
      auto& p = profiles_[label];
      p.name = label;
    } else {
      bad(fmt::format("unknown section '[{}]'", name));
    }
  }

  void assign(const std::string& key, const std::string& value) {
    if (!seen_keys_.insert(key).second) bad(fmt::format("duplicate key '{}'", key));
    switch (section_) {
      case Section::none:
        bad("key outside of any section");
      case Section::experiment:
        return experiment_key(experiments_.back(), key, value);
      case Section::hop:
        return hop_key(hops_[label_], key, value);
      case Section::profile:
        return profile_key(profiles_[label_], key, value);
    }
  }

  void experiment_key(PendingExperiment& pe, const std::string& key,
                      const std::string& v) {
    auto& c = pe.config;
    const std::map<std::string, Setter, std::less<>> setters = {
        {"name", [&](auto s) { c.name = std::string(s); }},
        {"architecture", [&](auto s) { c.architecture = parse_architecture(s); }},
        {"proxy_kind", [&](auto s) { c.proxy_kind = parse_proxy_kind(s); }},
        {"num_conn", [&](auto s) { c.num_conn = parse_u32(s); }},
        {"pattern", [&](auto s) { c.pattern = parse_pattern(s); }},
        {"workload", [&](auto s) { pe.workload = std::string(s); }},
        {"producers",
         [&](auto s) {
           c.producers = parse_u32(s);
           pe.producers_set = true;
         }},
        {"consumers", [&](auto s) { c.consumers = parse_u32(s); }},
        {"message_count", [&](auto s) { c.message_count = parse_uint(s); }},
        {"duration", [&](auto s) { c.duration = parse_duration(s, kNsPerS); }},
        {"max_message_count", [&](auto s) { c.max_message_count = parse_uint(s); }},
        {"prefetch", [&](auto s) { c.prefetch = parse_u32(s); }},
        {"ack_batch", [&](auto s) { c.ack_batch = parse_u32(s); }},
        {"work_queue_count", [&](auto s) { c.work_queue_count = parse_u32(s); }},
        {"transport", [&](auto s) { c.transport = parse_transport(s); }},
        {"seed", [&](auto s) { c.seed = parse_uint(s); }},
        {"repetitions", [&](auto s) { c.repetitions = parse_u32(s); }},
        {"broker_memory", [&](auto s) { c.broker_memory = parse_size(s); }},
        {"processing_time",
         [&](auto s) { c.processing_time = parse_duration(s, kNsPerS); }},
        {"reply_bytes",
         [&](auto s) {
           auto n = parse_size(s);
           if (n > 0xffffffffu) bad("reply_bytes is out of range");
           c.reply_bytes = static_cast<std::uint32_t>(n);
         }},
        {"timeout", [&](auto s) { c.timeout = parse_duration(s, kNsPerS); }},
        {"mss_consumer_full_chain",
         [&](auto s) { c.mss_consumer_full_chain = parse_bool(s); }},
    };
    call(setters, "experiment", key, v);
  }

  void hop_key(HopOverride& h, const std::string& key, const std::string& v) {
    const std::map<std::string, Setter, std::less<>> setters = {
        {"latency_us", [&](auto s) { h.latency = parse_duration(s, kNsPerUs); }},
        {"bandwidth_bps", [&](auto s) { h.bandwidth_bps = parse_double(s); }},
        {"tls_overhead_us",
         [&](auto s) { h.tls_overhead = parse_duration(s, kNsPerUs); }},
        {"conn_limit", [&](auto s) { h.conn_limit = parse_u32(s); }},
    };
    call(setters, "hop", key, v);
  }

  void profile_key(WorkloadProfile& p, const std::string& key,
                   const std::string& v) {
    const std::map<std::string, Setter, std::less<>> setters = {
        {"payload_bytes", [&](auto s) { p.payload_bytes = parse_size(s); }},
        {"events_per_message", [&](auto s) { p.events_per_message = parse_u32(s); }},
        {"payload_format",
         [&](auto s) { p.payload_format = parse_payload_format(s); }},
        {"target_rate_bps", [&](auto s) { p.target_rate_bps = parse_double(s); }},
    };
    call(setters, "profile", key, v);
  }

  static void call(const std::map<std::string, Setter, std::less<>>& setters,
                   std::string_view section, const std::string& key,
                   const std::string& value) {
    auto it = setters.find(key);
    if (it == setters.end()) {
      bad(fmt::format("unknown {} key '{}'", section, key));
    }
    try {
      it->second(value);
    } catch (const Error& e) {
      bad(fmt::format("{}: {}", key, e.what()));
    }
  }

  ConfigFile finish() {
    ConfigFile out;
    ProfileRegistry registry;
    for (auto& [name, p] : profiles_) {
      try {
        registry.register_profile(p);
      } catch (const Error& e) {
        bad(fmt::format("profile '{}': {}", name, e.what()));
      }
      out.profiles.emplace(name, p);
    }
    if (experiments_.empty()) bad("no [experiment] section");
    for (auto& pe : experiments_) {
      auto& c = pe.config;
      try {
        c.workload = registry.lookup(pe.workload);
      } catch (const Error& e) {
        throw Error(Errc::invalid_config,
                    fmt::format("line {}: {}", pe.line, e.what()));
      }
      if (!pe.producers_set) {
        c.producers = c.pattern == Pattern::broadcast_gather ? 1 : c.consumers;
      }
      c.hop_overrides = hops_;
      try {
        validate(c);
      } catch (const Error& e) {
        throw Error(Errc::invalid_config,
                    fmt::format("experiment at line {}: {}", pe.line, e.what()));
      }
      out.experiments.push_back(c);
    }
    return out;
  }

  Section section_ = Section::none;
  std::string label_;
  int line_no_ = 0;
  std::set<std::string> seen_keys_;
  std::vector<PendingExperiment> experiments_;
  std::map<std::string, HopOverride> hops_;
  std::map<std::string, WorkloadProfile> profiles_;
};

}  // namespace

Nanos parse_duration(std::string_view text, std::int64_t bare_unit_ns) {
  auto t = trim(text);
  std::int64_t unit = bare_unit_ns;
  std::string_view number = t;
  auto ends_with = [&](std::string_view suffix) {
    return t.size() > suffix.size() && t.substr(t.size() - suffix.size()) == suffix;
  };
  if (ends_with("us")) {
    unit = kNsPerUs;
    number = t.substr(0, t.size() - 2);
  } else if (ends_with("ms")) {
    unit = kNsPerMs;
    number = t.substr(0, t.size() - 2);
  } else if (ends_with("s")) {
    unit = kNsPerS;
    number = t.substr(0, t.size() - 1);
  }
  number = trim(number);
  auto ns = scale_decimal(number, static_cast<std::uint64_t>(unit), text);
  if (ns > static_cast<std::uint64_t>(INT64_MAX)) {
    bad(fmt::format("duration '{}' is out of range", text));
  }
  return Nanos{static_cast<std::int64_t>(ns)};
}

std::string format_duration(Nanos d) {
  auto ns = d.count();
  if (ns % kNsPerS == 0) return fmt::format("{}s", ns / kNsPerS);
  if (ns % kNsPerMs == 0) return fmt::format("{}ms", ns / kNsPerMs);
  if (ns % kNsPerUs == 0) return fmt::format("{}us", ns / kNsPerUs);
  auto frac = fmt::format("{:03}", ns % kNsPerUs);
  while (frac.back() == '0') frac.pop_back();
  return fmt::format("{}.{}us", ns / kNsPerUs, frac);
}

std::uint64_t parse_size(std::string_view text) {
  auto t = trim(text);
  std::uint64_t unit = 1;
  std::string_view number = t;
  for (auto [suffix, mult] : {std::pair<std::string_view, std::uint64_t>{"KiB", kKiB},
                              {"MiB", kMiB},
                              {"GiB", kGiB}}) {
    if (t.size() > suffix.size() && t.substr(t.size() - suffix.size()) == suffix) {
      unit = mult;
      number = trim(t.substr(0, t.size() - suffix.size()));
      break;
    }
  }
  return scale_decimal(number, unit, text);
}

ConfigFile parse_config(std::string_view text) { return Parser{}.run(text); }

ConfigFile load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error& e) {
    throw Error(Errc::invalid_config, e.what());
  }
  return parse_config(text);
}

namespace {

void put(std::string& out, std::string_view k, const std::string& v) {
  out += fmt::format("{} = {}\n", k, v);
}

void dump_profile(std::string& out, const WorkloadProfile& p) {
  out += fmt::format("[profile.{}]\n", p.name);
  put(out, "payload_bytes", std::to_string(p.payload_bytes));
  put(out, "events_per_message", std::to_string(p.events_per_message));
  put(out, "payload_format", std::string(payload_format_name(p.payload_format)));
  put(out, "target_rate_bps", fmt::format("{}", p.target_rate_bps));
  out += "\n";
}

void dump_hops(std::string& out, const std::map<std::string, HopOverride>& hops) {
  for (const auto& [name, h] : hops) {
    out += fmt::format("[hop.{}]\n", name);
    if (h.latency) put(out, "latency_us", format_duration(*h.latency));
    if (h.bandwidth_bps) put(out, "bandwidth_bps", fmt::format("{}", *h.bandwidth_bps));
    if (h.tls_overhead) put(out, "tls_overhead_us", format_duration(*h.tls_overhead));
    if (h.conn_limit) put(out, "conn_limit", std::to_string(*h.conn_limit));
    out += "\n";
  }
}

void dump_experiment(std::string& out, const ExperimentConfig& c) {
  out += "[experiment]\n";
  put(out, "name", fmt::format("\"{}\"", c.name));
  put(out, "architecture", std::string(to_string(c.architecture)));
  if (c.proxy_kind) put(out, "proxy_kind", std::string(proxy_kind_name(*c.proxy_kind)));
  put(out, "num_conn", std::to_string(c.num_conn));
  put(out, "pattern", std::string(to_string(c.pattern)));
  put(out, "workload", c.workload.name);
  put(out, "producers", std::to_string(c.producers));
  put(out, "consumers", std::to_string(c.consumers));
  put(out, "message_count", std::to_string(c.message_count));
  if (c.duration) put(out, "duration", format_duration(*c.duration));
  put(out, "max_message_count", std::to_string(c.max_message_count));
  put(out, "prefetch", std::to_string(c.prefetch));
  put(out, "ack_batch", std::to_string(c.ack_batch));
  put(out, "work_queue_count", std::to_string(c.work_queue_count));
  put(out, "transport", std::string(to_string(c.transport)));
  put(out, "seed", std::to_string(c.seed));
  put(out, "repetitions", std::to_string(c.repetitions));
  put(out, "broker_memory", std::to_string(c.broker_memory));
  put(out, "processing_time", format_duration(c.processing_time));
  put(out, "reply_bytes", std::to_string(c.reply_bytes));
  put(out, "timeout", format_duration(c.timeout));
  put(out, "mss_consumer_full_chain", c.mss_consumer_full_chain ? "true" : "false");
}

}  // namespace

std::string dump_effective_config(const ExperimentConfig& config) {
  return dump_effective_config(std::span<const ExperimentConfig>(&config, 1));
}

std::string dump_effective_config(std::span<const ExperimentConfig> configs) {
  std::string out;
  std::set<std::string> profiles;
  for (const auto& c : configs) {
    if (!ProfileRegistry::is_builtin(c.workload.name) &&
        profiles.insert(c.workload.name).second) {
      dump_profile(out, c.workload);
    }
  }
  if (!configs.empty()) dump_hops(out, configs.front().hop_overrides);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (i) out += "\n";
    dump_experiment(out, configs[i]);
  }
  return out;
}

void apply_env_overrides(ExperimentConfig& config) {
  const char* seed = std::getenv("STREAMSIM_SEED");
  if (!seed) return;
  try {
    config.seed = parse_uint(trim(seed));
  } catch (const Error&) {
    bad(fmt::format("STREAMSIM_SEED='{}' is not an unsigned integer", seed));
  }
}

}  // namespace streamsim
