#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streamsim/harness.hpp"

namespace streamsim {

/// Parsed experiment file.
///
///   # comment
///   [experiment]            or [experiment.NAME], one or more
///   architecture = prs
///   consumers = 8
///   duration = 30s          # us | ms | s; bare numbers are seconds
///   [hop.local-proxy]       overrides applied to every experiment
///   latency_us = 300        # bare numbers are microseconds for *_us keys
///   [profile.NAME]          custom workload
///   payload_bytes = 64 KiB  # KiB | MiB | GiB
///
/// Unknown sections and keys are errors.
struct ConfigFile {
  std::vector<ExperimentConfig> experiments;
  std::map<std::string, WorkloadProfile> profiles;
};

/// Throws Error(invalid_config) with the offending line number. Every
/// experiment is validated.
ConfigFile parse_config(std::string_view text);
ConfigFile load_config(const std::string& path);

/// Text that parse_config turns back into exactly `config`.
std::string dump_effective_config(const ExperimentConfig& config);
/// Several experiments in one file. Hop overrides are file-wide, so they are
/// taken from the first experiment.
std::string dump_effective_config(std::span<const ExperimentConfig> configs);

/// Applies STREAMSIM_SEED if set. Throws Error(invalid_config) if it is not
/// an unsigned integer.
void apply_env_overrides(ExperimentConfig& config);

/// "250us", "1.5ms", "2s", or a bare number in `bare_unit` nanoseconds.
Nanos parse_duration(std::string_view text, std::int64_t bare_unit_ns);
std::string format_duration(Nanos d);
/// "4096", "16 KiB", "1.5 MiB".
std::uint64_t parse_size(std::string_view text);

}  // namespace streamsim
