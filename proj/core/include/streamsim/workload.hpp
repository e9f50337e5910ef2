#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "streamsim/units.hpp"

namespace streamsim {

enum class PayloadFormat { binary, opaque_hdf5_like };

/// Shape of one streaming workload: how big each message is and how fast the
/// producers collectively try to emit them.
struct WorkloadProfile {
  std::string name;
  std::uint64_t payload_bytes = 0;
  std::uint32_t events_per_message = 1;
  PayloadFormat payload_format = PayloadFormat::binary;
  double target_rate_bps = 0.0;

  bool operator==(const WorkloadProfile&) const = default;
};

/// Bytes per detector event in the built-in dstream profile.
inline constexpr std::uint64_t kDstreamEventBytes = 2 * kKiB;
inline constexpr std::uint32_t kDstreamEventsPerMessage = 8;

/// Throws Error(invalid_argument) when a profile breaks its invariants.
void validate(const WorkloadProfile& profile);

/// Name -> profile lookup seeded with dstream, lstream and generic.
class ProfileRegistry {
 public:
  ProfileRegistry();

  /// Throws Error(unknown_profile) naming the identifier.
  const WorkloadProfile& lookup(std::string_view name) const;

  /// Registers a user profile. Built-in names cannot be redefined.
  void register_profile(WorkloadProfile profile);

  bool contains(std::string_view name) const;
  static bool is_builtin(std::string_view name);

 private:
  std::map<std::string, WorkloadProfile, std::less<>> profiles_;
};

/// Lookup against the built-in profiles only.
const WorkloadProfile& profile_lookup(std::string_view name);

struct MessageId {
  std::uint32_t producer = 0;
  std::uint64_t sequence = 0;

  auto operator<=>(const MessageId&) const = default;
};

enum class MessageKind : std::uint8_t { request = 1, reply = 2, control = 3 };

inline constexpr std::uint32_t kNoResponder = 0xffffffffu;

/// Fixed prefix written at the front of every payload so RTT accounting
/// needs no side channel. Layout (big-endian):
///   u32 producer | u32 responder | u64 sequence | i64 publish_ts_ns |
///   u32 payload_bytes | u8 kind | u8 version | u16 reserved
struct MessageHeader {
  static constexpr std::size_t kSize = 32;
  static constexpr std::uint8_t kVersion = 1;

  MessageId id;
  std::uint32_t responder = kNoResponder;
  Nanos publish_ts{0};
  std::uint32_t payload_bytes = 0;
  MessageKind kind = MessageKind::request;

  bool operator==(const MessageHeader&) const = default;
};

void encode_header(const MessageHeader& header, std::span<std::byte> out);
MessageHeader decode_header(std::span<const std::byte> in);

using Bytes = std::vector<std::byte>;

struct Message {
  MessageId id;
  MessageKind kind = MessageKind::request;
  /// Publish timestamp of the originating request, in the active clock domain.
  Nanos created_at{0};
  /// Consumer that produced a reply; kNoResponder for requests.
  std::uint32_t responder = kNoResponder;
  /// Logical payload length used for memory and bandwidth accounting.
  std::uint64_t size_bytes = 0;
  /// Materialized bytes (header prefix included). Null when the payload is
  /// carried by size only, as in virtual-clock runs.
  std::shared_ptr<const Bytes> payload;

  MessageHeader header() const;
};

/// Full message with deterministic pseudo-random payload bytes. The payload
/// is a pure function of (profile, producer_id, seq, seed); the header's
/// publish timestamp is left at zero for the sender to stamp.
Message generate_message(const WorkloadProfile& profile,
                         std::uint32_t producer_id, std::uint64_t seq,
                         std::uint64_t seed);

/// Same bytes as generate_message but as a mutable buffer.
Bytes generate_payload(const WorkloadProfile& profile,
                       std::uint32_t producer_id, std::uint64_t seq,
                       std::uint64_t seed);

/// Message that carries its logical size without materialized bytes.
Message make_sized_message(MessageId id, MessageKind kind,
                           std::uint64_t size_bytes, Nanos created_at,
                           std::uint32_t responder = kNoResponder);

/// Overwrites the publish timestamp inside an encoded payload.
void stamp_publish_time(std::span<std::byte> payload, Nanos publish_ts);

/// Rebuilds Message metadata from an encoded payload.
Message message_from_payload(std::shared_ptr<const Bytes> payload);

/// Per-producer send spacing that makes `producer_count` producers reach the
/// profile's aggregate target rate.
Seconds pacing_interval(const WorkloadProfile& profile,
                        std::uint32_t producer_count);

}  // namespace streamsim
