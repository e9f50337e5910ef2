#include "streamsim/workload.hpp"

#include <algorithm>
#include <cstring>

#include <fmt/format.h>

#include "streamsim/error.hpp"

namespace streamsim {
namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t mix_key(std::uint64_t seed, std::uint32_t producer,
                      std::uint64_t seq) {
  std::uint64_t state = seed;
  std::uint64_t a = splitmix64(state);
  state = a ^ (static_cast<std::uint64_t>(producer) << 1 | 1);
  std::uint64_t b = splitmix64(state);
  state = b ^ seq;
  return splitmix64(state);
}

template <typename T>
void put_be(std::span<std::byte> out, std::size_t offset, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out[offset + i] = static_cast<std::byte>(
        (static_cast<std::uint64_t>(value) >> (8 * (sizeof(T) - 1 - i))) & 0xff);
  }
}

template <typename T>
T get_be(std::span<const std::byte> in, std::size_t offset) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v = (v << 8) | std::to_integer<std::uint64_t>(in[offset + i]);
  }
  return static_cast<T>(v);
}

WorkloadProfile make_builtin(std::string name, std::uint64_t bytes,
                             std::uint32_t events, PayloadFormat format,
                             double rate) {
  WorkloadProfile p;
  p.name = std::move(name);
  p.payload_bytes = bytes;
  p.events_per_message = events;
  p.payload_format = format;
  p.target_rate_bps = rate;
  return p;
}

const ProfileRegistry& builtin_registry() {
  static const ProfileRegistry registry;
  return registry;
}

}  // namespace

void validate(const WorkloadProfile& profile) {
  if (profile.name.empty()) {
    throw Error(Errc::invalid_argument, "workload profile needs a name");
  }
  if (profile.payload_bytes == 0) {
    throw Error(Errc::invalid_argument,
                fmt::format("profile '{}': payload_bytes must be > 0",
                            profile.name));
  }
  if (profile.payload_bytes < MessageHeader::kSize) {
    throw Error(Errc::invalid_argument,
                fmt::format("profile '{}': payload_bytes must hold the {}-byte "
                            "message header",
                            profile.name, MessageHeader::kSize));
  }
  if (profile.payload_bytes > 0xffffffffull) {
    throw Error(Errc::invalid_argument,
                fmt::format("profile '{}': payload_bytes exceeds 4 GiB",
                            profile.name));
  }
  if (profile.events_per_message < 1) {
    throw Error(Errc::invalid_argument,
                fmt::format("profile '{}': events_per_message must be >= 1",
                            profile.name));
  }
  if (!(profile.target_rate_bps > 0.0)) {
    throw Error(Errc::invalid_argument,
                fmt::format("profile '{}': target_rate_bps must be > 0",
                            profile.name));
  }
}

ProfileRegistry::ProfileRegistry() {
  // Detector stream: 8 events of 2 KiB batched per message.
  profiles_.emplace("dstream",
                    make_builtin("dstream",
                                 kDstreamEventBytes * kDstreamEventsPerMessage,
                                 kDstreamEventsPerMessage, PayloadFormat::binary,
                                 32e9));
  profiles_.emplace("lstream",
                    make_builtin("lstream", kMiB, 1,
                                 PayloadFormat::opaque_hdf5_like, 30e9));
  profiles_.emplace("generic", make_builtin("generic", 4 * kMiB, 1,
                                            PayloadFormat::binary, 25e9));
}

const WorkloadProfile& ProfileRegistry::lookup(std::string_view name) const {
  auto it = profiles_.find(name);
  if (it == profiles_.end()) {
    throw Error(Errc::unknown_profile,
                fmt::format("unknown workload profile '{}'", name));
  }
  return it->second;
}

void ProfileRegistry::register_profile(WorkloadProfile profile) {
  validate(profile);
  if (is_builtin(profile.name)) {
    throw Error(Errc::name_conflict,
                fmt::format("'{}' is a built-in profile", profile.name));
  }
  auto name = profile.name;
  profiles_.insert_or_assign(std::move(name), std::move(profile));
}

bool ProfileRegistry::contains(std::string_view name) const {
  return profiles_.find(name) != profiles_.end();
}

bool ProfileRegistry::is_builtin(std::string_view name) {
  return name == "dstream" || name == "lstream" || name == "generic";
}

const WorkloadProfile& profile_lookup(std::string_view name) {
  return builtin_registry().lookup(name);
}

void encode_header(const MessageHeader& h, std::span<std::byte> out) {
  if (out.size() < MessageHeader::kSize) {
    throw Error(Errc::invalid_argument, "buffer too small for header");
  }
  put_be<std::uint32_t>(out, 0, h.id.producer);
  put_be<std::uint32_t>(out, 4, h.responder);
  put_be<std::uint64_t>(out, 8, h.id.sequence);
  put_be<std::uint64_t>(out, 16, static_cast<std::uint64_t>(h.publish_ts.count()));
  put_be<std::uint32_t>(out, 24, h.payload_bytes);
  put_be<std::uint8_t>(out, 28, static_cast<std::uint8_t>(h.kind));
  put_be<std::uint8_t>(out, 29, MessageHeader::kVersion);
  put_be<std::uint16_t>(out, 30, 0);
}

MessageHeader decode_header(std::span<const std::byte> in) {
  if (in.size() < MessageHeader::kSize) {
    throw Error(Errc::protocol_error, "payload shorter than message header");
  }
  if (get_be<std::uint8_t>(in, 29) != MessageHeader::kVersion) {
    throw Error(Errc::protocol_error, "unsupported message header version");
  }
  MessageHeader h;
  h.id.producer = get_be<std::uint32_t>(in, 0);
  h.responder = get_be<std::uint32_t>(in, 4);
  h.id.sequence = get_be<std::uint64_t>(in, 8);
  h.publish_ts = Nanos{static_cast<std::int64_t>(get_be<std::uint64_t>(in, 16))};
  h.payload_bytes = get_be<std::uint32_t>(in, 24);
  auto kind = get_be<std::uint8_t>(in, 28);
  if (kind < 1 || kind > 3) {
    throw Error(Errc::protocol_error, "bad message kind in header");
  }
  h.kind = static_cast<MessageKind>(kind);
  return h;
}

MessageHeader Message::header() const {
  MessageHeader h;
  h.id = id;
  h.responder = responder;
  h.publish_ts = created_at;
  h.payload_bytes = static_cast<std::uint32_t>(size_bytes);
  h.kind = kind;
  return h;
}

Bytes generate_payload(const WorkloadProfile& profile,
                       std::uint32_t producer_id, std::uint64_t seq,
                       std::uint64_t seed) {
  Bytes out(profile.payload_bytes);
  MessageHeader h;
  h.id = {producer_id, seq};
  h.payload_bytes = static_cast<std::uint32_t>(profile.payload_bytes);
  h.kind = MessageKind::request;
  encode_header(h, out);

  std::uint64_t state = mix_key(seed, producer_id, seq);
  std::size_t pos = MessageHeader::kSize;
  while (pos + 8 <= out.size()) {
    std::uint64_t word = splitmix64(state);
    std::memcpy(out.data() + pos, &word, 8);
    pos += 8;
  }
  if (pos < out.size()) {
    std::uint64_t word = splitmix64(state);
    std::memcpy(out.data() + pos, &word, out.size() - pos);
  }
  return out;
}

Message generate_message(const WorkloadProfile& profile,
                         std::uint32_t producer_id, std::uint64_t seq,
                         std::uint64_t seed) {
  Message m;
  m.id = {producer_id, seq};
  m.kind = MessageKind::request;
  m.size_bytes = profile.payload_bytes;
  m.payload = std::make_shared<const Bytes>(
      generate_payload(profile, producer_id, seq, seed));
  return m;
}

Message make_sized_message(MessageId id, MessageKind kind,
                           std::uint64_t size_bytes, Nanos created_at,
                           std::uint32_t responder) {
  Message m;
  m.id = id;
  m.kind = kind;
  m.created_at = created_at;
  m.responder = responder;
  m.size_bytes = size_bytes;
  return m;
}

void stamp_publish_time(std::span<std::byte> payload, Nanos publish_ts) {
  if (payload.size() < MessageHeader::kSize) {
    throw Error(Errc::invalid_argument, "payload shorter than message header");
  }
  put_be<std::uint64_t>(payload, 16,
                        static_cast<std::uint64_t>(publish_ts.count()));
}

Message message_from_payload(std::shared_ptr<const Bytes> payload) {
  auto h = decode_header(*payload);
  Message m;
  m.id = h.id;
  m.kind = h.kind;
  m.created_at = h.publish_ts;
  m.responder = h.responder;
  m.size_bytes = payload->size();
  m.payload = std::move(payload);
  return m;
}

Seconds pacing_interval(const WorkloadProfile& profile,
                        std::uint32_t producer_count) {
  if (producer_count < 1) {
    throw Error(Errc::invalid_argument, "producer_count must be >= 1");
  }
  return Seconds{static_cast<double>(profile.payload_bytes) * 8.0 *
                 static_cast<double>(producer_count) / profile.target_rate_bps};
}

}  // namespace streamsim
