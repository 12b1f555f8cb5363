#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "defog/tensor.hpp"

namespace defog {

enum class MsgKind : std::uint8_t {
  kData = 0,
  kNegotiate = 1,
  kWindowPut = 2,
  kWindowGetRequest = 3,
  kWindowGetReply = 4,
  kWindowAccumulate = 5,
  kMutexAcquire = 6,
  kMutexRelease = 7,
  kBarrier = 8,
  kShutdown = 9,
  kNegotiateReply = 10,
  kMutexGrant = 11,
  kDirect = 12,  // application point-to-point message
};

inline constexpr std::uint8_t kMaxMsgKind = 12;

const char* to_string(MsgKind kind);

// Kinds whose payload is a user tensor (costed by size on the simulated fabric
// and counted in the byte counters). All other kinds carry small control vectors.
bool carries_tensor(MsgKind kind);

// One message on the fabric. Payloads are always f64; control messages encode
// their fields as a flat vector. dims may contain zeros for empty control vectors.
struct Envelope {
  MsgKind kind = MsgKind::kData;
  std::uint32_t round_tag = 0;
  std::uint32_t src = 0;
  std::uint32_t dst = 0;
  std::string name;
  Shape dims;
  std::vector<double> payload;

  std::size_t payload_bytes() const { return payload.size() * sizeof(double); }
  bool operator==(const Envelope&) const = default;
};

Envelope make_envelope(MsgKind kind, int src, int dst, std::uint32_t tag, std::string name,
                       std::vector<double> payload);
Envelope make_envelope(MsgKind kind, int src, int dst, std::uint32_t tag, std::string name,
                       const Tensor& t);

// Frame layout (little endian):
//   u32 length of everything after this field
//   u8 kind | u32 round_tag | u32 src | u32 dst
//   u16 name length | name bytes (UTF-8)
//   u8 dtype (1 = f64) | u8 ndim | ndim x u32 dims
//   payload: product(dims) x f64
inline constexpr std::uint8_t kDtypeF64 = 1;
inline constexpr std::size_t kFramePrefix = 4;
inline constexpr std::size_t kMaxFrameBytes = std::size_t{1} << 31;

std::vector<std::uint8_t> encode_frame(const Envelope& env);

// Decodes a complete frame (including its length prefix). Throws TransportError
// on any malformed input.
Envelope decode_frame(std::span<const std::uint8_t> frame);

// Reads the body length from a 4-byte prefix.
std::uint32_t frame_body_length(std::span<const std::uint8_t, kFramePrefix> prefix);

// Decodes a frame body (everything after the length prefix).
Envelope decode_frame_body(std::span<const std::uint8_t> body);

}  // namespace defog
