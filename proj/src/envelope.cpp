#include "defog/envelope.hpp"

#include <bit>
#include <cstring>

#include "defog/error.hpp"

namespace defog {

static_assert(std::endian::native == std::endian::little, "wire codec assumes a little-endian host");

const char* to_string(MsgKind kind) {
  switch (kind) {
    case MsgKind::kData: return "data";
    case MsgKind::kNegotiate: return "negotiate";
    case MsgKind::kWindowPut: return "window_put";
    case MsgKind::kWindowGetRequest: return "window_get_request";
    case MsgKind::kWindowGetReply: return "window_get_reply";
    case MsgKind::kWindowAccumulate: return "window_accumulate";
    case MsgKind::kMutexAcquire: return "mutex_acquire";
    case MsgKind::kMutexRelease: return "mutex_release";
    case MsgKind::kBarrier: return "barrier";
    case MsgKind::kShutdown: return "shutdown";
    case MsgKind::kNegotiateReply: return "negotiate_reply";
    case MsgKind::kMutexGrant: return "mutex_grant";
    case MsgKind::kDirect: return "direct";
  }
  return "?";
}

bool carries_tensor(MsgKind kind) {
  return kind == MsgKind::kData || kind == MsgKind::kWindowPut ||
         kind == MsgKind::kWindowAccumulate || kind == MsgKind::kWindowGetReply ||
         kind == MsgKind::kDirect;
}

Envelope make_envelope(MsgKind kind, int src, int dst, std::uint32_t tag, std::string name,
                       std::vector<double> payload) {
  Envelope e;
  e.kind = kind;
  e.src = static_cast<std::uint32_t>(src);
  e.dst = static_cast<std::uint32_t>(dst);
  e.round_tag = tag;
  e.name = std::move(name);
  e.dims = {static_cast<std::int64_t>(payload.size())};
  e.payload = std::move(payload);
  return e;
}

Envelope make_envelope(MsgKind kind, int src, int dst, std::uint32_t tag, std::string name,
                       const Tensor& t) {
  Envelope e = make_envelope(kind, src, dst, tag, std::move(name), t.values());
  e.dims = t.shape();
  return e;
}

namespace {

class Writer {
 public:
  explicit Writer(std::size_t reserve) { buf_.reserve(reserve); }
  template <class T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  std::vector<std::uint8_t>& buf() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> s) : s_(s) {}
  template <class T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void copy(void* dst, std::size_t n) {
    need(n);
    if (n) std::memcpy(dst, s_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return s_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw TransportError("truncated frame");
  }
  std::span<const std::uint8_t> s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_frame(const Envelope& env) {
  if (env.name.size() > 0xFFFF) throw TransportError("op name longer than 65535 bytes");
  if (env.dims.size() > 0xFF) throw TransportError("too many dimensions");
  std::int64_t volume = 1;
  for (auto d : env.dims) {
    if (d < 0 || d > 0xFFFFFFFFLL) throw TransportError("dimension out of range");
    volume *= d;
  }
  if (env.dims.empty()) volume = 1;
  if (static_cast<std::size_t>(volume) != env.payload.size()) {
    throw TransportError("payload size does not match dims");
  }
  const std::size_t body = 1 + 4 + 4 + 4 + 2 + env.name.size() + 1 + 1 + 4 * env.dims.size() +
                           env.payload_bytes();
  if (body >= kMaxFrameBytes) throw TransportError("frame too large");
  Writer w(kFramePrefix + body);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(body));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(env.kind));
  w.put<std::uint32_t>(env.round_tag);
  w.put<std::uint32_t>(env.src);
  w.put<std::uint32_t>(env.dst);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(env.name.size()));
  w.bytes(env.name.data(), env.name.size());
  w.put<std::uint8_t>(kDtypeF64);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(env.dims.size()));
  for (auto d : env.dims) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  w.bytes(env.payload.data(), env.payload_bytes());
  return w.take();
}

std::uint32_t frame_body_length(std::span<const std::uint8_t, kFramePrefix> prefix) {
  std::uint32_t n;
  std::memcpy(&n, prefix.data(), sizeof n);
  return n;
}

Envelope decode_frame_body(std::span<const std::uint8_t> body) {
  Reader r(body);
  Envelope e;
  auto kind = r.get<std::uint8_t>();
  if (kind > kMaxMsgKind) throw TransportError("unknown message kind " + std::to_string(kind));
  e.kind = static_cast<MsgKind>(kind);
  e.round_tag = r.get<std::uint32_t>();
  e.src = r.get<std::uint32_t>();
  e.dst = r.get<std::uint32_t>();
  auto name_len = r.get<std::uint16_t>();
  e.name.resize(name_len);
  r.copy(e.name.data(), name_len);
  auto dtype = r.get<std::uint8_t>();
  if (dtype != kDtypeF64) throw TransportError("unsupported dtype " + std::to_string(dtype));
  auto ndim = r.get<std::uint8_t>();
  e.dims.resize(ndim);
  std::uint64_t volume = 1;
  for (auto& d : e.dims) {
    d = r.get<std::uint32_t>();
    volume *= static_cast<std::uint64_t>(d);
  }
  if (volume * sizeof(double) != r.remaining()) {
    throw TransportError("payload length does not match dims");
  }
  e.payload.resize(volume);
  r.copy(e.payload.data(), volume * sizeof(double));
  return e;
}

Envelope decode_frame(std::span<const std::uint8_t> frame) {
  if (frame.size() < kFramePrefix) throw TransportError("truncated frame");
  auto n = frame_body_length(frame.first<kFramePrefix>());
  if (frame.size() - kFramePrefix != n) throw TransportError("frame length mismatch");
  return decode_frame_body(frame.subspan(kFramePrefix));
}

}  // namespace defog
