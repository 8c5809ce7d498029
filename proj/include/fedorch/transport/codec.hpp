#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "fedorch/learner.hpp"
#include "fedorch/model/parameter_vector.hpp"
#include "fedorch/policy.hpp"

namespace fedorch::wire {

// Frame layout (all integers little-endian):
//
//   offset  size  field
//        0     4  magic "FEDR"
//        4     1  version (1)
//        5     1  kind
//        6     4  round (u32)
//       10     2  learner_index (u16)
//       12     8  payload length (u64)
//       20     n  payload
//     20+n     4  CRC32 (IEEE) of bytes [0, 20+n)
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 20;
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::size_t kDefaultMaxPayload = std::size_t{64} << 20;
inline constexpr std::uint8_t kMagic[4] = {'F', 'E', 'D', 'R'};

enum class Kind : std::uint8_t {
  Register = 1,
  Assign = 2,
  Update = 3,
  Community = 4,
  Shutdown = 5,
  Error = 6,
};

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::Register: return "REGISTER";
    case Kind::Assign: return "ASSIGN";
    case Kind::Update: return "UPDATE";
    case Kind::Community: return "COMMUNITY";
    case Kind::Shutdown: return "SHUTDOWN";
    case Kind::Error: return "ERROR";
  }
  return "?";
}

struct Envelope {
  std::uint8_t version = kVersion;
  Kind kind = Kind::Shutdown;
  std::uint32_t round = 0;
  std::uint16_t learner_index = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const Envelope&) const = default;
};

enum class ErrorKind {
  truncated,
  bad_magic,
  unsupported_version,
  oversize,
  crc_mismatch,
  bad_kind,
  trailing_bytes,
  malformed_payload,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::truncated: return "truncated frame";
    case ErrorKind::bad_magic: return "bad magic";
    case ErrorKind::unsupported_version: return "unsupported version";
    case ErrorKind::oversize: return "payload exceeds limit";
    case ErrorKind::crc_mismatch: return "CRC mismatch";
    case ErrorKind::bad_kind: return "unknown message kind";
    case ErrorKind::trailing_bytes: return "trailing bytes after frame";
    case ErrorKind::malformed_payload: return "malformed payload";
  }
  return "?";
}

class WireError : public std::runtime_error {
 public:
  WireError(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) +
                           (detail.empty() ? "" : ": " + detail)),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  constexpr std::size_t kChunk = std::size_t{1} << 30;
  for (std::size_t off = 0; off < bytes.size(); off += kChunk) {
    const std::size_t len = std::min(kChunk, bytes.size() - off);
    crc = ::crc32(crc, bytes.data() + off, static_cast<uInt>(len));
  }
  return static_cast<std::uint32_t>(crc);
}

// Little-endian append-only writer.
class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void str16(std::string_view s) {
    if (s.size() > 0xFFFF) throw std::length_error("string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  std::vector<std::uint8_t>& buffer() noexcept { return buf_; }
  std::vector<std::uint8_t> take() noexcept { return std::move(buf_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked little-endian reader; overruns raise malformed_payload.
class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str16() {
    const std::size_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  void expect_end() const {
    if (remaining() != 0) {
      throw WireError(ErrorKind::malformed_payload,
                      std::to_string(remaining()) + " unread payload bytes");
    }
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw WireError(ErrorKind::malformed_payload, "payload ends early");
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(data_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

inline bool valid_kind(std::uint8_t k) { return k >= 1 && k <= 6; }

inline std::vector<std::uint8_t> encode(const Envelope& e,
                                        std::size_t max_payload = kDefaultMaxPayload) {
  if (e.version != kVersion) {
    throw WireError(ErrorKind::unsupported_version, "cannot encode version " +
                                                        std::to_string(e.version));
  }
  if (e.payload.size() > max_payload) {
    throw WireError(ErrorKind::oversize, std::to_string(e.payload.size()) + " bytes");
  }
  Writer w;
  w.buffer().reserve(kHeaderSize + e.payload.size() + kCrcSize);
  w.bytes(kMagic);
  w.u8(e.version);
  w.u8(static_cast<std::uint8_t>(e.kind));
  w.u32(e.round);
  w.u16(e.learner_index);
  w.u64(e.payload.size());
  w.bytes(e.payload);
  w.u32(crc32(w.buffer()));
  return w.take();
}

/// Validates a 20-byte header and returns the full frame length it announces.
inline std::size_t frame_size_from_header(std::span<const std::uint8_t> header,
                                          std::size_t max_payload = kDefaultMaxPayload) {
  if (header.size() < kHeaderSize) {
    throw WireError(ErrorKind::truncated, std::to_string(header.size()) + " header bytes");
  }
  if (std::memcmp(header.data(), kMagic, 4) != 0) throw WireError(ErrorKind::bad_magic, "");
  if (header[4] != kVersion) {
    throw WireError(ErrorKind::unsupported_version, "version " + std::to_string(header[4]));
  }
  Reader r(header.subspan(12, 8));
  const std::uint64_t len = r.u64();
  if (len > max_payload) {
    throw WireError(ErrorKind::oversize, std::to_string(len) + " bytes announced");
  }
  return kHeaderSize + static_cast<std::size_t>(len) + kCrcSize;
}

/// Decodes exactly one frame. Checks, in order: header length, magic,
/// version, length bound, total length, CRC, kind.
inline Envelope decode(std::span<const std::uint8_t> frame,
                       std::size_t max_payload = kDefaultMaxPayload) {
  const std::size_t total = frame_size_from_header(frame, max_payload);
  if (frame.size() < total) {
    throw WireError(ErrorKind::truncated, std::to_string(frame.size()) + " of " +
                                              std::to_string(total) + " bytes");
  }
  if (frame.size() > total) {
    throw WireError(ErrorKind::trailing_bytes, std::to_string(frame.size() - total));
  }
  const std::size_t body = total - kCrcSize;
  Reader crc_reader(frame.subspan(body, kCrcSize));
  if (crc_reader.u32() != crc32(frame.first(body))) {
    throw WireError(ErrorKind::crc_mismatch, "");
  }
  Reader r(frame.first(kHeaderSize));
  Envelope e;
  for (int i = 0; i < 4; ++i) r.u8();
  e.version = r.u8();
  const std::uint8_t kind = r.u8();
  if (!valid_kind(kind)) throw WireError(ErrorKind::bad_kind, std::to_string(kind));
  e.kind = static_cast<Kind>(kind);
  e.round = r.u32();
  e.learner_index = r.u16();
  e.payload.assign(frame.begin() + kHeaderSize, frame.begin() + static_cast<std::ptrdiff_t>(body));
  return e;
}

// ---------------------------------------------------------------------------
// Payloads

// ParamWire: u16 segment count; per segment u16 name length, UTF-8 name,
// u64 element count, elements as f64. Shapes are not transmitted; decoded
// segments are one-dimensional.
inline void write_params(Writer& w, const ParameterVector& p) {
  if (p.layout().size() > 0xFFFF) throw std::length_error("too many parameter segments");
  w.u16(static_cast<std::uint16_t>(p.layout().size()));
  std::size_t offset = 0;
  for (const auto& seg : p.layout()) {
    w.str16(seg.name);
    w.u64(seg.size());
    for (std::size_t i = 0; i < seg.size(); ++i) w.f64(p[offset + i]);
    offset += seg.size();
  }
}

inline ParameterVector read_params(Reader& r) {
  const std::size_t segments = r.u16();
  Layout layout;
  std::vector<double> values;
  for (std::size_t s = 0; s < segments; ++s) {
    std::string name = r.str16();
    const std::uint64_t count = r.u64();
    if (count > r.remaining() / 8) {
      throw WireError(ErrorKind::malformed_payload, "segment '" + name + "' overruns payload");
    }
    for (std::uint64_t i = 0; i < count; ++i) {
      const double v = r.f64();
      if (!std::isfinite(v)) {
        throw WireError(ErrorKind::malformed_payload, "non-finite parameter in '" + name + "'");
      }
      values.push_back(v);
    }
    layout.push_back({std::move(name), {static_cast<std::size_t>(count)}});
  }
  return ParameterVector(std::move(layout), std::move(values));
}

inline std::vector<std::uint8_t> params_payload(const ParameterVector& p) {
  Writer w;
  write_params(w, p);
  return w.take();
}

inline ParameterVector parse_params(std::span<const std::uint8_t> payload) {
  Reader r(payload);
  auto p = read_params(r);
  r.expect_end();
  return p;
}

// REGISTER: u64 num_examples, u64 batch_size, f64 batch_time.
inline Envelope make_register(const LearnerProfile& p) {
  Writer w;
  w.u64(p.num_examples);
  w.u64(p.batch_size);
  w.f64(p.batch_time);
  return {kVersion, Kind::Register, 0, static_cast<std::uint16_t>(p.learner_index), w.take()};
}

inline LearnerProfile parse_register(const Envelope& e) {
  Reader r(e.payload);
  LearnerProfile p;
  p.learner_index = e.learner_index;
  p.num_examples = r.u64();
  p.batch_size = r.u64();
  p.batch_time = r.f64();
  r.expect_end();
  return p;
}

// ASSIGN: u64 num_batches, f64 learning_rate, u64 batch_size, u64 seed,
// ParamWire community model.
inline Envelope make_assign(const TaskAssignment& a) {
  Writer w;
  w.u64(a.num_batches);
  w.f64(a.hyperparams.learning_rate);
  w.u64(a.hyperparams.batch_size);
  w.u64(a.hyperparams.seed);
  write_params(w, a.community_params);
  return {kVersion, Kind::Assign, a.round, static_cast<std::uint16_t>(a.learner_index), w.take()};
}

inline TaskAssignment parse_assign(const Envelope& e) {
  Reader r(e.payload);
  TaskAssignment a;
  a.round = e.round;
  a.learner_index = e.learner_index;
  a.num_batches = r.u64();
  a.hyperparams.learning_rate = r.f64();
  a.hyperparams.batch_size = r.u64();
  a.hyperparams.seed = r.u64();
  a.community_params = read_params(r);
  r.expect_end();
  return a;
}

// UPDATE: u64 num_examples, f64 observed_batch_time, f64 busy_seconds,
// u64 batches_executed, ParamWire local model.
inline Envelope make_update(const LocalUpdate& u) {
  Writer w;
  w.u64(u.num_examples);
  w.f64(u.observed_batch_time);
  w.f64(u.busy_seconds);
  w.u64(u.batches_executed);
  write_params(w, u.params);
  return {kVersion, Kind::Update, u.round, static_cast<std::uint16_t>(u.learner_index), w.take()};
}

inline LocalUpdate parse_update(const Envelope& e) {
  Reader r(e.payload);
  LocalUpdate u;
  u.round = e.round;
  u.learner_index = e.learner_index;
  u.num_examples = r.u64();
  u.observed_batch_time = r.f64();
  u.busy_seconds = r.f64();
  u.batches_executed = r.u64();
  u.params = read_params(r);
  r.expect_end();
  return u;
}

inline Envelope make_error(std::uint32_t round, std::uint16_t learner, std::string_view message) {
  return {kVersion, Kind::Error, round, learner,
          std::vector<std::uint8_t>(message.begin(), message.end())};
}

inline std::string parse_error(const Envelope& e) {
  return std::string(e.payload.begin(), e.payload.end());
}

}  // namespace fedorch::wire
