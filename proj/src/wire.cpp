#include "dmloc/wire.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include <zlib.h>

namespace dmloc {

namespace {

void put_u16(std::vector<std::uint8_t> &out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void put_f32(std::vector<std::uint8_t> &out, double v) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | static_cast<std::uint32_t>(b[off + 1]) << 8 |
         static_cast<std::uint32_t>(b[off + 2]) << 16 | static_cast<std::uint32_t>(b[off + 3]) << 24;
}

float get_f32(std::span<const std::uint8_t> b, std::size_t off) {
  return std::bit_cast<float>(get_u32(b, off));
}

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace

const char *to_string(WireError e) {
  switch (e) {
    case WireError::kTruncated:
      return "truncated frame";
    case WireError::kBadMagic:
      return "bad magic";
    case WireError::kUnsupportedVersion:
      return "unsupported version";
    case WireError::kBadCrc:
      return "CRC mismatch";
    case WireError::kLengthMismatch:
      return "length mismatch";
  }
  return "unknown wire error";
}

std::vector<std::uint8_t> encode_message(const ChainMessage &msg) {
  const ParticleCloud &cloud = msg.payload;
  const std::size_t n = cloud.size();
  std::vector<std::uint8_t> out;
  out.reserve(encoded_size(n));
  put_u32(out, kWireMagic);
  put_u16(out, kWireVersion);
  put_u16(out, msg.panel_id);
  put_u32(out, msg.time_index);
  put_u32(out, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const AgentState &s = cloud.states[i];
    put_f32(out, s.p.x);
    put_f32(out, s.p.y);
    put_f32(out, s.v.x);
    put_f32(out, s.v.y);
    put_f32(out, std::exp(cloud.log_weights[i]));
  }
  put_u32(out, crc32_of(out));
  return out;
}

ChainMessage decode_message(std::span<const std::uint8_t> bytes) {
  const std::size_t size = bytes.size();
  const std::size_t min_size = kWireHeaderBytes + kWireCrcBytes;
  if (size < min_size || (size - min_size) % kWireRecordBytes != 0)
    throw WireFormatError(WireError::kTruncated,
                          "truncated frame (" + std::to_string(size) + " bytes)");

  const std::uint32_t stored_crc = get_u32(bytes, size - kWireCrcBytes);
  if (crc32_of(bytes.first(size - kWireCrcBytes)) != stored_crc)
    throw WireFormatError(WireError::kBadCrc, "CRC mismatch");

  if (get_u32(bytes, 0) != kWireMagic) throw WireFormatError(WireError::kBadMagic, "bad magic");
  const std::uint16_t version = get_u16(bytes, 4);
  if (version != kWireVersion)
    throw WireFormatError(WireError::kUnsupportedVersion,
                          "unsupported version " + std::to_string(version));

  ChainMessage msg;
  msg.panel_id = get_u16(bytes, 6);
  msg.time_index = get_u32(bytes, 8);
  const std::uint32_t n = get_u32(bytes, 12);
  if (encoded_size(n) != size)
    throw WireFormatError(WireError::kLengthMismatch,
                          "header declares " + std::to_string(n) + " particles but frame has " +
                              std::to_string(size) + " bytes");

  ParticleCloud &cloud = msg.payload;
  cloud.states.resize(n);
  cloud.log_weights.resize(n);
  cloud.time_index = static_cast<int>(msg.time_index);
  cloud.origin_panel = msg.panel_id;
  cloud.role = MessageRole::kGamma;
  double sum = 0.0;
  std::vector<double> w(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t off = kWireHeaderBytes + kWireRecordBytes * i;
    AgentState &s = cloud.states[i];
    s.p = {get_f32(bytes, off), get_f32(bytes, off + 4)};
    s.v = {get_f32(bytes, off + 8), get_f32(bytes, off + 12)};
    w[i] = get_f32(bytes, off + 16);
    if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
      throw ProtocolError("frame carries a negative or non-finite weight");
    sum += w[i];
  }
  if (n > 0 && !(sum > 0.0)) throw ProtocolError("frame carries all-zero weights");
  // Always renormalize in double precision; float32 weights drift by up to ~1e-7.
  for (std::uint32_t i = 0; i < n; ++i) cloud.log_weights[i] = std::log(w[i] / sum);
  return msg;
}

ParticleCloud quantize(const ParticleCloud &cloud, std::uint16_t panel_id) {
  // Same arithmetic as decode_message(encode_message(...)) without the byte
  // buffer; the wire tests pin the two paths to bitwise equality.
  const std::size_t n = cloud.size();
  ParticleCloud out;
  out.states.resize(n);
  out.log_weights.resize(n);
  out.time_index = cloud.time_index;
  out.origin_panel = panel_id;
  out.role = cloud.role;
  std::vector<double> w(n);
  double sum = 0.0;
  auto f32 = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (std::size_t i = 0; i < n; ++i) {
    const AgentState &s = cloud.states[i];
    out.states[i].p = {f32(s.p.x), f32(s.p.y)};
    out.states[i].v = {f32(s.v.x), f32(s.v.y)};
    w[i] = f32(std::exp(cloud.log_weights[i]));
    if (!(w[i] >= 0.0) || !std::isfinite(w[i]))
      throw ProtocolError("frame carries a negative or non-finite weight");
    sum += w[i];
  }
  if (n > 0 && !(sum > 0.0)) throw ProtocolError("frame carries all-zero weights");
  for (std::size_t i = 0; i < n; ++i) out.log_weights[i] = std::log(w[i] / sum);
  return out;
}

}  // namespace dmloc
