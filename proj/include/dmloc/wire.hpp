#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dmloc/spa.hpp"

namespace dmloc {

/// A gamma message travelling from one panel to the next.
struct ChainMessage {
  std::uint32_t time_index = 0;
  std::uint16_t panel_id = 0;  // sender; 0 denotes the collector
  ParticleCloud payload;
};

inline constexpr std::uint32_t kWireMagic = 0x444D424C;
inline constexpr std::uint16_t kWireVersion = 1;
inline constexpr std::size_t kWireHeaderBytes = 16;
inline constexpr std::size_t kWireRecordBytes = 20;
inline constexpr std::size_t kWireCrcBytes = 4;

enum class WireError { kTruncated, kBadMagic, kUnsupportedVersion, kBadCrc, kLengthMismatch };

const char *to_string(WireError e);

class WireFormatError : public ProtocolError {
 public:
  WireFormatError(WireError code, const std::string &what) : ProtocolError(what), code_(code) {}
  WireError code() const { return code_; }

 private:
  WireError code_;
};

/// 16 + 20 N + 4 bytes.
constexpr std::size_t encoded_size(std::size_t n_particles) {
  return kWireHeaderBytes + kWireRecordBytes * n_particles + kWireCrcBytes;
}

/// Little-endian frame: magic u32, version u16, panel_id u16, time_index u32,
/// n u32, n records of float32 (px, py, vx, vy, weight), CRC-32 u32 of all
/// preceding bytes. Weights are written normalized in the linear domain.
std::vector<std::uint8_t> encode_message(const ChainMessage &msg);

/// Inverse of encode_message. The CRC is checked before the header fields, so
/// any corrupted byte in a full-length frame reports kBadCrc; a frame whose
/// length cannot be 20 + 20 N reports kTruncated.
ChainMessage decode_message(std::span<const std::uint8_t> bytes);

/// Round trip through the wire encoding (float32 quantization). Applied at
/// every panel boundary regardless of transport.
ParticleCloud quantize(const ParticleCloud &cloud, std::uint16_t panel_id = 0);

}  // namespace dmloc
