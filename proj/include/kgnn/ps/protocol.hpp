#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kgnn/bytes.hpp"
#include "kgnn/params.hpp"

// Wire format, little-endian: frame = [u32 payload_len][u8 opcode][payload].
namespace kgnn::ps {

enum class Opcode : std::uint8_t {
  kPull = 0x01,
  kPush = 0x02,
  kBarrier = 0x03,
  kCheckpoint = 0x04,
  kShutdown = 0x05,
  kError = 0x7F,
};

enum class ErrorCode : std::uint8_t {
  kUnknownKey = 0x01,
  kShapeMismatch = 0x02,
  kBadRequest = 0x03,
  kAborted = 0x04,
};

inline constexpr std::size_t kFrameHeader = 5;
// Upper bound on a single payload; larger length prefixes are rejected as corrupt.
inline constexpr std::uint32_t kMaxPayload = 1u << 30;

struct Frame {
  Opcode op = Opcode::kError;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(Opcode op, std::span<const std::uint8_t> payload);
// Decodes one complete frame; throws ProtocolError on a bad opcode, length or trailing bytes.
Frame decode_frame(std::span<const std::uint8_t> bytes);
// Length of the frame at the start of `buffer`, or nullopt if the header is incomplete.
std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffer);

void write_key(ByteWriter& w, const ParamKey& key);
ParamKey read_key(ByteReader& r);

// PULL payload: [u32 n][n x key].
std::vector<std::uint8_t> encode_keys(std::span<const ParamKey> keys);
std::vector<ParamKey> decode_keys(std::span<const std::uint8_t> payload);

// PULL reply and PUSH payload: [u32 n][n x (key, u32 dim, dim x f64)].
using KeyedValues = std::vector<std::pair<ParamKey, std::vector<double>>>;
std::vector<std::uint8_t> encode_values(const KeyedValues& values);
KeyedValues decode_values(std::span<const std::uint8_t> payload);

// ERROR payload: [u8 code][u32 len][message].
std::vector<std::uint8_t> error_frame(ErrorCode code, const std::string& message);
std::pair<ErrorCode, std::string> decode_error(std::span<const std::uint8_t> payload);

// BARRIER from a worker: [u32 worker][u64 epoch][f64 loss_sum][u64 pairs][u64 active_pairs].
struct BarrierArrival {
  std::uint32_t worker = 0;
  std::uint64_t epoch = 0;
  double loss_sum = 0.0;
  std::uint64_t pairs = 0;
  std::uint64_t active_pairs = 0;
};
std::vector<std::uint8_t> encode_barrier(const BarrierArrival& b);
BarrierArrival decode_barrier(std::span<const std::uint8_t> payload);

// CHECKPOINT request: [u64 epoch][u32 len][directory]. Reply: [u32 records written].
std::vector<std::uint8_t> encode_checkpoint_request(std::uint64_t epoch, const std::string& dir);
std::pair<std::uint64_t, std::string> decode_checkpoint_request(std::span<const std::uint8_t> payload);

// Key -> shard: (mix(kind) xor id) mod num_shards, identical on every platform.
std::size_t shard_of(const ParamKey& key, std::size_t num_shards);

}  // namespace kgnn::ps
