#include "kgnn/ps/protocol.hpp"

#include "kgnn/error.hpp"

namespace kgnn::ps {
namespace {

bool valid_opcode(std::uint8_t op) {
  return (op >= 0x01 && op <= 0x05) || op == 0x7F;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<std::uint8_t> encode_frame(Opcode op, std::span<const std::uint8_t> payload) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.u8(static_cast<std::uint8_t>(op));
  w.bytes(payload);
  return w.take();
}

std::optional<std::size_t> frame_size(std::span<const std::uint8_t> buffer) {
  if (buffer.size() < 4) return std::nullopt;
  ByteReader r(buffer.first(4));
  const std::uint32_t len = r.u32();
  if (len > kMaxPayload) throw ProtocolError("frame length " + std::to_string(len) + " exceeds limit");
  return kFrameHeader + len;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::uint32_t len = r.u32();
  const std::uint8_t op = r.u8();
  if (!valid_opcode(op)) throw ProtocolError("unknown opcode " + std::to_string(op));
  if (r.remaining() != len) {
    throw ProtocolError("frame length " + std::to_string(len) + " but " + std::to_string(r.remaining()) +
                        " payload bytes");
  }
  auto body = r.bytes(len);
  return {static_cast<Opcode>(op), std::vector<std::uint8_t>(body.begin(), body.end())};
}

void write_key(ByteWriter& w, const ParamKey& key) {
  w.u8(static_cast<std::uint8_t>(key.kind));
  w.u64(key.id);
}

ParamKey read_key(ByteReader& r) {
  const std::uint8_t kind = r.u8();
  auto k = param_kind_from_byte(kind);
  if (!k) throw ProtocolError("unknown parameter kind " + std::to_string(kind));
  return {*k, r.u64()};
}

std::vector<std::uint8_t> encode_keys(std::span<const ParamKey> keys) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(keys.size()));
  for (const auto& k : keys) write_key(w, k);
  return w.take();
}

std::vector<ParamKey> decode_keys(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const std::uint32_t n = r.u32();
  if (static_cast<std::size_t>(n) * 9 != r.remaining()) throw ProtocolError("PULL payload length disagrees with key count");
  std::vector<ParamKey> keys;
  keys.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) keys.push_back(read_key(r));
  return keys;
}

std::vector<std::uint8_t> encode_values(const KeyedValues& values) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(values.size()));
  for (const auto& [key, data] : values) {
    write_key(w, key);
    w.u32(static_cast<std::uint32_t>(data.size()));
    for (double x : data) w.f64(x);
  }
  return w.take();
}

KeyedValues decode_values(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const std::uint32_t n = r.u32();
  KeyedValues out;
  out.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    ParamKey key = read_key(r);
    const std::uint32_t dim = r.u32();
    if (static_cast<std::size_t>(dim) * 8 > r.remaining()) throw ProtocolError("truncated payload");
    std::vector<double> data(dim);
    for (auto& x : data) x = r.f64();
    out.emplace_back(key, std::move(data));
  }
  if (!r.done()) throw ProtocolError("trailing bytes after tensor records");
  return out;
}

std::vector<std::uint8_t> error_frame(ErrorCode code, const std::string& message) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(code));
  w.str(message);
  return encode_frame(Opcode::kError, w.buffer());
}

std::pair<ErrorCode, std::string> decode_error(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const auto code = static_cast<ErrorCode>(r.u8());
  return {code, r.str()};
}

std::vector<std::uint8_t> encode_barrier(const BarrierArrival& b) {
  ByteWriter w;
  w.u32(b.worker);
  w.u64(b.epoch);
  w.f64(b.loss_sum);
  w.u64(b.pairs);
  w.u64(b.active_pairs);
  return w.take();
}

BarrierArrival decode_barrier(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  BarrierArrival b;
  b.worker = r.u32();
  b.epoch = r.u64();
  b.loss_sum = r.f64();
  b.pairs = r.u64();
  b.active_pairs = r.u64();
  if (!r.done()) throw ProtocolError("trailing bytes in BARRIER payload");
  return b;
}

std::vector<std::uint8_t> encode_checkpoint_request(std::uint64_t epoch, const std::string& dir) {
  ByteWriter w;
  w.u64(epoch);
  w.str(dir);
  return w.take();
}

std::pair<std::uint64_t, std::string> decode_checkpoint_request(std::span<const std::uint8_t> payload) {
  ByteReader r(payload);
  const std::uint64_t epoch = r.u64();
  std::string dir = r.str();
  if (!r.done()) throw ProtocolError("trailing bytes in CHECKPOINT payload");
  return {epoch, std::move(dir)};
}

std::size_t shard_of(const ParamKey& key, std::size_t num_shards) {
  if (num_shards == 0) throw ContractError("shard_of: zero shards");
  return static_cast<std::size_t>((splitmix64(static_cast<std::uint64_t>(key.kind)) ^ key.id) % num_shards);
}

}  // namespace kgnn::ps
