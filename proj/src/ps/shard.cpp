#include "kgnn/ps/shard.hpp"

#include <algorithm>
#include <filesystem>

#include "kgnn/checkpoint.hpp"
#include "kgnn/error.hpp"
#include "kgnn/log.hpp"

namespace kgnn::ps {

double checksum_of(std::span<const double> values) {
  double acc = 0.0;
  for (double x : values) acc += x;
  return acc;
}

ShardServer::ShardServer(const ModelSpec& spec, Options opts) : spec_(spec), opts_(opts) {
  for (const auto& key : model_keys(spec)) {
    if (shard_of(key, opts_.num_shards) == opts_.shard_id) insert(key, initial_value(spec, key, opts_.seed));
  }
}

ShardServer::ShardServer(const ModelSpec& spec, Options opts, const ParameterSet& init) : spec_(spec), opts_(opts) {
  for (const auto& [key, value] : init) {
    if (shard_of(key, opts_.num_shards) == opts_.shard_id) insert(key, value);
  }
}

void ShardServer::insert(const ParamKey& key, Tensor value) {
  auto e = std::make_unique<Entry>();
  e->checksum = checksum_of(value.data());
  e->value = std::move(value);
  entries_.emplace(key, std::move(e));
}

ParameterSet ShardServer::snapshot() const {
  ParameterSet out;
  for (const auto& [key, e] : entries_) {
    std::lock_guard lock(e->mu);
    out.emplace(key, e->value);
  }
  return out;
}

std::vector<std::uint8_t> ShardServer::handle(std::span<const std::uint8_t> bytes) {
  Frame frame;
  try {
    frame = decode_frame(bytes);
  } catch (const ProtocolError& e) {
    return error_frame(ErrorCode::kBadRequest, e.what());
  }
  try {
    switch (frame.op) {
      case Opcode::kPull: return on_pull(frame.payload);
      case Opcode::kPush: return on_push(frame.payload);
      case Opcode::kBarrier:
        // Requests on one connection are answered in order, so an empty reply
        // means every earlier push from that client has been applied.
        return encode_frame(Opcode::kBarrier, {});
      case Opcode::kCheckpoint: return on_checkpoint(frame.payload);
      case Opcode::kShutdown:
        stopped_.store(true);
        return encode_frame(Opcode::kShutdown, {});
      case Opcode::kError: return error_frame(ErrorCode::kBadRequest, "ERROR is not a request");
    }
  } catch (const ProtocolError& e) {
    return error_frame(ErrorCode::kBadRequest, e.what());
  }
  return error_frame(ErrorCode::kBadRequest, "unhandled opcode");
}

std::vector<std::uint8_t> ShardServer::on_pull(std::span<const std::uint8_t> payload) {
  const auto keys = decode_keys(payload);
  KeyedValues values;
  values.reserve(keys.size());
  for (const auto& key : keys) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return error_frame(ErrorCode::kUnknownKey, "unknown key " + to_string(key));
    Entry& e = *it->second;
    std::vector<double> data;
    double checksum = 0.0;
    {
      std::lock_guard lock(e.mu);
      data = e.value.storage();
      checksum = e.checksum;
    }
    if (opts_.debug_checksums) data.push_back(checksum);
    values.emplace_back(key, std::move(data));
  }
  return encode_frame(Opcode::kPull, encode_values(values));
}

std::vector<std::uint8_t> ShardServer::on_push(std::span<const std::uint8_t> payload) {
  const auto grads = decode_values(payload);
  // Validate the whole request before touching any key.
  for (const auto& [key, data] : grads) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return error_frame(ErrorCode::kUnknownKey, "unknown key " + to_string(key));
    if (data.size() != it->second->value.size()) {
      return error_frame(ErrorCode::kShapeMismatch, "key " + to_string(key) + " holds " +
                                                        std::to_string(it->second->value.size()) + " values, got " +
                                                        std::to_string(data.size()));
    }
  }
  for (const auto& [key, data] : grads) {
    Entry& e = *entries_.at(key);
    std::lock_guard lock(e.mu);
    const Tensor grad(e.value.shape(), data);
    apply_update(spec_, key, e.value, e.adam, grad, opts_.adam, opts_.seed);
    e.checksum = checksum_of(e.value.data());
  }
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(grads.size()));
  return encode_frame(Opcode::kPush, w.buffer());
}

std::vector<std::uint8_t> ShardServer::on_checkpoint(std::span<const std::uint8_t> payload) {
  const auto [epoch, dir] = decode_checkpoint_request(payload);
  const ParameterSet snap = snapshot();
  std::filesystem::create_directories(dir);
  const auto path = std::filesystem::path(dir) /
                    ("shard-" + std::to_string(opts_.shard_id) + "-epoch-" + std::to_string(epoch) + ".part");
  write_checkpoint(path, snap);
  spdlog::debug("shard {} wrote {} keys for epoch {}", opts_.shard_id, snap.size(), epoch);
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(snap.size()));
  return encode_frame(Opcode::kCheckpoint, w.buffer());
}

}  // namespace kgnn::ps
