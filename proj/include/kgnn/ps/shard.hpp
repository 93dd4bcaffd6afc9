#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "kgnn/model.hpp"
#include "kgnn/ps/protocol.hpp"
#include "kgnn/trainer.hpp"

namespace kgnn::ps {

// Anything that answers one request frame with one reply frame.
class FrameHandler {
 public:
  virtual ~FrameHandler() = default;
  virtual std::vector<std::uint8_t> handle(std::span<const std::uint8_t> frame) = 0;
  // True once a SHUTDOWN has been answered.
  virtual bool stopped() const = 0;
  // A TCP peer closed its connection.
  virtual void on_disconnect() {}
};

// One shard of the parameter store. Owns the keys with shard_of(key) == id, their
// Adam state, and applies pushed gradients server-side. Each key has its own mutex;
// distinct keys update concurrently.
class ShardServer : public FrameHandler {
 public:
  struct Options {
    std::size_t shard_id = 0;
    std::size_t num_shards = 1;
    AdamConfig adam;
    std::uint64_t seed = 1;
    // Appends a checksum slot (sum of the values at write time) to every pulled tensor.
    bool debug_checksums = false;
  };

  ShardServer(const ModelSpec& spec, Options opts);
  // Starts from explicit values instead of the seeded initialisation (keys not owned are ignored).
  ShardServer(const ModelSpec& spec, Options opts, const ParameterSet& init);

  std::vector<std::uint8_t> handle(std::span<const std::uint8_t> frame) override;
  bool stopped() const override { return stopped_.load(); }

  ParameterSet snapshot() const;
  std::size_t num_keys() const { return entries_.size(); }
  const Options& options() const { return opts_; }

 private:
  struct Entry {
    mutable std::mutex mu;
    Tensor value;
    AdamSlot adam;
    double checksum = 0.0;
  };

  std::vector<std::uint8_t> on_pull(std::span<const std::uint8_t> payload);
  std::vector<std::uint8_t> on_push(std::span<const std::uint8_t> payload);
  std::vector<std::uint8_t> on_checkpoint(std::span<const std::uint8_t> payload);
  void insert(const ParamKey& key, Tensor value);

  const ModelSpec& spec_;
  Options opts_;
  // Built once in the constructor; only entry contents change afterwards.
  std::unordered_map<ParamKey, std::unique_ptr<Entry>, ParamKeyHash> entries_;
  std::atomic<bool> stopped_{false};
};

double checksum_of(std::span<const double> values);

}  // namespace kgnn::ps
