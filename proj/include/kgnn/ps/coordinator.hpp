#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kgnn/ps/transport.hpp"
#include "kgnn/trainer.hpp"

namespace kgnn::ps {

// Epoch barrier and checkpoint trigger. Workers send BARRIER after their last
// batch of an epoch; the final arrival closes the epoch (report, checkpoint) and
// releases everyone.
class Coordinator : public FrameHandler {
 public:
  struct Options {
    std::size_t workers = 1;
    std::size_t epochs = 0;
    std::optional<std::filesystem::path> out_dir;
    std::size_t keep_checkpoints = 2;
    std::function<void(const EpochReport&)> on_epoch;
  };

  Coordinator(Options opts, std::vector<std::unique_ptr<Channel>> shards);

  std::vector<std::uint8_t> handle(std::span<const std::uint8_t> frame) override;
  bool stopped() const override;
  void on_disconnect() override;

  // Resets the epoch clock (call when workers start).
  void start();
  // Merges shard dumps into checkpoint-epoch-N.kgnn under out_dir (no-op without one).
  void checkpoint(std::size_t epoch);
  // Releases waiting workers with an error and marks the last completed checkpoint good.
  void abort(const std::string& reason);
  // Sends SHUTDOWN to every shard.
  void shutdown_shards();

  bool finished() const;
  bool aborted() const;
  std::vector<EpochReport> reports() const;
  // "arrive <worker> <epoch>" and "release <epoch>" in the order they happened.
  std::vector<std::string> events() const;

 private:
  Options opts_;
  std::vector<std::unique_ptr<Channel>> shards_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::size_t epoch_ = 1;
  std::size_t arrived_ = 0;
  double loss_sum_ = 0.0;
  std::uint64_t pairs_ = 0;
  std::uint64_t active_ = 0;
  std::optional<std::string> abort_reason_;
  bool stopped_ = false;
  std::chrono::steady_clock::time_point epoch_start_ = std::chrono::steady_clock::now();
  std::vector<EpochReport> reports_;
  std::vector<std::string> events_;
};

}  // namespace kgnn::ps
