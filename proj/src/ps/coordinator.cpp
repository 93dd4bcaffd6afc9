#include "kgnn/ps/coordinator.hpp"

#include <fstream>

#include "kgnn/checkpoint.hpp"
#include "kgnn/error.hpp"
#include "kgnn/log.hpp"

namespace kgnn::ps {

Coordinator::Coordinator(Options opts, std::vector<std::unique_ptr<Channel>> shards)
    : opts_(std::move(opts)), shards_(std::move(shards)) {
  if (opts_.workers == 0) throw ConfigError("runtime.workers", "must be positive");
  if (opts_.out_dir) {
    std::filesystem::create_directories(*opts_.out_dir);
    std::filesystem::remove(*opts_.out_dir / "epochs.csv");
  }
}

void Coordinator::start() {
  std::lock_guard lock(mu_);
  epoch_start_ = std::chrono::steady_clock::now();
}

bool Coordinator::stopped() const {
  std::lock_guard lock(mu_);
  return stopped_;
}

bool Coordinator::finished() const {
  std::lock_guard lock(mu_);
  return epoch_ > opts_.epochs;
}

bool Coordinator::aborted() const {
  std::lock_guard lock(mu_);
  return abort_reason_.has_value();
}

std::vector<EpochReport> Coordinator::reports() const {
  std::lock_guard lock(mu_);
  return reports_;
}

std::vector<std::string> Coordinator::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<std::uint8_t> Coordinator::handle(std::span<const std::uint8_t> bytes) {
  Frame frame;
  try {
    frame = decode_frame(bytes);
  } catch (const ProtocolError& e) {
    return error_frame(ErrorCode::kBadRequest, e.what());
  }
  if (frame.op == Opcode::kShutdown) {
    std::lock_guard lock(mu_);
    stopped_ = true;
    cv_.notify_all();
    return encode_frame(Opcode::kShutdown, {});
  }
  if (frame.op != Opcode::kBarrier) return error_frame(ErrorCode::kBadRequest, "coordinator accepts BARRIER only");
  BarrierArrival b;
  try {
    b = decode_barrier(frame.payload);
  } catch (const ProtocolError& e) {
    return error_frame(ErrorCode::kBadRequest, e.what());
  }

  std::unique_lock lock(mu_);
  if (abort_reason_) return error_frame(ErrorCode::kAborted, *abort_reason_);
  if (b.epoch != epoch_ || b.worker >= opts_.workers) {
    return error_frame(ErrorCode::kBadRequest, "worker " + std::to_string(b.worker) + " reported epoch " +
                                                   std::to_string(b.epoch) + " during epoch " +
                                                   std::to_string(epoch_));
  }
  events_.push_back("arrive " + std::to_string(b.worker) + " " + std::to_string(b.epoch));
  loss_sum_ += b.loss_sum;
  pairs_ += b.pairs;
  active_ += b.active_pairs;
  if (++arrived_ == opts_.workers) {
    EpochReport report;
    report.epoch = epoch_;
    report.loss = pairs_ == 0 ? 0.0 : loss_sum_ / static_cast<double>(pairs_);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start_).count();
    report.active_pairs = active_;
    reports_.push_back(report);
    try {
      if (opts_.out_dir) append_epoch_csv(*opts_.out_dir / "epochs.csv", report);
      checkpoint(epoch_);
    } catch (const std::exception& e) {
      abort_reason_ = std::string("checkpoint failed: ") + e.what();
      cv_.notify_all();
      return error_frame(ErrorCode::kAborted, *abort_reason_);
    }
    if (opts_.on_epoch) opts_.on_epoch(report);
    events_.push_back("release " + std::to_string(epoch_));
    ++epoch_;
    arrived_ = 0;
    loss_sum_ = 0.0;
    pairs_ = active_ = 0;
    epoch_start_ = std::chrono::steady_clock::now();
    cv_.notify_all();
  } else {
    cv_.wait(lock, [&] { return epoch_ > b.epoch || abort_reason_.has_value(); });
    if (abort_reason_) return error_frame(ErrorCode::kAborted, *abort_reason_);
  }
  ByteWriter w;
  w.u64(b.epoch);
  return encode_frame(Opcode::kBarrier, w.buffer());
}

void Coordinator::checkpoint(std::size_t epoch) {
  if (!opts_.out_dir) return;
  const auto parts = *opts_.out_dir / "parts";
  const auto request = encode_frame(Opcode::kCheckpoint, encode_checkpoint_request(epoch, parts.string()));
  ParameterSet merged;
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    const Frame reply = decode_frame(shards_[s]->call(request));
    if (reply.op != Opcode::kCheckpoint) {
      throw CheckpointError("shard " + std::to_string(s) + " failed to dump: " +
                            (reply.op == Opcode::kError ? decode_error(reply.payload).second : "unexpected reply"));
    }
    const auto part = parts / ("shard-" + std::to_string(s) + "-epoch-" + std::to_string(epoch) + ".part");
    for (auto& [key, value] : read_checkpoint(part)) merged.emplace(key, std::move(value));
    std::filesystem::remove(part);
  }
  const auto path = *opts_.out_dir / checkpoint_name(epoch);
  write_checkpoint(path, merged);
  publish_checkpoint(*opts_.out_dir, path, opts_.keep_checkpoints);
}

void Coordinator::abort(const std::string& reason) {
  std::lock_guard lock(mu_);
  if (abort_reason_) return;
  abort_reason_ = reason;
  spdlog::error("run aborted: {}", reason);
  if (opts_.out_dir && std::filesystem::exists(*opts_.out_dir / "latest")) {
    std::filesystem::copy_file(*opts_.out_dir / "latest", *opts_.out_dir / "latest-good",
                               std::filesystem::copy_options::overwrite_existing);
  }
  cv_.notify_all();
}

void Coordinator::on_disconnect() {
  bool running = false;
  {
    std::lock_guard lock(mu_);
    running = epoch_ <= opts_.epochs && !stopped_;
  }
  if (running) abort("a worker disconnected before the run finished");
}

void Coordinator::shutdown_shards() {
  const auto frame = encode_frame(Opcode::kShutdown, {});
  for (auto& shard : shards_) {
    try {
      shard->call(frame);
    } catch (const std::exception& e) {
      spdlog::warn("shutdown: {}", e.what());
    }
  }
}

}  // namespace kgnn::ps
