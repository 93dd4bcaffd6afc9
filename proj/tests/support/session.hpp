#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "kgnn/bytes.hpp"
#include "kgnn/checkpoint.hpp"
#include "kgnn/ps/coordinator.hpp"
#include "kgnn/ps/runtime.hpp"
#include "kgnn/ps/shard.hpp"
#include "kgnn/ps/transport.hpp"

namespace kgnn::testing {

using Bytes = std::vector<std::uint8_t>;

// One request/reply pair; target is a shard index, or kCoordinator.
struct Exchange {
  static constexpr std::int32_t kCoordinator = -1;
  std::int32_t target = 0;
  Bytes request;
  Bytes reply;
};

struct Session {
  std::mutex mu;
  std::vector<Exchange> exchanges;
};

class RecordingChannel : public ps::Channel {
 public:
  RecordingChannel(std::unique_ptr<ps::Channel> inner, std::int32_t target, Session& session)
      : inner_(std::move(inner)), target_(target), session_(session) {}

  Bytes call(std::span<const std::uint8_t> frame) override {
    Bytes reply = inner_->call(frame);
    std::lock_guard lock(session_.mu);
    session_.exchanges.push_back({target_, Bytes(frame.begin(), frame.end()), reply});
    return reply;
  }

 private:
  std::unique_ptr<ps::Channel> inner_;
  std::int32_t target_;
  Session& session_;
};

inline ps::ShardServer::Options shard_options(const TrainConfig& cfg, std::size_t shard, std::size_t shards) {
  ps::ShardServer::Options o;
  o.shard_id = shard;
  o.num_shards = shards;
  o.adam = cfg.adam;
  o.seed = cfg.seed;
  return o;
}

// Runs a one-worker in-process training and records every frame exchanged with
// the shards (worker PULL/PUSH and coordinator CHECKPOINT) and the coordinator
// (BARRIER). Returns the final parameters.
inline ParameterSet record_session(const KnowledgeGraph& g, const ModelSpec& spec, const TrainConfig& cfg,
                                   const SamplerConfig& sampler, std::size_t num_shards,
                                   const std::filesystem::path& out_dir, Session& session) {
  std::vector<std::unique_ptr<ps::ShardServer>> shards;
  for (std::size_t s = 0; s < num_shards; ++s) {
    shards.push_back(std::make_unique<ps::ShardServer>(spec, shard_options(cfg, s, num_shards)));
  }
  auto channels = [&] {
    std::vector<std::unique_ptr<ps::Channel>> out;
    for (std::size_t s = 0; s < num_shards; ++s) {
      out.push_back(std::make_unique<RecordingChannel>(std::make_unique<ps::InProcessChannel>(*shards[s]),
                                                       static_cast<std::int32_t>(s), session));
    }
    return out;
  };
  ps::Coordinator::Options co;
  co.workers = 1;
  co.epochs = cfg.epochs;
  co.out_dir = out_dir;
  ps::Coordinator coordinator(co, channels());
  coordinator.start();
  ps::PsClient client(spec, channels());
  RecordingChannel coord(std::make_unique<ps::InProcessChannel>(coordinator), Exchange::kCoordinator, session);
  ps::worker_loop(0, 1, g, spec, cfg, sampler, client, coord);
  ParameterSet merged;
  for (const auto& s : shards) merged.merge(s->snapshot());
  return merged;
}

inline Bytes encode_session(const std::vector<Exchange>& exchanges) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(exchanges.size()));
  for (const auto& e : exchanges) {
    w.u32(static_cast<std::uint32_t>(e.target));
    w.u32(static_cast<std::uint32_t>(e.request.size()));
    w.bytes(e.request);
    w.u32(static_cast<std::uint32_t>(e.reply.size()));
    w.bytes(e.reply);
  }
  return w.take();
}

inline std::vector<Exchange> decode_session(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::vector<Exchange> out(r.u32());
  for (auto& e : out) {
    e.target = static_cast<std::int32_t>(r.u32());
    auto req = r.bytes(r.u32());
    e.request.assign(req.begin(), req.end());
    auto rep = r.bytes(r.u32());
    e.reply.assign(rep.begin(), rep.end());
  }
  return out;
}

struct ReplayResult {
  std::size_t frames = 0;
  std::size_t mismatches = 0;
  std::size_t first_mismatch = 0;
};

// Feeds every recorded request, in order, to fresh shards and a fresh coordinator
// and compares each reply byte for byte.
inline ReplayResult replay_session(const std::vector<Exchange>& exchanges, const ModelSpec& spec,
                                   const TrainConfig& cfg, std::size_t num_shards) {
  std::vector<std::unique_ptr<ps::ShardServer>> shards;
  for (std::size_t s = 0; s < num_shards; ++s) {
    shards.push_back(std::make_unique<ps::ShardServer>(spec, shard_options(cfg, s, num_shards)));
  }
  // The replayed coordinator writes nothing; its checkpoint frames are replayed
  // against the shards from the recording instead.
  std::vector<std::unique_ptr<ps::ShardServer>> idle;
  std::vector<std::unique_ptr<ps::Channel>> idle_channels;
  for (std::size_t s = 0; s < num_shards; ++s) {
    idle.push_back(std::make_unique<ps::ShardServer>(spec, shard_options(cfg, s, num_shards)));
    idle_channels.push_back(std::make_unique<ps::InProcessChannel>(*idle.back()));
  }
  ps::Coordinator::Options co;
  co.workers = 1;
  co.epochs = cfg.epochs;
  ps::Coordinator coordinator(co, std::move(idle_channels));
  coordinator.start();
  ReplayResult out;
  for (const auto& e : exchanges) {
    const Bytes reply = e.target == Exchange::kCoordinator ? coordinator.handle(e.request)
                                                           : shards.at(static_cast<std::size_t>(e.target))->handle(e.request);
    if (reply != e.reply && out.mismatches++ == 0) out.first_mismatch = out.frames;
    ++out.frames;
  }
  return out;
}

}  // namespace kgnn::testing
