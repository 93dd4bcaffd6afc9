#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "kgnn/config.hpp"
#include "kgnn/ps/coordinator.hpp"
#include "kgnn/ps/shard.hpp"
#include "kgnn/ps/transport.hpp"
#include "kgnn/trainer.hpp"

namespace kgnn::ps {

// Worker-side view of the sharded store: routes keys to shards, reshapes replies
// and turns ERROR frames into exceptions.
class PsClient : public ParameterAccess {
 public:
  PsClient(const ModelSpec& spec, std::vector<std::unique_ptr<Channel>> shards, bool debug_checksums = false);

  ParameterSet pull(const std::vector<ParamKey>& keys) override;
  void push(const GradientMap& grads) override;

  std::size_t num_shards() const { return shards_.size(); }

 private:
  std::vector<std::uint8_t> call(std::size_t shard, Opcode op, const std::vector<std::uint8_t>& payload,
                                 Opcode expect);

  const ModelSpec& spec_;
  std::vector<std::unique_ptr<Channel>> shards_;
  bool debug_checksums_;
};

// Batches of an epoch owned by a worker: round-robin striping of the shuffled list.
std::vector<std::size_t> worker_batches(std::size_t num_batches, std::size_t worker, std::size_t workers);

// Runs every epoch for one worker: train assigned batches against `ps`, then wait
// at the coordinator barrier.
void worker_loop(std::size_t worker, std::size_t workers, const KnowledgeGraph& g, const ModelSpec& spec,
                 const TrainConfig& cfg, const SamplerConfig& sampler, ParameterAccess& ps, Channel& coordinator);

// Shards, coordinator and workers inside this process, over in-process channels or
// loopback TCP.
TrainResult train_distributed(const KnowledgeGraph& g, const ModelSpec& spec, const TrainConfig& cfg,
                              const SamplerConfig& sampler, const RuntimeConfig& runtime,
                              const TrainHooks& hooks = {});

// Separate-process TCP deployment. Shard i listens on runtime.endpoints[i]; the
// coordinator listens on runtime.coordinator and connects to every shard.

// Blocks until a SHUTDOWN frame arrives.
void serve_shard(const ModelSpec& spec, const TrainConfig& cfg, const RuntimeConfig& runtime, std::size_t shard);

// Blocks until every epoch is released or the run aborts, then shuts the shards
// down. Throws TrainingAborted-style errors as ContractError on abort.
std::vector<EpochReport> serve_coordinator(const TrainConfig& cfg, const RuntimeConfig& runtime,
                                           const std::optional<std::filesystem::path>& out_dir,
                                           const std::function<void(const EpochReport&)>& on_epoch = {});

void serve_worker(const KnowledgeGraph& g, const ModelSpec& spec, const TrainConfig& cfg,
                  const SamplerConfig& sampler, const RuntimeConfig& runtime, std::size_t worker);

}  // namespace kgnn::ps
