#include "kgnn/ps/runtime.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <thread>

#include "kgnn/error.hpp"
#include "kgnn/log.hpp"

namespace kgnn::ps {
namespace {

[[noreturn]] void raise_error(const Frame& reply, std::size_t shard) {
  const auto [code, message] = decode_error(reply.payload);
  const std::string where = "shard " + std::to_string(shard) + ": " + message;
  switch (code) {
    case ErrorCode::kUnknownKey: throw LookupError(where);
    case ErrorCode::kShapeMismatch: throw DimensionError(where);
    case ErrorCode::kAborted: throw ContractError(where);
    default: throw ProtocolError(where);
  }
}

}  // namespace

PsClient::PsClient(const ModelSpec& spec, std::vector<std::unique_ptr<Channel>> shards, bool debug_checksums)
    : spec_(spec), shards_(std::move(shards)), debug_checksums_(debug_checksums) {
  if (shards_.empty()) throw ContractError("PsClient: no shards");
}

std::vector<std::uint8_t> PsClient::call(std::size_t shard, Opcode op, const std::vector<std::uint8_t>& payload,
                                         Opcode expect) {
  const Frame reply = decode_frame(shards_[shard]->call(encode_frame(op, payload)));
  if (reply.op == Opcode::kError) raise_error(reply, shard);
  if (reply.op != expect) throw ProtocolError("shard " + std::to_string(shard) + ": unexpected reply opcode");
  return reply.payload;
}

ParameterSet PsClient::pull(const std::vector<ParamKey>& keys) {
  std::vector<std::vector<ParamKey>> by_shard(shards_.size());
  for (const auto& k : keys) by_shard[shard_of(k, shards_.size())].push_back(k);
  ParameterSet out;
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    if (by_shard[s].empty()) continue;
    const auto values = decode_values(call(s, Opcode::kPull, encode_keys(by_shard[s]), Opcode::kPull));
    if (values.size() != by_shard[s].size()) throw ProtocolError("PULL reply does not cover the request");
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto [key, data] = values[i];
      if (key != by_shard[s][i]) throw ProtocolError("PULL reply out of order");
      if (debug_checksums_) {
        if (data.empty()) throw ProtocolError("missing checksum slot");
        const double expected = data.back();
        data.pop_back();
        if (checksum_of(data) != expected) throw ProtocolError("torn read on " + to_string(key));
      }
      out.emplace(key, Tensor(param_shape(spec_, key.kind), std::move(data)));
    }
  }
  return out;
}

void PsClient::push(const GradientMap& grads) {
  std::vector<KeyedValues> by_shard(shards_.size());
  for (const auto& [key, g] : grads) by_shard[shard_of(key, shards_.size())].emplace_back(key, g.storage());
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    if (by_shard[s].empty()) continue;
    call(s, Opcode::kPush, encode_values(by_shard[s]), Opcode::kPush);
  }
}

std::vector<std::size_t> worker_batches(std::size_t num_batches, std::size_t worker, std::size_t workers) {
  std::vector<std::size_t> out;
  for (std::size_t b = worker; b < num_batches; b += workers) out.push_back(b);
  return out;
}

void worker_loop(std::size_t worker, std::size_t workers, const KnowledgeGraph& g, const ModelSpec& spec,
                 const TrainConfig& cfg, const SamplerConfig& sampler, ParameterAccess& ps, Channel& coordinator) {
  const auto triples = g.triples();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = epoch_batches(triples.size(), cfg.batch_size, cfg.seed, epoch);
    BarrierArrival arrival;
    arrival.worker = static_cast<std::uint32_t>(worker);
    arrival.epoch = epoch;
    for (auto bi : worker_batches(batches.size(), worker, workers)) {
      std::vector<Triple> batch;
      batch.reserve(batches[bi].size());
      for (auto i : batches[bi]) batch.push_back(triples[i]);
      Rng rng = batch_rng(cfg.seed, epoch, bi);
      BatchResult r;
      try {
        r = train_batch(batch, g, spec, sampler, cfg.margin, ps, rng);
      } catch (const NumericError& e) {
        throw TrainingAborted(epoch, bi, "none", e.what());
      }
      if (!std::isfinite(r.loss)) throw TrainingAborted(epoch, bi, max_gradient_key(r.grads), "loss is not finite");
      for (const auto& [key, grad] : r.grads) {
        if (!grad.all_finite()) throw TrainingAborted(epoch, bi, max_gradient_key(r.grads), "gradient is not finite");
      }
      ps.push(r.grads);
      arrival.loss_sum += r.loss;
      arrival.pairs += r.pairs;
      arrival.active_pairs += r.active_pairs;
    }
    const Frame reply = decode_frame(coordinator.call(encode_frame(Opcode::kBarrier, encode_barrier(arrival))));
    if (reply.op == Opcode::kError) {
      throw ContractError("worker " + std::to_string(worker) + " released with error: " +
                          decode_error(reply.payload).second);
    }
    if (reply.op != Opcode::kBarrier) throw ProtocolError("unexpected barrier reply");
  }
}

TrainResult train_distributed(const KnowledgeGraph& g, const ModelSpec& spec, const TrainConfig& cfg,
                              const SamplerConfig& sampler, const RuntimeConfig& runtime, const TrainHooks& hooks) {
  cfg.validate();
  const std::size_t num_shards = runtime.effective_shards();
  const std::size_t workers = runtime.workers;
  const bool tcp = runtime.transport == Transport::kTcp;

  std::vector<std::unique_ptr<ShardServer>> shards;
  for (std::size_t s = 0; s < num_shards; ++s) {
    ShardServer::Options o;
    o.shard_id = s;
    o.num_shards = num_shards;
    o.adam = cfg.adam;
    o.seed = cfg.seed;
    o.debug_checksums = runtime.debug_checksums;
    shards.push_back(std::make_unique<ShardServer>(spec, o));
  }
  std::vector<std::unique_ptr<TcpServer>> shard_servers;
  if (tcp) {
    for (auto& s : shards) shard_servers.push_back(std::make_unique<TcpServer>(*s, Endpoint{"127.0.0.1", 0}));
  }
  auto shard_channels = [&] {
    std::vector<std::unique_ptr<Channel>> out;
    for (std::size_t s = 0; s < num_shards; ++s) {
      if (tcp) {
        out.push_back(std::make_unique<TcpChannel>(Endpoint{"127.0.0.1", shard_servers[s]->port()}));
      } else {
        out.push_back(std::make_unique<InProcessChannel>(*shards[s]));
      }
    }
    return out;
  };

  Coordinator::Options co;
  co.workers = workers;
  co.epochs = cfg.epochs;
  co.out_dir = hooks.out_dir;
  co.keep_checkpoints = cfg.keep_checkpoints;
  co.on_epoch = hooks.on_epoch;
  Coordinator coordinator(co, shard_channels());
  std::unique_ptr<TcpServer> coordinator_server;
  if (tcp) coordinator_server = std::make_unique<TcpServer>(coordinator, Endpoint{"127.0.0.1", 0});
  if (cfg.epochs == 0) coordinator.checkpoint(0);

  std::mutex error_mu;
  std::exception_ptr first_error;
  coordinator.start();
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          PsClient client(spec, shard_channels(), runtime.debug_checksums);
          std::unique_ptr<Channel> coord;
          if (tcp) {
            coord = std::make_unique<TcpChannel>(Endpoint{"127.0.0.1", coordinator_server->port()});
          } else {
            coord = std::make_unique<InProcessChannel>(coordinator);
          }
          worker_loop(w, workers, g, spec, cfg, sampler, client, *coord);
        } catch (...) {
          {
            std::lock_guard lock(error_mu);
            if (!first_error) first_error = std::current_exception();
          }
          try {
            std::rethrow_exception(std::current_exception());
          } catch (const std::exception& e) {
            coordinator.abort("worker " + std::to_string(w) + ": " + e.what());
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  TrainResult result;
  result.reports = coordinator.reports();
  PsClient reader(spec, shard_channels(), false);
  result.params = reader.pull(model_keys(spec));
  return result;
}

namespace {

std::vector<std::unique_ptr<Channel>> endpoint_channels(const RuntimeConfig& runtime) {
  if (runtime.endpoints.size() != runtime.effective_shards()) {
    throw ConfigError("runtime.endpoints", "need one endpoint per shard (" +
                                               std::to_string(runtime.effective_shards()) + ")");
  }
  std::vector<std::unique_ptr<Channel>> out;
  for (const auto& e : runtime.endpoints) out.push_back(std::make_unique<TcpChannel>(parse_endpoint(e)));
  return out;
}

}  // namespace

void serve_shard(const ModelSpec& spec, const TrainConfig& cfg, const RuntimeConfig& runtime, std::size_t shard) {
  const std::size_t num_shards = runtime.effective_shards();
  if (shard >= num_shards || shard >= runtime.endpoints.size()) {
    throw ConfigError("runtime.endpoints", "no endpoint for shard " + std::to_string(shard));
  }
  ShardServer::Options o;
  o.shard_id = shard;
  o.num_shards = num_shards;
  o.adam = cfg.adam;
  o.seed = cfg.seed;
  o.debug_checksums = runtime.debug_checksums;
  ShardServer server(spec, o);
  TcpServer tcp(server, parse_endpoint(runtime.endpoints[shard]));
  spdlog::info("shard {}/{} serving {} keys on port {}", shard, num_shards, server.num_keys(), tcp.port());
  tcp.wait();
  spdlog::info("shard {} shut down", shard);
}

std::vector<EpochReport> serve_coordinator(const TrainConfig& cfg, const RuntimeConfig& runtime,
                                           const std::optional<std::filesystem::path>& out_dir,
                                           const std::function<void(const EpochReport&)>& on_epoch) {
  Coordinator::Options co;
  co.workers = runtime.workers;
  co.epochs = cfg.epochs;
  co.out_dir = out_dir;
  co.keep_checkpoints = cfg.keep_checkpoints;
  co.on_epoch = on_epoch;
  Coordinator coordinator(co, endpoint_channels(runtime));
  if (cfg.epochs == 0) coordinator.checkpoint(0);
  TcpServer tcp(coordinator, parse_endpoint(runtime.coordinator));
  spdlog::info("coordinator waiting for {} workers on port {}", runtime.workers, tcp.port());
  coordinator.start();
  while (!coordinator.finished() && !coordinator.aborted()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  // Let released workers read their final reply before the listener goes away.
  std::this_thread::sleep_for(std::chrono::milliseconds(100));
  coordinator.shutdown_shards();
  tcp.stop();
  if (coordinator.aborted()) throw ContractError("distributed run aborted");
  return coordinator.reports();
}

void serve_worker(const KnowledgeGraph& g, const ModelSpec& spec, const TrainConfig& cfg,
                  const SamplerConfig& sampler, const RuntimeConfig& runtime, std::size_t worker) {
  if (worker >= runtime.workers) throw ConfigError("runtime.workers", "worker index out of range");
  PsClient client(spec, endpoint_channels(runtime), runtime.debug_checksums);
  TcpChannel coordinator(parse_endpoint(runtime.coordinator));
  worker_loop(worker, runtime.workers, g, spec, cfg, sampler, client, coordinator);
  spdlog::info("worker {} finished {} epochs", worker, cfg.epochs);
}

}  // namespace kgnn::ps
