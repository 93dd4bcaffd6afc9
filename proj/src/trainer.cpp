#include "kgnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "kgnn/checkpoint.hpp"
#include "kgnn/decoder.hpp"
#include "kgnn/encoder.hpp"
#include "kgnn/log.hpp"

namespace kgnn {

void adam_apply(AdamSlot& slot, Tensor& value, const Tensor& grad, const AdamConfig& cfg) {
  if (grad.shape() != value.shape()) {
    throw DimensionError("adam: gradient " + shape_string(grad.shape()) + " vs parameter " +
                         shape_string(value.shape()));
  }
  if (slot.m.shape() != value.shape()) {
    slot.m = Tensor::zeros_like(value);
    slot.v = Tensor::zeros_like(value);
    slot.t = 0;
  }
  slot.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(slot.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(slot.t));
  auto m = slot.m.data();
  auto v = slot.v.data();
  auto x = value.data();
  auto g = grad.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    x[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

void apply_update(const ModelSpec& spec, const ParamKey& key, Tensor& value, AdamSlot& slot, const Tensor& grad,
                  const AdamConfig& cfg, std::uint64_t seed) {
  adam_apply(slot, value, grad, cfg);
  apply_constraint(spec, key, value, seed);
}

double margin_loss(double pos_energy, double neg_energy, double margin) {
  return std::max(0.0, pos_energy + margin - neg_energy);
}

void TrainConfig::validate() const {
  if (!(adam.lr > 0.0)) throw ConfigError("train.lr", "must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw ConfigError("train.beta1", "must be in [0, 1)");
  if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw ConfigError("train.beta2", "must be in [0, 1)");
  if (!(adam.eps > 0.0)) throw ConfigError("train.eps", "must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size", "must be positive");
  if (!(margin > 0.0)) throw ConfigError("train.margin", "must be positive");
  if (keep_checkpoints == 0) throw ConfigError("train.keep_checkpoints", "must be positive");
}

ParameterSet LocalStore::pull(const std::vector<ParamKey>& keys) {
  ParameterSet out;
  for (const auto& k : keys) {
    auto it = params_.find(k);
    if (it == params_.end()) throw LookupError("unknown parameter " + to_string(k));
    out.emplace_hint(out.end(), k, it->second);
  }
  return out;
}

void LocalStore::push(const GradientMap& grads) {
  for (const auto& [key, grad] : grads) {
    auto it = params_.find(key);
    if (it == params_.end()) throw LookupError("unknown parameter " + to_string(key));
    apply_update(spec_, key, it->second, adam_[key], grad, adam_cfg_, seed_);
  }
}

std::vector<ParamKey> batch_keys(const ModelSpec& spec, const KnowledgeGraph& g, std::span<const Triple> triples,
                                 const SubGraph* sg) {
  std::set<ParamKey> keys;
  std::vector<RelationId> rels;
  for (const auto& t : triples) {
    rels.push_back(t.relation);
    if (spec.encoder == EncoderKind::kLookup) {
      keys.insert(entity_key(t.head.value));
      keys.insert(entity_key(t.tail.value));
    }
  }
  if (spec.encoder == EncoderKind::kGnn) {
    if (sg == nullptr) throw ContractError("batch_keys: gnn encoder needs a subgraph");
    for (const auto& k : encoder_keys(spec, g, *sg)) keys.insert(k);
  }
  for (const auto& k : decoder_keys(spec, rels)) keys.insert(k);
  return {keys.begin(), keys.end()};
}

Objective margin_objective(const ModelContext& ctx, const KnowledgeGraph& g, std::span<const Triple> triples,
                           std::size_t positives, std::size_t negatives_per_positive, const SubGraph* sg,
                           double margin) {
  const ModelSpec& spec = ctx.spec();
  const std::size_t b = positives;
  const std::size_t n_neg = negatives_per_positive;
  if (b == 0 || n_neg == 0 || triples.size() != b * (1 + n_neg)) {
    throw ContractError("margin_objective: expected positives followed by their corruptions");
  }
  if ((spec.encoder == EncoderKind::kGnn) != (sg != nullptr)) {
    throw ContractError("margin_objective: a subgraph is required exactly for the GNN encoder");
  }
  EncodedBatch enc;
  if (sg) {
    enc = encode(ctx, g, *sg);
  } else {
    std::vector<EntityId> unique;
    std::set<EntityId> seen;
    for (const auto& t : triples) {
      for (auto e : {t.head, t.tail}) {
        if (seen.insert(e).second) unique.push_back(e);
      }
    }
    enc = lookup_encode(ctx, unique);
  }
  std::unordered_map<EntityId, std::size_t> row;
  for (std::size_t i = 0; i < enc.entities.size(); ++i) row.emplace(enc.entities[i], i);

  std::vector<std::size_t> head_rows, tail_rows;
  std::vector<RelationId> rels;
  for (const auto& t : triples) {
    head_rows.push_back(row.at(t.head));
    tail_rows.push_back(row.at(t.tail));
    rels.push_back(t.relation);
  }
  const Var energy = score_rows(ctx, gather_rows(enc.embeddings, head_rows), gather_rows(enc.embeddings, tail_rows),
                                rels);
  const Var column = reshape(energy, {triples.size(), 1});
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < n_neg; ++j) {
      pos_idx.push_back(i);
      neg_idx.push_back(b + i * n_neg + j);
    }
  }
  const std::size_t pairs = pos_idx.size();
  const Var diff = sub(gather_rows(column, pos_idx), gather_rows(column, neg_idx));
  const Var hinges = hinge(add(diff, ctx.tape().constant(Tensor({pairs, 1}, margin))));
  return {sum(hinges), hinges};
}

BatchResult train_batch(std::span<const Triple> batch, const KnowledgeGraph& g, const ModelSpec& spec,
                        const SamplerConfig& sampler, double margin, ParameterAccess& access, Rng& rng) {
  if (batch.empty()) throw ContractError("train_batch: empty batch");
  const std::size_t b = batch.size();
  const std::size_t n_neg = sampler.negatives_per_positive;

  // Positives first, then negatives grouped by positive.
  std::vector<Triple> triples(batch.begin(), batch.end());
  for (const auto& t : batch) {
    for (const auto& c : corrupt(t, g, sampler, rng)) triples.push_back(c.triple);
  }
  std::vector<EntityId> seeds;
  seeds.reserve(2 * triples.size());
  for (const auto& t : triples) {
    seeds.push_back(t.head);
    seeds.push_back(t.tail);
  }

  std::optional<SubGraph> sg;
  if (spec.encoder == EncoderKind::kGnn) {
    sg = sample_subgraph(seeds, g, sampler, rng, sampler.mask_targets ? batch : std::span<const Triple>{});
  }
  const ParameterSet params = access.pull(batch_keys(spec, g, triples, sg ? &*sg : nullptr));

  Tape tape;
  ModelContext ctx(tape, params, spec);
  const Objective obj = margin_objective(ctx, g, triples, b, n_neg, sg ? &*sg : nullptr, margin);
  const Var& loss = obj.loss;
  const Var& hinges = obj.hinges;
  const std::size_t pairs = b * n_neg;

  BatchResult out;
  out.loss = loss.value().item();
  out.pairs = pairs;
  for (double h : hinges.value().storage()) out.active_pairs += h > 0.0 ? 1 : 0;
  if (out.loss > 0.0) out.grads = tape.backward(loss);
  return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_triples, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(num_triples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng({seed, 0xE90Cu, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < num_triples; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(num_triples, i + batch_size)));
  }
  return out;
}

Rng batch_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch) { return make_rng({seed, 0xBA7Cu, epoch, batch}); }

std::string max_gradient_key(const GradientMap& grads) {
  std::string best = "none";
  double best_mag = -1.0;
  for (const auto& [key, g] : grads) {
    for (double x : g.storage()) {
      const double mag = std::isfinite(x) ? std::abs(x) : INFINITY;
      if (mag > best_mag) {
        best_mag = mag;
        best = to_string(key);
      }
    }
  }
  return best;
}

void append_epoch_csv(const std::filesystem::path& path, const EpochReport& report) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (fresh) out << "epoch,loss,seconds,active_pairs\n";
  out << report.epoch << ',' << report.loss << ',' << report.seconds << ',' << report.active_pairs << '\n';
}

namespace {

std::vector<Triple> pick(std::span<const Triple> triples, const std::vector<std::size_t>& idx) {
  std::vector<Triple> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(triples[i]);
  return out;
}

void save_epoch_checkpoint(const std::filesystem::path& dir, std::size_t epoch, const ParameterSet& params,
                           std::size_t keep) {
  const auto path = dir / checkpoint_name(epoch);
  write_checkpoint(path, params);
  publish_checkpoint(dir, path, keep);
}

}  // namespace

TrainResult train_local(const KnowledgeGraph& g, const ModelSpec& spec, const TrainConfig& cfg,
                        const SamplerConfig& sampler, const TrainHooks& hooks, std::optional<ParameterSet> init) {
  cfg.validate();
  LocalStore store(spec, init ? std::move(*init) : initial_parameters(spec, cfg.seed), cfg.adam, cfg.seed);
  TrainResult result;
  if (hooks.out_dir) {
    std::filesystem::create_directories(*hooks.out_dir);
    std::filesystem::remove(*hooks.out_dir / "epochs.csv");
    if (cfg.epochs == 0) save_epoch_checkpoint(*hooks.out_dir, 0, store.params(), cfg.keep_checkpoints);
  }
  const auto triples = g.triples();
  double best_metric = -INFINITY;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::size_t pairs = 0, active = 0;
    const auto batches = epoch_batches(triples.size(), cfg.batch_size, cfg.seed, epoch);
    GradientMap last_grads;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      Rng rng = batch_rng(cfg.seed, epoch, bi);
      const auto batch = pick(triples, batches[bi]);
      BatchResult r;
      try {
        r = train_batch(batch, g, spec, sampler, cfg.margin, store, rng);
      } catch (const NumericError& e) {
        throw TrainingAborted(epoch, bi, max_gradient_key(last_grads), e.what());
      }
      const std::string worst = max_gradient_key(r.grads);
      if (!std::isfinite(r.loss)) throw TrainingAborted(epoch, bi, worst, "loss is not finite");
      for (const auto& [key, grad] : r.grads) {
        if (!grad.all_finite()) throw TrainingAborted(epoch, bi, worst, "gradient is not finite");
      }
      store.push(r.grads);
      loss_sum += r.loss;
      pairs += r.pairs;
      active += r.active_pairs;
      last_grads = std::move(r.grads);
    }
    EpochReport report;
    report.epoch = epoch;
    report.loss = pairs == 0 ? 0.0 : loss_sum / static_cast<double>(pairs);
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.active_pairs = active;
    result.reports.push_back(report);
    if (hooks.out_dir) {
      append_epoch_csv(*hooks.out_dir / "epochs.csv", report);
      save_epoch_checkpoint(*hooks.out_dir, epoch, store.params(), cfg.keep_checkpoints);
    }
    if (hooks.on_epoch) hooks.on_epoch(report);
    if (cfg.patience > 0 && hooks.validate) {
      const double metric = hooks.validate(store.params());
      if (metric > best_metric) {
        best_metric = metric;
        since_best = 0;
      } else if (++since_best >= cfg.patience) {
        spdlog::info("early stop at epoch {} (best validation metric {:.4f})", epoch, best_metric);
        break;
      }
    }
  }
  result.params = std::move(store.params());
  return result;
}

}  // namespace kgnn
