#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgnn/error.hpp"
#include "kgnn/kg_store.hpp"
#include "kgnn/model.hpp"
#include "kgnn/sampler.hpp"

namespace kgnn {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamSlot {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
};

// Sparse Adam: a key's moments and step counter exist once it has received a gradient.
using AdamState = std::map<ParamKey, AdamSlot>;

// One bias-corrected Adam step on `value`; the slot's counter advances by one.
void adam_apply(AdamSlot& slot, Tensor& value, const Tensor& grad, const AdamConfig& cfg);

// Adam step followed by the decoder constraint for that key. Shared by the local
// store and the parameter-server shards so both runtimes apply identical updates.
void apply_update(const ModelSpec& spec, const ParamKey& key, Tensor& value, AdamSlot& slot, const Tensor& grad,
                  const AdamConfig& cfg, std::uint64_t seed);

// hinge(pos + margin - neg)
double margin_loss(double pos_energy, double neg_energy, double margin);

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 256;
  double margin = 1.0;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  // Early stopping on a validation metric (higher is better); 0 disables it.
  std::size_t patience = 0;
  std::size_t keep_checkpoints = 2;

  void validate() const;
};

// How the trainer reads and updates parameters: in-process map or remote shards.
class ParameterAccess {
 public:
  virtual ~ParameterAccess() = default;
  virtual ParameterSet pull(const std::vector<ParamKey>& keys) = 0;
  virtual void push(const GradientMap& grads) = 0;
};

class LocalStore : public ParameterAccess {
 public:
  LocalStore(const ModelSpec& spec, ParameterSet params, AdamConfig adam, std::uint64_t seed)
      : spec_(spec), params_(std::move(params)), adam_cfg_(adam), seed_(seed) {}

  ParameterSet pull(const std::vector<ParamKey>& keys) override;
  void push(const GradientMap& grads) override;

  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }
  const AdamState& adam() const { return adam_; }

 private:
  const ModelSpec& spec_;
  ParameterSet params_;
  AdamState adam_;
  AdamConfig adam_cfg_;
  std::uint64_t seed_;
};

struct BatchResult {
  double loss = 0.0;           // summed over pairs
  std::size_t pairs = 0;       // positive/negative pairs scored
  std::size_t active_pairs = 0;  // pairs with positive hinge
  GradientMap grads;
};

struct Objective {
  Var loss;    // summed hinge
  Var hinges;  // [pairs x 1]
};

// Summed margin loss for `triples` laid out as `positives` true triples followed
// by `negatives_per_positive` corruptions of each, grouped by positive. `sg` is
// the shared subgraph for the GNN encoder and null for lookup.
Objective margin_objective(const ModelContext& ctx, const KnowledgeGraph& g, std::span<const Triple> triples,
                           std::size_t positives, std::size_t negatives_per_positive, const SubGraph* sg,
                           double margin);

// Corrupts every positive, encodes heads, tails and corrupted entities on one
// shared subgraph, scores all pairs and back-propagates the summed hinge loss.
BatchResult train_batch(std::span<const Triple> batch, const KnowledgeGraph& g, const ModelSpec& spec,
                        const SamplerConfig& sampler, double margin, ParameterAccess& access, Rng& rng);

// All parameter keys train_batch will pull for the given positives and negatives.
std::vector<ParamKey> batch_keys(const ModelSpec& spec, const KnowledgeGraph& g, std::span<const Triple> triples,
                                 const SubGraph* sg);

struct EpochReport {
  std::size_t epoch = 0;
  double loss = 0.0;  // mean per pair
  double seconds = 0.0;
  std::size_t active_pairs = 0;
};

// Raised when a batch produces a non-finite loss or gradient.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(std::size_t epoch, std::size_t batch, std::string key, const std::string& cause)
      : NumericError("non-finite value at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) +
                     " (largest gradient: " + key + "): " + cause),
        epoch_(epoch),
        batch_(batch),
        key_(std::move(key)) {}

  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }
  const std::string& key() const { return key_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
  std::string key_;
};

// Deterministic per-epoch order of the train split and per-batch RNG streams.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t num_triples, std::size_t batch_size,
                                                    std::uint64_t seed, std::size_t epoch);
Rng batch_rng(std::uint64_t seed, std::size_t epoch, std::size_t batch);

// Key of the entry with the largest absolute value (non-finite counts as largest).
std::string max_gradient_key(const GradientMap& grads);

struct TrainHooks {
  // Directory for checkpoints and epochs.csv; nothing is written when empty.
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const EpochReport&)> on_epoch;
  // Validation metric for early stopping (higher is better).
  std::function<double(const ParameterSet&)> validate;
};

struct TrainResult {
  ParameterSet params;
  std::vector<EpochReport> reports;
};

void append_epoch_csv(const std::filesystem::path& path, const EpochReport& report);

// Single-threaded training against an in-process store.
TrainResult train_local(const KnowledgeGraph& g, const ModelSpec& spec, const TrainConfig& cfg,
                        const SamplerConfig& sampler, const TrainHooks& hooks = {},
                        std::optional<ParameterSet> init = std::nullopt);

}  // namespace kgnn
