// Command-line front end: prepare, train, eval, sweep-hops, sweep-workers, serve.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kgnn/checkpoint.hpp"
#include "kgnn/config.hpp"
#include "kgnn/error.hpp"
#include "kgnn/log.hpp"
#include "kgnn/ps/runtime.hpp"
#include "kgnn/runner.hpp"

namespace fs = std::filesystem;
using namespace kgnn;

namespace {

struct CommonFlags {
  fs::path config;
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_mode = false) {
  cmd->add_option("--config", f.config, "run configuration file")->required();
  cmd->add_option("--out", f.out, "output directory (overrides output.dir)");
  cmd->add_option("--seed", f.seed, "training seed (overrides train.seed)");
  if (with_mode) cmd->add_option("--mode", f.mode, "ranking mode: raw or filtered");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = load_config(f.config);
  if (f.out) cfg.out_dir = *f.out;
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.mode) cfg.eval_modes = {parse_rank_mode(*f.mode)};
  cfg.validate();
  return cfg;
}

void print_epoch(const EpochReport& r) {
  std::printf("epoch %zu loss %.6f seconds %.3f active_pairs %zu\n", r.epoch, r.loss, r.seconds,
              static_cast<std::size_t>(r.active_pairs));
  std::fflush(stdout);
}

void print_eval(const EvalReport& report) {
  for (const auto& r : report.rankings) {
    std::printf("%s queries %zu HR@1 %.4f HR@3 %.4f HR@10 %.4f mean_rank %.2f\n", std::string(to_string(r.mode)).c_str(),
                r.queries, r.hr(1), r.hr(3), r.hr(10), r.both.mean_rank);
  }
  std::printf("classification auc %.4f positives %zu negatives %zu\n", report.classification.auc,
              report.classification.positives, report.classification.negatives);
}

void print_sweep(const SweepReport& report) {
  for (const auto& p : report.points) {
    std::printf("%s %zu hr10 %.4f epoch_seconds %.3f\n", report.axis.c_str(), p.setting, p.hr10, p.epoch_seconds);
  }
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const std::string item = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError(key, "expected a comma-separated list of positive integers, got '" + text + "'");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Knowledge-graph embedding with GNN encoders and a parameter-server trainer"};
  app.require_subcommand(1);

  fs::path prepare_dir;
  auto* prepare = app.add_subcommand("prepare", "parse TSV splits into vocab files and a binary graph cache");
  prepare->add_option("data_dir", prepare_dir, "dataset directory with train/valid/test.tsv")->required();

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "train a model and write checkpoints plus epochs.csv");
  add_common(train, train_flags);

  CommonFlags eval_flags;
  std::optional<fs::path> checkpoint;
  auto* eval = app.add_subcommand("eval", "link prediction and triplet classification on a checkpoint");
  add_common(eval, eval_flags, true);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file or directory (default: the output directory)");

  CommonFlags hops_flags;
  std::string hops_list = "1,2,3,4";
  auto* sweep_h = app.add_subcommand("sweep-hops", "train and evaluate once per hop count");
  add_common(sweep_h, hops_flags);
  sweep_h->add_option("--hops", hops_list, "comma-separated hop counts");

  CommonFlags workers_flags;
  std::string workers_list = "1,2,4,8";
  auto* sweep_w = app.add_subcommand("sweep-workers", "train and evaluate once per worker count");
  add_common(sweep_w, workers_flags);
  sweep_w->add_option("--workers", workers_list, "comma-separated worker counts");

  CommonFlags serve_flags;
  std::string role;
  std::size_t index = 0;
  auto* serve = app.add_subcommand("serve", "run one process of a TCP deployment");
  serve->add_option("role", role, "shard, coordinator or worker")
      ->required()
      ->check(CLI::IsMember({"shard", "coordinator", "worker"}));
  add_common(serve, serve_flags);
  serve->add_option("--index", index, "shard or worker index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  init_logging();

  if (prepare->parsed()) {
    const auto r = prepare_dataset(prepare_dir);
    if (r.up_to_date) {
      std::printf("up-to-date: %zu entities, %zu relations, %zu triples\n", r.entities, r.relations, r.triples);
    } else {
      std::printf("prepared: %zu entities, %zu relations, %zu triples\n", r.entities, r.relations, r.triples);
    }
    return 0;
  }

  if (train->parsed()) {
    const RunConfig cfg = resolve(train_flags);
    const KnowledgeGraph g = load_graph(cfg);
    const ModelSpec spec = build_spec(cfg, g);
    TrainHooks hooks;
    hooks.on_epoch = print_epoch;
    const auto result = run_training(cfg, g, spec, cfg.out_dir, hooks);
    std::printf("trained %zu epochs; checkpoint %s\n", result.reports.size(),
                resolve_checkpoint(cfg.out_dir).string().c_str());
    return 0;
  }

  if (eval->parsed()) {
    const RunConfig cfg = resolve(eval_flags);
    const KnowledgeGraph g = load_graph(cfg);
    const ModelSpec spec = build_spec(cfg, g);
    const ParameterSet params = read_checkpoint(resolve_checkpoint(checkpoint.value_or(cfg.out_dir)));
    print_eval(run_evaluation(cfg, g, spec, params, cfg.out_dir));
    return 0;
  }

  if (sweep_h->parsed()) {
    const RunConfig cfg = resolve(hops_flags);
    const auto hops = parse_list("sweep.hops", hops_list);
    print_sweep(sweep_hops(cfg, load_graph(cfg), hops, cfg.out_dir));
    return 0;
  }

  if (sweep_w->parsed()) {
    const RunConfig cfg = resolve(workers_flags);
    const auto workers = parse_list("sweep.workers", workers_list);
    print_sweep(sweep_workers(cfg, load_graph(cfg), workers, cfg.out_dir));
    return 0;
  }

  RunConfig cfg = resolve(serve_flags);
  cfg.runtime.mode = RuntimeMode::kDistributed;
  cfg.runtime.transport = Transport::kTcp;
  const KnowledgeGraph g = load_graph(cfg);
  const ModelSpec spec = build_spec(cfg, g);
  if (role == "shard") {
    ps::serve_shard(spec, cfg.train, cfg.runtime, index);
  } else if (role == "coordinator") {
    fs::create_directories(cfg.out_dir);
    save_config(cfg.out_dir / "effective.conf", cfg);
    ps::serve_coordinator(cfg.train, cfg.runtime, cfg.out_dir, print_epoch);
  } else {
    ps::serve_worker(g, spec, cfg.train, cfg.sampler, cfg.runtime, index);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "checkpoint error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
