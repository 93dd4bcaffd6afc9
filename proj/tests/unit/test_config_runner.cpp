#include <doctest.h>

#include "fixtures.hpp"
#include "kgnn/config.hpp"
#include "kgnn/error.hpp"
#include "kgnn/runner.hpp"
#include "kgnn/synth.hpp"

using namespace kgnn;
using namespace kgnn::testing;

namespace {

std::string field_of(const std::string& text) {
  try {
    parse_config(text, "/base");
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("rendering and parsing round-trip every key") {
    const RunConfig cfg = parse_config(
        "data.dir = data\n"
        "encoder.type = lookup\n"
        "encoder.hops = 3\n"
        "encoder.dim = 12\n"
        "decoder.kind = transr\n"
        "decoder.norm = l1\n"
        "sampler.fanout = 4,3,2\n"
        "train.lr = 0.125\n"
        "train.epochs = 7\n"
        "runtime.mode = distributed\n"
        "runtime.workers = 4\n"
        "output.dir = runs/x  # trailing comment\n",
        "/base");
    CHECK(cfg.data_dir == "/base/data");
    CHECK(cfg.out_dir == "/base/runs/x");
    CHECK(cfg.encoder == EncoderKind::kLookup);
    CHECK(cfg.sampler.fanout_per_hop == std::vector<std::size_t>{4, 3, 2});
    CHECK(cfg.train.adam.lr == 0.125);
    CHECK(cfg.runtime.effective_shards() == 2);
    const std::string text = render_config(cfg);
    CHECK(render_config(parse_config(text, "/elsewhere")) == text);
  }

  TEST_CASE("unknown keys and bad values name the offending key") {
    CHECK(field_of("train.epochz = 3\n") == "train.epochz");
    CHECK(field_of("train.epochs = three\n") == "train.epochs");
    CHECK(field_of("decoder.kind = rotate\n") == "decoder.kind");
    CHECK(field_of("data.dir = d\neval.split = holdout\n") == "eval.split");
    CHECK(field_of("just text\n") != "");
  }

  TEST_CASE("hop count and fan-out must agree") {
    CHECK_THROWS_AS(parse_config("encoder.hops = 2\nsampler.fanout = 4\n", "/b").validate(), ConfigError);
  }
}

TEST_SUITE("runner") {
  TEST_CASE("prepare writes a cache once and notices edits") {
    TempDir dir("prepare");
    write_text(dir / "train.tsv", "a\tr\tb\nb\tr\tc\n");
    write_text(dir / "test.tsv", "a\tr\tc\n");
    const PrepareResult first = prepare_dataset(dir.path());
    CHECK_FALSE(first.up_to_date);
    CHECK(first.entities == 3);
    CHECK(first.triples == 3);
    CHECK(std::filesystem::exists(dir / kGraphCacheName));
    CHECK(read_text(dir / "entities.vocab").find("a") != std::string::npos);
    CHECK(prepare_dataset(dir.path()).up_to_date);
    write_text(dir / "train.tsv", "a\tr\tb\nb\tr\tc\nc\tr\td\n");
    CHECK_FALSE(prepare_dataset(dir.path()).up_to_date);
    CHECK(prepare_dataset(dir.path()).entities == 4);
  }

  TEST_CASE("loading prefers a fresh cache and survives a corrupt one") {
    TempDir dir("loadcache");
    write_text(dir / "train.tsv", "a\tr\tb\nb\tr\tc\n");
    prepare_dataset(dir.path());
    RunConfig cfg;
    cfg.data_dir = dir.path();
    CHECK(load_graph(cfg).num_entities() == 3);
    write_text(dir / kGraphCacheName, "garbage");
    CHECK(load_graph(cfg).num_entities() == 3);
  }

  TEST_CASE("attribute models need an attributes file") {
    RunConfig cfg;
    cfg.enc.use_attributes = true;
    CHECK_THROWS_AS(build_spec(cfg, toy_graph()), ConfigError);
  }

  TEST_CASE("synthetic generators are deterministic and keep held-out triples out of training") {
    CompositionalOptions o;
    o.clusters = 5;
    o.seed = 3;
    const SyntheticKg a = compositional_kg(o);
    const SyntheticKg b = compositional_kg(o);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK_FALSE(a.test.empty());
    for (const auto& t : a.test) {
      CHECK(std::find(a.train.begin(), a.train.end(), t) == a.train.end());
      CHECK(t.relation == "likes");
    }
    AttributeOptions ao;
    ao.entities = 50;
    ao.clusters = 5;
    const SyntheticKg attr = attribute_kg(ao);
    CHECK(attr.attributes.size() == 50);
    TempDir dir("synth");
    write_synthetic(dir.path(), attr);
    const PrepareResult p = prepare_dataset(dir.path());
    CHECK(p.entities == 50);
  }
}
