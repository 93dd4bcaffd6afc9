// Writes the synthetic benchmark graphs as dataset directories.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>

#include "kgnn/error.hpp"
#include "kgnn/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Synthetic knowledge-graph generator"};
  app.require_subcommand(1);
  std::filesystem::path out;
  std::uint64_t seed = 1;
  auto common = [&](CLI::App* cmd) {
    cmd->add_option("out", out, "output dataset directory")->required();
    cmd->add_option("--seed", seed, "generator seed");
  };
  kgnn::CompositionalOptions comp;
  auto* c = app.add_subcommand("compositional", "hub/mid/leaf graph with a two-hop rule");
  common(c);
  c->add_option("--clusters", comp.clusters);
  c->add_option("--mids-per-cluster", comp.mids_per_cluster);
  c->add_option("--leaves-per-mid", comp.leaves_per_mid);
  c->add_option("--answers-per-cluster", comp.answers_per_cluster);
  c->add_option("--distractors", comp.distractors_per_leaf);
  c->add_option("--heldout", comp.heldout_fraction);
  kgnn::ClusteredOptions clus;
  auto* k = app.add_subcommand("clustered", "cluster-permutation graph of a given triple count");
  common(k);
  k->add_option("--entities", clus.entities);
  k->add_option("--relations", clus.relations);
  k->add_option("--clusters", clus.clusters);
  k->add_option("--triples", clus.triples);
  k->add_option("--noise", clus.noise);
  kgnn::AttributeOptions attr;
  auto* a = app.add_subcommand("attributes", "attributed graph with held-out entities");
  common(a);
  a->add_option("--entities", attr.entities);
  a->add_option("--clusters", attr.clusters);
  a->add_option("--dim", attr.attribute_dim);
  a->add_option("--noise", attr.attribute_noise);
  a->add_option("--heldout", attr.heldout_fraction);
  CLI11_PARSE(app, argc, argv);
  try {
    kgnn::SyntheticKg kg;
    if (c->parsed()) {
      comp.seed = seed;
      kg = kgnn::compositional_kg(comp);
    } else if (k->parsed()) {
      clus.seed = seed;
      kg = kgnn::clustered_kg(clus);
    } else {
      attr.seed = seed;
      kg = kgnn::attribute_kg(attr);
    }
    kgnn::write_synthetic(out, kg);
    std::printf("wrote %zu train, %zu valid, %zu test triples to %s\n", kg.train.size(), kg.valid.size(),
                kg.test.size(), out.string().c_str());
  } catch (const kgnn::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
