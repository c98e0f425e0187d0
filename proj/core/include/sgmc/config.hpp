#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgmc/corpus.hpp"

namespace sgmc {

// One flat run configuration shared by all CLI commands. Defaults come from a
// named profile; any key in the config file overrides the profile value.
struct RunConfig {
  std::string profile = "desk";

  // corpus source: either a container file or a synthetic spec
  std::string corpus_path;
  SyntheticSpec synthetic;

  // model
  std::string encoder_preset = "tiny";  // "paper" | "tiny"
  std::vector<std::size_t> projector_hidden = {64, 128, 256};
  std::string pooling = "max";  // max | avg | min
  std::vector<std::size_t> classifier_hidden = {512, 256, 128};
  double dropout_rate = 0.5;

  // pre-training
  long pretrain_epochs = 300;
  std::size_t clips_per_iteration = 4;  // P
  std::size_t samples_per_group = 2;    // Q
  double tau = 0.1;
  double pretrain_lr = 1e-3;
  long checkpoint_every = 50;
  std::string variant = "complete";

  // split
  double split_ratios[3] = {0.7, 0.15, 0.15};

  // fine-tuning
  long finetune_epochs = 30;
  std::size_t finetune_batch = 64;
  double finetune_lr = 1e-3;
  int finetune_runs = 5;
  int labels_per_class = -1;  // -1: use all labels

  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";

  std::size_t pretrain_batchsize() const { return 2 * clips_per_iteration * samples_per_group; }
  std::string digest_text() const;
};

// Built-in profiles: "desk" (synthetic, minutes on one core), "deap-like" and
// "seed-like" (the published full-scale recipes).
RunConfig profile_config(const std::string& name);

// Line-oriented `key = value` file with optional `[section]` headers; section
// names become key prefixes ("pretrain.lr"). A `profile` key must appear
// before any overridden key.
RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

}  // namespace sgmc
