// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "brainstack/data.hpp"
#include "brainstack/experts.hpp"
#include "brainstack/montage.hpp"
#include "brainstack/objective.hpp"
#include "brainstack/train.hpp"

namespace brainstack {

// Flat `key = value` file with optional `[section]` headers; keys are stored
// as "section.key" ("key" alone before any header). '#' starts a comment.
using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap load_config_file(const std::string& path);

// Typed, consumption-tracked access. finish() rejects keys nothing read,
// so misspelled settings fail loudly instead of silently using defaults.
class ConfigView {
 public:
  explicit ConfigView(ConfigMap map) : map_(std::move(map)) {}

  bool has(const std::string& key) const { return map_.count(key) != 0; }
  std::string get_str(const std::string& key, const std::string& fallback);
  int get_int(const std::string& key, int fallback);
  uint64_t get_u64(const std::string& key, uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  void finish() const;  // throws ConfigError listing unconsumed keys

 private:
  ConfigMap map_;
  std::set<std::string> used_;
};

// Everything one experiment needs: montage, synthetic-data recipe, session
// split arity, both expert templates, the loss schedule and the train loop.
struct ExperimentConfig {
  MontageSpec montage;
  std::string montage_source;  // "montage16", "montage64", or a file path
  SynthConfig synth;
  int split_train = 2;
  int split_val = 1;
  int split_test = 1;
  CNetConfig cnet;
  CTNetConfig ctnet;
  ScheduleConfig schedule;
  TrainConfig train;

  ModelConfig model_config(Variant v, uint64_t init_seed) const;
};

// Defaults: 16-channel montage, 4 sessions x 80 trials at snr 20 with the
// signal in Occipital and LeftTemporal, desk-scale experts, full variant.
ExperimentConfig default_experiment();
ExperimentConfig experiment_from_map(const ConfigMap& map);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace brainstack
