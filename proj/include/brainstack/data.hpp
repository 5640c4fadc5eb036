// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "brainstack/montage.hpp"
#include "brainstack/tensor.hpp"

namespace brainstack {

// One EEG sample: a channels x time matrix plus label and recording metadata.
struct Trial {
  Tensor x;  // (C, T)
  int label = 0;
  std::string subject_id;
  int session_id = 0;
  int trial_id = 0;
};

struct TrialSet {
  std::vector<Trial> trials;
  int C = 0;
  int T = 0;
  int K = 0;

  int64_t size() const { return static_cast<int64_t>(trials.size()); }
};

// Synthetic region-localized generator settings. Classes are separated by
// carrier frequency; each class's burst lands only on the channels of its
// informative regions, on top of broadband noise shared by every channel.
struct SynthConfig {
  int C = 16;
  int T = 256;
  int K = 4;
  int subjects = 1;
  int sessions = 4;
  int trials_per_session = 80;
  double sample_rate = 256.0;
  double snr_db = 20.0;
  double snr_step_db = 0.0;  // subject s records at snr_db + s * snr_step_db
  double carrier_lo_hz = 6.0;
  double carrier_hi_hz = 30.0;
  std::map<int, std::vector<std::string>> informative_regions;  // class -> region names
  uint64_t seed = 0;

  void validate() const;
};

// Deterministic per (cfg, partition): per-trial noise and phase come from
// counter-keyed rng streams, and every sample is narrowed to f32 so trial
// files round-trip bit-exactly.
TrialSet generate_synthetic(const SynthConfig& cfg, const MontageSpec& spec);

// Per-channel standardization: (x - mean) / (sigma + 1e-8), population sigma.
// Constant channels map to all-zeros; idempotent up to the epsilon guard.
Trial zscore_normalize(const Trial& t);

struct SplitSets {
  TrialSet train;
  TrialSet val;
  TrialSet test;
};

// Whole-session assignment, per subject: ascending session ids go first
// n_train to train, next n_val to val, last n_test to test. Every subject
// must have exactly n_train+n_val+n_test sessions.
SplitSets session_split(const TrialSet& ts, int n_train, int n_val, int n_test);

// Trial file format: magic "SSEG", u32 version, u32 C, u32 T, u32 K,
// u32 trial count; per trial u32 trial_id, u16 subject length + UTF-8,
// u32 session_id, u32 label, C*T little-endian f32 row-major samples.
void save_trials(const TrialSet& ts, const std::string& path);
TrialSet load_trials(const std::string& path);

}  // namespace brainstack
