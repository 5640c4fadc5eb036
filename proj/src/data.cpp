// SPDX-License-Identifier: Apache-2.0
#include "brainstack/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <utility>

#include "brainstack/errors.hpp"
#include "brainstack/rng.hpp"
#include "brainstack/serialize.hpp"

namespace brainstack {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::string subject_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%02d", s);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (C < 1) throw ConfigError("synth: C must be >= 1");
  if (T < 2) throw ConfigError("synth: T must be >= 2");
  if (K < 1) throw ConfigError("synth: K must be >= 1");
  if (subjects < 1) throw ConfigError("synth: subjects must be >= 1");
  if (sessions < 1) throw ConfigError("synth: sessions must be >= 1");
  if (trials_per_session < 1) throw ConfigError("synth: trials_per_session must be >= 1");
  if (trials_per_session % K != 0)
    throw ConfigError("synth: trials_per_session must be a multiple of K so each session is "
                      "label-balanced");
  if (!(sample_rate > 0)) throw ConfigError("synth: sample_rate must be positive");
  if (!std::isfinite(snr_db) || !std::isfinite(snr_step_db))
    throw ConfigError("synth: snr settings must be finite");
  if (!(carrier_lo_hz > 0) || !(carrier_hi_hz > carrier_lo_hz))
    throw ConfigError("synth: need 0 < carrier_lo_hz < carrier_hi_hz");
}

TrialSet generate_synthetic(const SynthConfig& cfg, const MontageSpec& spec) {
  cfg.validate();
  if (spec.montage.channel_count() != cfg.C)
    throw ConfigError("synth: montage has " + std::to_string(spec.montage.channel_count()) +
                      " channels but config says C=" + std::to_string(cfg.C));

  // Resolve each class's informative channel set up front.
  std::vector<std::vector<int>> info_channels(static_cast<size_t>(cfg.K));
  for (int k = 0; k < cfg.K; ++k) {
    auto it = cfg.informative_regions.find(k);
    if (it == cfg.informative_regions.end() || it->second.empty())
      throw ConfigError("synth: class " + std::to_string(k) + " has no informative regions");
    std::vector<int>& chans = info_channels[static_cast<size_t>(k)];
    for (const std::string& name : it->second) {
      Region r;
      if (!region_from_name(name, &r))
        throw ConfigError("synth: unknown region '" + name + "' for class " + std::to_string(k));
      const std::vector<int>& idx = spec.partition.of(r);
      if (idx.empty())
        throw ConfigError("synth: region " + name + " has no channels in this montage");
      chans.insert(chans.end(), idx.begin(), idx.end());
    }
    std::sort(chans.begin(), chans.end());
    chans.erase(std::unique(chans.begin(), chans.end()), chans.end());
  }

  // Hann window mean square, used to calibrate burst amplitude so that the
  // average in-burst signal power hits the requested SNR against unit noise.
  const int T = cfg.T;
  std::vector<double> hann(static_cast<size_t>(T));
  double mean_w2 = 0.0;
  for (int t = 0; t < T; ++t) {
    hann[static_cast<size_t>(t)] = 0.5 * (1.0 - std::cos(kTwoPi * t / (T - 1)));
    mean_w2 += hann[static_cast<size_t>(t)] * hann[static_cast<size_t>(t)];
  }
  mean_w2 /= T;

  // One-pole lowpass mixed with white noise gives a pink-tinted spectrum;
  // the filter output is rescaled to its stationary unit variance.
  const double a = 0.9;
  const double lp_sigma = (1.0 - a) / std::sqrt(1.0 - a * a);

  TrialSet ts;
  ts.C = cfg.C;
  ts.T = cfg.T;
  ts.K = cfg.K;
  Rng root = Rng(cfg.seed).split("trial");
  int gid = 0;
  for (int s = 0; s < cfg.subjects; ++s) {
    const std::string subj = subject_name(s);
    const double snr = cfg.snr_db + s * cfg.snr_step_db;
    const double amp = std::sqrt(2.0 * std::pow(10.0, snr / 10.0) / mean_w2);
    for (int sess = 0; sess < cfg.sessions; ++sess) {
      for (int i = 0; i < cfg.trials_per_session; ++i, ++gid) {
        Trial t;
        t.label = i % cfg.K;
        t.subject_id = subj;
        t.session_id = sess;
        t.trial_id = gid;
        t.x = Tensor({cfg.C, cfg.T});
        Rng trial_rng = root.split(static_cast<uint64_t>(gid));
        const double phase = trial_rng.uniform(0.0, kTwoPi);
        Rng noise = trial_rng.split("noise");
        for (int c = 0; c < cfg.C; ++c) {
          double lp = 0.0;
          for (int tt = 0; tt < T; ++tt) {
            const double white = noise.normal();
            lp = a * lp + (1.0 - a) * noise.normal();
            t.x[static_cast<int64_t>(c) * T + tt] =
                std::sqrt(0.5) * white + std::sqrt(0.5) * (lp / lp_sigma);
          }
        }
        const double f = cfg.carrier_lo_hz +
                         (t.label + 0.5) * (cfg.carrier_hi_hz - cfg.carrier_lo_hz) / cfg.K;
        for (int c : info_channels[static_cast<size_t>(t.label)]) {
          for (int tt = 0; tt < T; ++tt) {
            t.x[static_cast<int64_t>(c) * T + tt] +=
                amp * hann[static_cast<size_t>(tt)] *
                std::sin(kTwoPi * f * tt / cfg.sample_rate + phase);
          }
        }
        // Narrow to f32 so save/load round-trips are bit-exact.
        for (int64_t j = 0; j < t.x.numel(); ++j)
          t.x[j] = static_cast<double>(static_cast<float>(t.x[j]));
        ts.trials.push_back(std::move(t));
      }
    }
  }
  return ts;
}

Trial zscore_normalize(const Trial& t) {
  if (t.x.rank() != 2) throw ShapeError("zscore: expected a (C,T) trial, got " + t.x.shape_str());
  const int64_t C = t.x.dim(0), T = t.x.dim(1);
  if (T < 2) throw ShapeError("zscore: need T >= 2, got T=" + std::to_string(T));
  Trial out = t;
  for (int64_t c = 0; c < C; ++c) {
    double mean = 0.0;
    for (int64_t i = 0; i < T; ++i) mean += t.x[c * T + i];
    mean /= static_cast<double>(T);
    double var = 0.0;
    for (int64_t i = 0; i < T; ++i) {
      const double d = t.x[c * T + i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(T);
    const double denom = std::sqrt(var) + 1e-8;
    for (int64_t i = 0; i < T; ++i) out.x[c * T + i] = (t.x[c * T + i] - mean) / denom;
  }
  return out;
}

SplitSets session_split(const TrialSet& ts, int n_train, int n_val, int n_test) {
  if (n_train < 0 || n_val < 0 || n_test < 0)
    throw ConfigError("session_split: split sizes must be nonnegative");
  const int want = n_train + n_val + n_test;
  if (want < 1) throw ConfigError("session_split: empty split");

  std::map<std::string, std::set<int>> sessions;
  for (const Trial& t : ts.trials) sessions[t.subject_id].insert(t.session_id);
  // rank -> split index (0 train, 1 val, 2 test) for each (subject, session)
  std::map<std::pair<std::string, int>, int> assign;
  for (const auto& [subj, ids] : sessions) {
    if (static_cast<int>(ids.size()) != want)
      throw ConfigError("session_split: subject " + subj + " has " +
                        std::to_string(ids.size()) + " sessions but the split covers " +
                        std::to_string(want));
    int rank = 0;
    for (int id : ids) {
      assign[{subj, id}] = rank < n_train ? 0 : (rank < n_train + n_val ? 1 : 2);
      ++rank;
    }
  }

  SplitSets out;
  for (TrialSet* part : {&out.train, &out.val, &out.test}) {
    part->C = ts.C;
    part->T = ts.T;
    part->K = ts.K;
  }
  for (const Trial& t : ts.trials) {
    switch (assign.at({t.subject_id, t.session_id})) {
      case 0: out.train.trials.push_back(t); break;
      case 1: out.val.trials.push_back(t); break;
      default: out.test.trials.push_back(t); break;
    }
  }
  return out;
}

void save_trials(const TrialSet& ts, const std::string& path) {
  ByteWriter w;
  w.bytes("SSEG", 4);
  w.u32(1);
  w.u32(static_cast<uint32_t>(ts.C));
  w.u32(static_cast<uint32_t>(ts.T));
  w.u32(static_cast<uint32_t>(ts.K));
  w.u32(static_cast<uint32_t>(ts.trials.size()));
  for (const Trial& t : ts.trials) {
    if (t.x.rank() != 2 || t.x.dim(0) != ts.C || t.x.dim(1) != ts.T)
      throw ShapeError("save_trials: trial " + std::to_string(t.trial_id) + " has shape " +
                       t.x.shape_str() + ", set is (" + std::to_string(ts.C) + "," +
                       std::to_string(ts.T) + ")");
    if (t.subject_id.size() > 0xffff)
      throw FormatError("save_trials: subject id longer than 65535 bytes");
    w.u32(static_cast<uint32_t>(t.trial_id));
    w.u16(static_cast<uint16_t>(t.subject_id.size()));
    w.bytes(t.subject_id.data(), t.subject_id.size());
    w.u32(static_cast<uint32_t>(t.session_id));
    w.u32(static_cast<uint32_t>(t.label));
    for (int64_t i = 0; i < t.x.numel(); ++i) w.f32(static_cast<float>(t.x[i]));
  }
  w.write_file(path);
}

TrialSet load_trials(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  const std::string magic = r.str(4);
  if (magic != "SSEG")
    throw FormatError("trial file: bad magic at byte 0 (expected SSEG, got '" + magic + "')");
  const uint32_t version = r.u32();
  if (version != 1)
    throw FormatError("trial file: unsupported version " + std::to_string(version) +
                      " at byte 4");
  TrialSet ts;
  ts.C = static_cast<int>(r.u32());
  ts.T = static_cast<int>(r.u32());
  ts.K = static_cast<int>(r.u32());
  const uint32_t count = r.u32();
  if (ts.C < 1 || ts.T < 1 || ts.K < 1)
    throw FormatError("trial file: nonpositive dimensions in header");
  ts.trials.reserve(count);
  for (uint32_t n = 0; n < count; ++n) {
    Trial t;
    t.trial_id = static_cast<int>(r.u32());
    const uint16_t len = r.u16();
    t.subject_id = r.str(len);
    t.session_id = static_cast<int>(r.u32());
    const size_t label_pos = r.pos();
    const uint32_t label = r.u32();
    if (label >= static_cast<uint32_t>(ts.K))
      throw FormatError("trial file: label " + std::to_string(label) + " out of range (K=" +
                        std::to_string(ts.K) + ") at byte " + std::to_string(label_pos));
    t.label = static_cast<int>(label);
    t.x = Tensor({ts.C, ts.T});
    const size_t sample_pos = r.pos();
    for (int64_t i = 0; i < t.x.numel(); ++i) t.x[i] = static_cast<double>(r.f32());
    if (!t.x.all_finite())
      throw FormatError("trial file: non-finite sample in trial " + std::to_string(t.trial_id) +
                        " starting at byte " + std::to_string(sample_pos));
    ts.trials.push_back(std::move(t));
  }
  if (!r.at_end())
    throw FormatError("trial file: " + std::to_string(r.size() - r.pos()) +
                      " trailing bytes at byte " + std::to_string(r.pos()));
  return ts;
}

}  // namespace brainstack
