// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "brainstack/data.hpp"
#include "brainstack/errors.hpp"
#include "brainstack/montage.hpp"
#include "doctest.h"

using namespace brainstack;

namespace {

MontageSpec desk_spec() { return parse_montage(default_montage16_text()); }

SynthConfig desk_cfg() {
  SynthConfig cfg;
  cfg.informative_regions = {{0, {"Occipital"}},
                             {1, {"LeftTemporal"}},
                             {2, {"Parietal"}},
                             {3, {"Frontal"}}};
  return cfg;
}

std::vector<uint8_t> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(f), {});
}

void spit(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  REQUIRE(f.good());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Power of one sinusoidal component, phase-invariant.
double goertzel_power(const double* x, int64_t n, double omega) {
  double c = 2.0 * std::cos(omega), s1 = 0.0, s2 = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double s0 = x[i] + c * s1 - s2;
    s2 = s1;
    s1 = s0;
  }
  return s1 * s1 + s2 * s2 - c * s1 * s2;
}

double channel_variance(const Tensor& x, int64_t c) {
  const int64_t T = x.dim(1);
  double mean = 0.0;
  for (int64_t i = 0; i < T; ++i) mean += x[c * T + i];
  mean /= static_cast<double>(T);
  double var = 0.0;
  for (int64_t i = 0; i < T; ++i) {
    double d = x[c * T + i] - mean;
    var += d * d;
  }
  return var / static_cast<double>(T);
}

bool trialsets_identical(const TrialSet& a, const TrialSet& b) {
  if (a.C != b.C || a.T != b.T || a.K != b.K || a.size() != b.size()) return false;
  for (int64_t i = 0; i < a.size(); ++i) {
    const Trial& u = a.trials[static_cast<size_t>(i)];
    const Trial& v = b.trials[static_cast<size_t>(i)];
    if (u.label != v.label || u.subject_id != v.subject_id || u.session_id != v.session_id ||
        u.trial_id != v.trial_id || !u.x.same_shape(v.x)) {
      return false;
    }
    for (int64_t j = 0; j < u.x.numel(); ++j) {
      if (u.x[j] != v.x[j]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("z-scoring standardizes each channel row") {
  Trial t;
  t.x = Tensor({1, 3}, {1.0, 2.0, 3.0});
  t.label = 2;
  t.subject_id = "s00";
  t.session_id = 1;
  t.trial_id = 17;
  Trial z = zscore_normalize(t);
  CHECK(z.x[0] == doctest::Approx(-1.2247).epsilon(1e-4));
  CHECK(z.x[1] == doctest::Approx(0.0).epsilon(1e-4));
  CHECK(z.x[2] == doctest::Approx(1.2247).epsilon(1e-4));
  CHECK(z.label == 2);
  CHECK(z.subject_id == "s00");
  CHECK(z.session_id == 1);
  CHECK(z.trial_id == 17);

  Trial flat;
  flat.x = Tensor({2, 4}, {5.0, 5.0, 5.0, 5.0, 1.0, 2.0, 3.0, 4.0});
  Trial zf = zscore_normalize(flat);
  for (int64_t i = 0; i < 4; ++i) CHECK(zf.x[i] == 0.0);

  Trial again = zscore_normalize(zf);
  for (int64_t i = 0; i < zf.x.numel(); ++i) {
    CHECK(again.x[i] == doctest::Approx(zf.x[i]).epsilon(1e-6));
  }

  Trial bad;
  bad.x = Tensor({6});
  CHECK_THROWS_AS(zscore_normalize(bad), ShapeError);
  bad.x = Tensor({3, 1});
  CHECK_THROWS_AS(zscore_normalize(bad), ShapeError);
}

TEST_CASE("every session is label-balanced by construction") {
  SynthConfig cfg = desk_cfg();
  cfg.sessions = 2;
  cfg.trials_per_session = 40;
  TrialSet ts = generate_synthetic(cfg, desk_spec());
  REQUIRE(ts.size() == 80);
  std::map<std::pair<int, int>, int> counts;
  for (const Trial& t : ts.trials) counts[{t.session_id, t.label}]++;
  REQUIRE(counts.size() == 8);
  for (const auto& [key, n] : counts) CHECK(n == 10);

  SynthConfig odd = cfg;
  odd.trials_per_session = 42;
  CHECK_THROWS_AS(generate_synthetic(odd, desk_spec()), ConfigError);
}

TEST_CASE("generation is a pure function of the seed") {
  SynthConfig cfg = desk_cfg();
  cfg.sessions = 2;
  cfg.trials_per_session = 8;
  TrialSet a = generate_synthetic(cfg, desk_spec());
  TrialSet b = generate_synthetic(cfg, desk_spec());
  CHECK(trialsets_identical(a, b));

  SynthConfig other = cfg;
  other.seed = cfg.seed + 1;
  TrialSet c = generate_synthetic(other, desk_spec());
  CHECK_FALSE(trialsets_identical(a, c));
}

TEST_CASE("class bursts land only on that class's informative channels") {
  MontageSpec spec = desk_spec();
  SynthConfig cfg = desk_cfg();
  cfg.sessions = 1;
  cfg.trials_per_session = 40;
  TrialSet ts = generate_synthetic(cfg, spec);

  const std::vector<int>& occipital = spec.partition.of(Region::kOccipital);
  std::set<int> informative(occipital.begin(), occipital.end());
  double info_var = 0.0, rest_var = 0.0;
  int64_t info_n = 0, rest_n = 0;
  for (const Trial& t : ts.trials) {
    if (t.label != 0) continue;
    for (int c = 0; c < cfg.C; ++c) {
      double v = channel_variance(t.x, c);
      if (informative.count(c)) {
        info_var += v;
        ++info_n;
      } else {
        rest_var += v;
        ++rest_n;
      }
    }
  }
  REQUIRE(info_n > 0);
  REQUIRE(rest_n > 0);
  info_var /= static_cast<double>(info_n);
  rest_var /= static_cast<double>(rest_n);
  // 20 dB puts roughly two orders of magnitude between them.
  CHECK(info_var > 5.0 * rest_var);
}

TEST_CASE("band power at the class carriers separates the classes") {
  MontageSpec spec = desk_spec();
  SynthConfig cfg = desk_cfg();
  cfg.sessions = 2;
  cfg.trials_per_session = 40;
  TrialSet ts = generate_synthetic(cfg, spec);

  // Informative channel lists and carrier frequencies per class, mirroring
  // the generator's layout rule.
  std::vector<std::vector<int>> chans = {spec.partition.of(Region::kOccipital),
                                         spec.partition.of(Region::kLeftTemporal),
                                         spec.partition.of(Region::kParietal),
                                         spec.partition.of(Region::kFrontal)};
  std::vector<double> omega(4);
  for (int k = 0; k < 4; ++k) {
    double f = cfg.carrier_lo_hz + (k + 0.5) * (cfg.carrier_hi_hz - cfg.carrier_lo_hz) / cfg.K;
    omega[static_cast<size_t>(k)] = 2.0 * 3.14159265358979323846 * f / cfg.sample_rate;
  }

  int correct = 0;
  for (const Trial& t : ts.trials) {
    int best = -1;
    double best_power = -1.0;
    for (int k = 0; k < 4; ++k) {
      double p = 0.0;
      for (int c : chans[static_cast<size_t>(k)]) {
        p += goertzel_power(t.x.data() + c * cfg.T, cfg.T, omega[static_cast<size_t>(k)]);
      }
      p /= static_cast<double>(chans[static_cast<size_t>(k)].size());
      if (p > best_power) {
        best_power = p;
        best = k;
      }
    }
    correct += (best == t.label) ? 1 : 0;
  }
  double accuracy = static_cast<double>(correct) / static_cast<double>(ts.size());
  CHECK(accuracy > 0.9);
}

TEST_CASE("splits take whole sessions in temporal order") {
  SynthConfig cfg = desk_cfg();
  cfg.subjects = 2;
  cfg.sessions = 4;
  cfg.trials_per_session = 8;
  TrialSet ts = generate_synthetic(cfg, desk_spec());
  SplitSets s = session_split(ts, 2, 1, 1);

  auto keys = [](const TrialSet& part) {
    std::set<std::pair<std::string, int>> out;
    for (const Trial& t : part.trials) out.insert({t.subject_id, t.session_id});
    return out;
  };
  std::set<std::pair<std::string, int>> tr = keys(s.train), va = keys(s.val), te = keys(s.test);

  CHECK(s.train.size() == 2 * 2 * 8);
  CHECK(s.val.size() == 2 * 8);
  CHECK(s.test.size() == 2 * 8);
  for (const auto& [subject, session] : tr) CHECK((session == 0 || session == 1));
  for (const auto& [subject, session] : va) CHECK(session == 2);
  for (const auto& [subject, session] : te) CHECK(session == 3);

  // Leakage freedom: no (subject, session) pair lands in two splits.
  for (const auto& k : va) CHECK(tr.count(k) == 0);
  for (const auto& k : te) CHECK(tr.count(k) == 0);
  for (const auto& k : te) CHECK(va.count(k) == 0);

  CHECK_THROWS_AS(session_split(ts, 2, 1, 2), ConfigError);

  SynthConfig many = desk_cfg();
  many.sessions = 16;
  many.trials_per_session = 4;
  TrialSet ts16 = generate_synthetic(many, desk_spec());
  CHECK_THROWS_AS(session_split(ts16, 14, 1, 2), ConfigError);
  SplitSets s16 = session_split(ts16, 14, 1, 1);
  for (const Trial& t : s16.val.trials) CHECK(t.session_id == 14);
  for (const Trial& t : s16.test.trials) CHECK(t.session_id == 15);
}

TEST_CASE("trial files round-trip bit-exactly") {
  SynthConfig cfg = desk_cfg();
  cfg.sessions = 1;
  cfg.trials_per_session = 12;
  TrialSet ts = generate_synthetic(cfg, desk_spec());
  std::string path = temp_path("bs_roundtrip.sseg");
  save_trials(ts, path);
  TrialSet back = load_trials(path);
  CHECK(trialsets_identical(ts, back));
  std::filesystem::remove(path);
}

TEST_CASE("corrupted trial files are rejected with byte context") {
  SynthConfig cfg = desk_cfg();
  cfg.sessions = 1;
  cfg.trials_per_session = 4;
  TrialSet ts = generate_synthetic(cfg, desk_spec());
  std::string path = temp_path("bs_corrupt.sseg");
  save_trials(ts, path);
  std::vector<uint8_t> good = slurp(path);

  std::vector<uint8_t> bad_magic = good;
  bad_magic[0] = 'X';
  bad_magic[1] = 'X';
  bad_magic[2] = 'X';
  bad_magic[3] = 'X';
  spit(path, bad_magic);
  try {
    load_trials(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
  }

  std::vector<uint8_t> bad_version = good;
  bad_version[4] = 99;
  spit(path, bad_version);
  try {
    load_trials(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("unsupported version") != std::string::npos);
  }

  std::vector<uint8_t> truncated(good.begin(), good.end() - 7);
  spit(path, truncated);
  try {
    load_trials(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("end of file at byte") != std::string::npos);
  }

  std::vector<uint8_t> trailing = good;
  trailing.push_back(0);
  trailing.push_back(1);
  trailing.push_back(2);
  spit(path, trailing);
  try {
    load_trials(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("trailing bytes") != std::string::npos);
  }

  std::filesystem::remove(path);
}

TEST_CASE("the generator rejects inconsistent configs") {
  SynthConfig missing = desk_cfg();
  missing.informative_regions.erase(2);
  try {
    generate_synthetic(missing, desk_spec());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("no informative regions") != std::string::npos);
  }

  SynthConfig unknown = desk_cfg();
  unknown.informative_regions[1] = {"Sideways"};
  CHECK_THROWS_AS(generate_synthetic(unknown, desk_spec()), ConfigError);

  SynthConfig narrow = desk_cfg();
  narrow.C = 8;
  CHECK_THROWS_AS(generate_synthetic(narrow, desk_spec()), ConfigError);
}
