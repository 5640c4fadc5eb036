// SPDX-License-Identifier: Apache-2.0
#include "brainstack/montage.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace brainstack {

namespace {

const char* kRegionNames[kNumRegions] = {
    "Prefrontal", "Frontal", "Central", "LeftTemporal",
    "RightTemporal", "Parietal", "Occipital",
};

const char* kRegionColumns[kNumRegions] = {
    "prefrontal", "frontal", "central", "ltemporal",
    "rtemporal", "parietal", "occipital",
};

std::string strip_comment(const std::string& line) {
  size_t hash = line.find('#');
  std::string s = hash == std::string::npos ? line : line.substr(0, hash);
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  size_t start = s.find_first_not_of(" \t");
  return start == std::string::npos ? std::string() : s.substr(start);
}

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

const char* region_name(Region r) { return kRegionNames[static_cast<int>(r)]; }
const char* region_column(Region r) { return kRegionColumns[static_cast<int>(r)]; }

bool region_from_name(const std::string& name, Region* out) {
  for (int i = 0; i < kNumRegions; ++i) {
    if (name == kRegionNames[i]) {
      *out = static_cast<Region>(i);
      return true;
    }
  }
  return false;
}

int Montage::index_of(const std::string& name) const {
  for (size_t i = 0; i < channel_names.size(); ++i) {
    if (channel_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

MontageSpec parse_montage(const std::string& text) {
  MontageSpec spec;
  std::array<bool, kNumRegions> region_seen{};
  std::vector<int> owner(0);  // channel index -> owning region or -1
  bool have_channels = false;

  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    std::string line = strip_comment(raw);
    if (line.empty()) continue;
    if (line.rfind("channels:", 0) == 0) {
      if (have_channels) {
        throw FormatError("montage line " + std::to_string(line_no) + ": duplicate channels line");
      }
      std::vector<std::string> names = split_ws(line.substr(9));
      if (names.empty()) {
        throw FormatError("montage line " + std::to_string(line_no) + ": empty channel list");
      }
      std::set<std::string> seen;
      for (const std::string& n : names) {
        if (!seen.insert(n).second) {
          throw FormatError("montage line " + std::to_string(line_no) +
                            ": duplicate channel name '" + n + "'");
        }
      }
      spec.montage.channel_names = std::move(names);
      owner.assign(spec.montage.channel_names.size(), -1);
      have_channels = true;
      continue;
    }
    if (line.rfind("region ", 0) == 0) {
      if (!have_channels) {
        throw FormatError("montage line " + std::to_string(line_no) +
                          ": region listed before channels line");
      }
      size_t colon = line.find(':');
      if (colon == std::string::npos) {
        throw FormatError("montage line " + std::to_string(line_no) + ": missing ':'");
      }
      std::string rname = line.substr(7, colon - 7);
      while (!rname.empty() && (rname.back() == ' ' || rname.back() == '\t')) rname.pop_back();
      Region r;
      if (!region_from_name(rname, &r)) {
        throw FormatError("montage line " + std::to_string(line_no) + ": unknown region '" +
                          rname + "'");
      }
      if (region_seen[static_cast<size_t>(static_cast<int>(r))]) {
        throw FormatError("montage line " + std::to_string(line_no) + ": region '" + rname +
                          "' listed twice");
      }
      region_seen[static_cast<size_t>(static_cast<int>(r))] = true;
      std::vector<std::string> names = split_ws(line.substr(colon + 1));
      if (names.empty()) {
        throw FormatError("montage line " + std::to_string(line_no) + ": region '" + rname +
                          "' has no channels");
      }
      for (const std::string& n : names) {
        int idx = spec.montage.index_of(n);
        if (idx < 0) {
          throw FormatError("montage line " + std::to_string(line_no) + ": unknown channel '" +
                            n + "' in region '" + rname + "'");
        }
        if (owner[static_cast<size_t>(idx)] >= 0) {
          throw FormatError("montage line " + std::to_string(line_no) + ": channel '" + n +
                            "' assigned to both '" +
                            kRegionNames[owner[static_cast<size_t>(idx)]] + "' and '" + rname +
                            "'");
        }
        owner[static_cast<size_t>(idx)] = static_cast<int>(r);
        spec.partition.of(r).push_back(idx);
      }
      continue;
    }
    throw FormatError("montage line " + std::to_string(line_no) + ": unrecognized line '" +
                      line + "'");
  }
  if (!have_channels) throw FormatError("montage: missing channels line");
  for (int i = 0; i < kNumRegions; ++i) {
    if (!region_seen[static_cast<size_t>(i)]) {
      throw FormatError(std::string("montage: incomplete partition, region '") +
                        kRegionNames[i] + "' missing");
    }
  }
  return spec;
}

std::string montage_to_text(const MontageSpec& spec) {
  std::string out = "channels:";
  for (const std::string& n : spec.montage.channel_names) {
    out += " ";
    out += n;
  }
  out += "\n";
  for (int i = 0; i < kNumRegions; ++i) {
    Region r = static_cast<Region>(i);
    out += "region ";
    out += kRegionNames[i];
    out += ":";
    for (int idx : spec.partition.of(r)) {
      out += " ";
      out += spec.montage.channel_names[static_cast<size_t>(idx)];
    }
    out += "\n";
  }
  return out;
}

std::vector<std::string> validate_partition(const RegionPartition& partition, int C) {
  std::vector<std::string> violations;
  std::set<int> seen;
  for (int i = 0; i < kNumRegions; ++i) {
    Region r = static_cast<Region>(i);
    const std::vector<int>& idx = partition.of(r);
    if (idx.empty()) {
      violations.push_back(std::string("region '") + kRegionNames[i] + "' is empty");
    }
    for (int ch : idx) {
      if (ch < 0 || ch >= C) {
        violations.push_back(std::string("region '") + kRegionNames[i] + "' index " +
                             std::to_string(ch) + " out of range for C=" + std::to_string(C));
      } else if (!seen.insert(ch).second) {
        violations.push_back("channel index " + std::to_string(ch) +
                             " appears in more than one region");
      }
    }
  }
  return violations;
}

Tensor slice_region(const Tensor& x, const RegionPartition& partition, Region r) {
  if (x.rank() != 2) {
    throw ShapeError("slice_region: expected (C,T) trial tensor, got " + x.shape_str());
  }
  int64_t C = x.dim(0), T = x.dim(1);
  const std::vector<int>& idx = partition.of(r);
  Tensor out({static_cast<int64_t>(idx.size()), T});
  for (size_t i = 0; i < idx.size(); ++i) {
    int ch = idx[i];
    if (ch < 0 || ch >= C) {
      throw ShapeError(std::string("slice_region: region '") + region_name(r) + "' index " +
                       std::to_string(ch) + " out of range for C=" + std::to_string(C));
    }
    const double* src = x.data() + static_cast<int64_t>(ch) * T;
    double* dst = out.data() + static_cast<int64_t>(i) * T;
    for (int64_t t = 0; t < T; ++t) dst[t] = src[t];
  }
  return out;
}

const std::string& default_montage16_text() {
  static const std::string text =
      "# 16-channel desk montage, 10-20 names\n"
      "channels: Fp1 Fp2 F3 Fz F4 C3 Cz C4 T7 TP7 T8 TP8 P3 P4 O1 O2\n"
      "region Prefrontal: Fp1 Fp2\n"
      "region Frontal: F3 Fz F4\n"
      "region Central: C3 Cz C4\n"
      "region LeftTemporal: T7 TP7\n"
      "region RightTemporal: T8 TP8\n"
      "region Parietal: P3 P4\n"
      "region Occipital: O1 O2\n";
  return text;
}

const std::string& default_montage64_text() {
  // 10-10 layout grouped by name prefix. M1/M2/Iz stay unassigned and feed
  // only the global expert.
  static const std::string text =
      "channels: Fp1 Fpz Fp2 AF7 AF3 AFz AF4 AF8 F7 F5 F3 F1 Fz F2 F4 F6 F8"
      " FT7 FC5 FC3 FC1 FCz FC2 FC4 FC6 FT8 T7 C5 C3 C1 Cz C2 C4 C6 T8"
      " TP7 CP5 CP3 CP1 CPz CP2 CP4 CP6 TP8 P7 P5 P3 P1 Pz P2 P4 P6 P8"
      " PO7 PO3 POz PO4 PO8 O1 Oz O2 M1 M2 Iz\n"
      "region Prefrontal: Fp1 Fpz Fp2\n"
      "region Frontal: AF7 AF3 AFz AF4 AF8 F7 F5 F3 F1 Fz F2 F4 F6 F8\n"
      "region Central: FC5 FC3 FC1 FCz FC2 FC4 FC6 C5 C3 C1 Cz C2 C4 C6\n"
      "region LeftTemporal: FT7 T7 TP7\n"
      "region RightTemporal: FT8 T8 TP8\n"
      "region Parietal: CP5 CP3 CP1 CPz CP2 CP4 CP6 P7 P5 P3 P1 Pz P2 P4 P6 P8\n"
      "region Occipital: PO7 PO3 POz PO4 PO8 O1 Oz O2\n";
  return text;
}

}  // namespace brainstack
