// SPDX-License-Identifier: Apache-2.0
#include <functional>
#include <string>
#include <vector>

#include "brainstack/errors.hpp"
#include "brainstack/montage.hpp"
#include "brainstack/tensor.hpp"
#include "doctest.h"

using namespace brainstack;

namespace {

template <class E>
std::string thrown_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  } catch (...) {
    return "<wrong exception type>";
  }
  return "<no throw>";
}

}  // namespace

TEST_CASE("region enumeration is canonical and named") {
  CHECK(kNumRegions == 7);
  const char* names[] = {"Prefrontal", "Frontal",  "Central", "LeftTemporal",
                         "RightTemporal", "Parietal", "Occipital"};
  const char* columns[] = {"prefrontal", "frontal",  "central", "ltemporal",
                           "rtemporal",  "parietal", "occipital"};
  for (int r = 0; r < kNumRegions; ++r) {
    CHECK(std::string(region_name(static_cast<Region>(r))) == names[r]);
    CHECK(std::string(region_column(static_cast<Region>(r))) == columns[r]);
    Region back;
    CHECK(region_from_name(names[r], &back));
    CHECK(static_cast<int>(back) == r);
  }
  Region unused;
  CHECK_FALSE(region_from_name("Temporal", &unused));
}

TEST_CASE("default 16-channel montage partitions as documented") {
  MontageSpec spec = parse_montage(default_montage16_text());
  CHECK(spec.montage.channel_count() == 16);
  const int sizes[] = {2, 3, 3, 2, 2, 2, 2};
  int covered = 0;
  for (int r = 0; r < kNumRegions; ++r) {
    CHECK(static_cast<int>(spec.partition.of(static_cast<Region>(r)).size()) == sizes[r]);
    covered += sizes[r];
  }
  CHECK(covered == 16);
  CHECK(validate_partition(spec.partition, 16).empty());
}

TEST_CASE("default 64-channel montage is valid and larger") {
  MontageSpec spec = parse_montage(default_montage64_text());
  CHECK(spec.montage.channel_count() == 64);
  CHECK(validate_partition(spec.partition, 64).empty());
  for (int r = 0; r < kNumRegions; ++r)
    CHECK(spec.partition.of(static_cast<Region>(r)).size() >= 3);
}

TEST_CASE("montage text round-trips through parse and print") {
  MontageSpec spec = parse_montage(default_montage16_text());
  MontageSpec again = parse_montage(montage_to_text(spec));
  CHECK(again.montage.channel_names == spec.montage.channel_names);
  for (int r = 0; r < kNumRegions; ++r)
    CHECK(again.partition.of(static_cast<Region>(r)) == spec.partition.of(static_cast<Region>(r)));
}

TEST_CASE("parser accepts comments, blanks and unassigned channels") {
  MontageSpec spec = parse_montage(
      "# leading comment\n"
      "channels: A B C D E F G H\n"
      "\n"
      "region Prefrontal: A\n"
      "region Frontal: B\n"
      "region Central: C\n"
      "region LeftTemporal: D  # trailing comment\n"
      "region RightTemporal: E\n"
      "region Parietal: F\n"
      "region Occipital: G\n");
  CHECK(spec.montage.channel_count() == 8);
  // H belongs to no region: legal, it reaches only the global expert.
  CHECK(validate_partition(spec.partition, 8).empty());
  CHECK(spec.partition.of(Region::kOccipital) == std::vector<int>{6});
}

TEST_CASE("parser rejects malformed inputs") {
  // The channels line must come first and region lines may only reference it.
  CHECK(thrown_message<FormatError>([] {
          parse_montage("region Frontal: A\n");
        }).find("channels") != std::string::npos);
  CHECK(thrown_message<FormatError>([] {
          parse_montage("channels: A B\nregion Frontal: A Q\n");
        }).find("'Q'") != std::string::npos);
  CHECK(thrown_message<FormatError>([] {
          parse_montage("channels: A B\nregion Sideways: A\n");
        }).find("'Sideways'") != std::string::npos);
  CHECK(thrown_message<FormatError>([] {
          parse_montage("channels: A A\n");
        }).find("'A'") != std::string::npos);
  // A montage that never mentions some region is incomplete.
  CHECK(thrown_message<FormatError>([] {
          parse_montage("channels: A B\nregion Frontal: A\n");
        }).find("incomplete") != std::string::npos);
}

TEST_CASE("validate_partition reports each violation") {
  MontageSpec spec = parse_montage(default_montage16_text());

  SUBCASE("overlap between two regions") {
    spec.partition.of(Region::kFrontal).push_back(spec.partition.of(Region::kOccipital)[0]);
    auto v = validate_partition(spec.partition, 16);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("more than one region") != std::string::npos);
  }
  SUBCASE("empty region") {
    spec.partition.of(Region::kFrontal).clear();
    auto v = validate_partition(spec.partition, 16);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("'Frontal' is empty") != std::string::npos);
  }
  SUBCASE("channel index out of range") {
    spec.partition.of(Region::kParietal).push_back(99);
    auto v = validate_partition(spec.partition, 16);
    REQUIRE(v.size() == 1);
    CHECK(v[0].find("99 out of range") != std::string::npos);
  }
  SUBCASE("violations accumulate") {
    spec.partition.of(Region::kFrontal).clear();
    spec.partition.of(Region::kParietal).push_back(99);
    CHECK(validate_partition(spec.partition, 16).size() == 2);
  }
}

TEST_CASE("slice_region selects the partition's rows in order") {
  MontageSpec spec = parse_montage(default_montage16_text());
  const int C = 16, T = 5;
  Tensor x({C, T});
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < T; ++t) x[c * T + t] = 100.0 * c + t;

  for (int r = 0; r < kNumRegions; ++r) {
    const Region region = static_cast<Region>(r);
    const std::vector<int>& idx = spec.partition.of(region);
    Tensor s = slice_region(x, spec.partition, region);
    REQUIRE(s.dim(0) == static_cast<int64_t>(idx.size()));
    REQUIRE(s.dim(1) == T);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int t = 0; t < T; ++t)
        CHECK(s[static_cast<int64_t>(i) * T + t] == 100.0 * idx[i] + t);
  }
}

TEST_CASE("slice_region validates input shape") {
  MontageSpec spec = parse_montage(default_montage16_text());
  Tensor bad({3});
  CHECK_THROWS_AS(slice_region(bad, spec.partition, Region::kFrontal), ShapeError);
}
