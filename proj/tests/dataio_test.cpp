/* Copyright 2026 The PIFR Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/


#include "pifr/dataio.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pifr/error.hpp"
#include "pifr/rsa.hpp"
#include "test_util.hpp"

namespace pifr {
namespace {

namespace fs = std::filesystem;

class DataIoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pifr_dataio_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path path(const std::string& name) const { return dir_ / name; }

  fs::path dir_;
};

std::vector<unsigned char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::uint32_t u32_at(const std::vector<unsigned char>& b, std::size_t offset) {
  return static_cast<std::uint32_t>(b[offset]) | static_cast<std::uint32_t>(b[offset + 1]) << 8 |
         static_cast<std::uint32_t>(b[offset + 2]) << 16 | static_cast<std::uint32_t>(b[offset + 3]) << 24;
}

FormatError::Kind read_failure(const fs::path& p) {
  try {
    read_container(p);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "read_container accepted " << p;
  return FormatError::Kind::kIo;
}

TEST_F(DataIoTest, EmptyContainerLayout) {
  write_container({}, path("empty.bin"));
  const auto b = bytes_of(path("empty.bin"));
  ASSERT_EQ(b.size(), 12u);
  EXPECT_EQ(std::memcmp(b.data(), "PIFR", 4), 0);
  EXPECT_EQ(u32_at(b, 4), 1u);
  EXPECT_EQ(u32_at(b, 8), 0u);
  EXPECT_TRUE(read_container(path("empty.bin")).empty());
}

TEST_F(DataIoTest, SingleScalarSetLayout) {
  FeatureSet set;
  set.maps.emplace_back(1, 1, 1, 0.5);
  set.identity = 7;
  write_container({set}, path("one.bin"));
  const auto b = bytes_of(path("one.bin"));
  ASSERT_EQ(b.size(), 36u);
  EXPECT_EQ(u32_at(b, 8), 1u);
  EXPECT_EQ(u32_at(b, 12), 7u);
  for (std::size_t k = 16; k < 32; k += 4) EXPECT_EQ(u32_at(b, k), 1u);
  float v;
  std::memcpy(&v, b.data() + 32, 4);
  EXPECT_EQ(v, 0.5f);
  EXPECT_EQ(read_container(path("one.bin")).front(), set);
}

TEST_F(DataIoTest, RoundTripWithinSinglePrecision) {
  std::mt19937_64 rng(1);
  std::vector<FeatureSet> sets;
  for (int s = 0; s < 6; ++s) {
    FeatureSet set = testing::random_set(rng, testing::uniform_size(rng, 1, 5), 3, 2, 5, 3.0);
    if (s % 3 != 0) set.identity = static_cast<std::uint32_t>(s);
    sets.push_back(std::move(set));
  }
  write_container(sets, path("data.bin"));
  const auto back = read_container(path("data.bin"));
  ASSERT_EQ(back.size(), sets.size());
  for (std::size_t s = 0; s < sets.size(); ++s) {
    EXPECT_EQ(back[s].identity, sets[s].identity);
    ASSERT_EQ(back[s].size(), sets[s].size());
    for (std::size_t n = 0; n < sets[s].size(); ++n) {
      ASSERT_TRUE(back[s].maps[n].same_shape(sets[s].maps[n]));
      auto a = sets[s].maps[n].values();
      auto b = back[s].maps[n].values();
      for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LE(std::abs(a[k] - b[k]), std::ldexp(std::abs(a[k]), -24));
    }
  }
  // A second pass is exact because every value is now representable in f32.
  write_container(back, path("again.bin"));
  EXPECT_EQ(read_container(path("again.bin")), back);
  EXPECT_EQ(bytes_of(path("again.bin")), bytes_of(path("data.bin")));
}

TEST_F(DataIoTest, TruncationIsDetectedAtEveryLength) {
  std::mt19937_64 rng(2);
  FeatureSet set = testing::random_set(rng, 2, 1, 2, 2);
  set.identity = 1;
  write_container({set}, path("full.bin"));
  const auto b = bytes_of(path("full.bin"));
  for (std::size_t len = 0; len < b.size(); ++len) {
    write_bytes(path("cut.bin"), std::vector<unsigned char>(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(len)));
    EXPECT_THROW(read_container(path("cut.bin")), FormatError) << "length " << len;
  }
}

TEST_F(DataIoTest, HeaderErrors) {
  write_container({}, path("ok.bin"));
  auto b = bytes_of(path("ok.bin"));
  b[0] = 'X';
  write_bytes(path("magic.bin"), b);
  EXPECT_EQ(read_failure(path("magic.bin")), FormatError::Kind::kBadMagic);
  b = bytes_of(path("ok.bin"));
  b[4] = 2;
  write_bytes(path("version.bin"), b);
  EXPECT_EQ(read_failure(path("version.bin")), FormatError::Kind::kBadVersion);
  b = bytes_of(path("ok.bin"));
  b.push_back(0);
  write_bytes(path("trailing.bin"), b);
  EXPECT_EQ(read_failure(path("trailing.bin")), FormatError::Kind::kShape);
  EXPECT_EQ(read_failure(path("missing.bin")), FormatError::Kind::kIo);
}

TEST_F(DataIoTest, NonFiniteValuesAreRejected) {
  FeatureSet set;
  set.maps.emplace_back(1, 1, 1, 0.5);
  write_container({set}, path("one.bin"));
  auto b = bytes_of(path("one.bin"));
  const float inf = std::numeric_limits<float>::infinity();
  std::memcpy(b.data() + 32, &inf, 4);
  write_bytes(path("inf.bin"), b);
  EXPECT_EQ(read_failure(path("inf.bin")), FormatError::Kind::kNonFinite);
}

TEST_F(DataIoTest, ReservedIdentityCannotBeWritten) {
  FeatureSet set;
  set.maps.emplace_back(1, 1, 1, 0.5);
  set.identity = kNoIdentity;
  EXPECT_THROW(write_container({set}, path("bad.bin")), InvariantError);
}

TEST_F(DataIoTest, CheckpointRoundTripIsBitExact) {
  std::mt19937_64 rng(3);
  RsaConfig config;
  config.blocks = 3;
  config.embed_dim = 2;
  config.sigma = 0.37;
  RsaParams params = initialize_params(config, 5, 4);
  for (auto& o : params.omega)
    for (double& v : o) v = testing::uniform_real(rng, -1, 1) / 3.0;
  write_checkpoint(params, config, path("ckpt.bin"));
  const Checkpoint back = read_checkpoint(path("ckpt.bin"));
  EXPECT_EQ(back.params, params);
  EXPECT_EQ(back.config.blocks, 3u);
  EXPECT_EQ(back.config.embed_dim, 2u);
  EXPECT_EQ(back.config.sigma, 0.37);
  EXPECT_EQ(bytes_of(path("ckpt.bin")).size(), 4u + 4 * 4 + 8 + 8 * (3 * 5 + 2 * 2 * 5));
}

TEST_F(DataIoTest, ZeroCheckpointRoundTrips) {
  const RsaParams params = zero_params(2, 1, 3);
  write_checkpoint(params, RsaConfig{}, path("zero.bin"));
  EXPECT_EQ(read_checkpoint(path("zero.bin")).params, params);
}

TEST_F(DataIoTest, TruncatedCheckpointIsRejected) {
  write_checkpoint(zero_params(2, 1, 3), RsaConfig{}, path("ckpt.bin"));
  const auto b = bytes_of(path("ckpt.bin"));
  for (std::size_t len : {std::size_t{0}, std::size_t{6}, std::size_t{20}, b.size() - 1}) {
    write_bytes(path("cut.bin"), std::vector<unsigned char>(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(len)));
    EXPECT_THROW(read_checkpoint(path("cut.bin")), FormatError);
  }
}

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig c;
  c.identities = 3;
  c.sets_per_identity = 2;
  c.n_per_set = 4;
  c.h = c.w = 2;
  c.d = 3;
  c.seed = seed;
  return c;
}

TEST_F(DataIoTest, GeneratorIsDeterministic) {
  write_container(generate_synthetic(small_synth(5)), path("a.bin"));
  write_container(generate_synthetic(small_synth(5)), path("b.bin"));
  write_container(generate_synthetic(small_synth(6)), path("c.bin"));
  EXPECT_EQ(bytes_of(path("a.bin")), bytes_of(path("b.bin")));
  EXPECT_NE(bytes_of(path("a.bin")), bytes_of(path("c.bin")));
}

TEST(SyntheticTest, DefaultShape) {
  const SynthConfig c;
  const auto sets = generate_synthetic(c);
  ASSERT_EQ(sets.size(), 160u);
  for (const FeatureSet& set : sets) {
    EXPECT_GE(set.size(), 1u);
    EXPECT_LE(set.size(), 8u);
    EXPECT_EQ(set.front().h(), 4u);
    EXPECT_EQ(set.front().d(), 16u);
    ASSERT_TRUE(set.identity.has_value());
  }
}

TEST(SyntheticTest, NoiselessSetsAreConstantAndRsaFixed) {
  SynthConfig c = small_synth(7);
  c.noise_sigma = 0.0;
  c.redundancy_rate = 0.0;
  const auto sets = generate_synthetic(c);
  RsaConfig rsa;
  rsa.blocks = 2;
  RsaParams params = initialize_params(rsa, c.d, 1);
  for (auto& o : params.omega)
    for (double& v : o) v = 0.7;
  for (const FeatureSet& set : sets) {
    for (const FeatureMap& m : set.maps) EXPECT_EQ(m, set.front());
    for (std::size_t p = 1; p < set.front().positions(); ++p)
      for (std::size_t ch = 0; ch < c.d; ++ch) EXPECT_EQ(set.front().position(p)[ch], set.front().position(0)[ch]);
    EXPECT_EQ(rsa_apply(set, params, rsa), set);
  }
}

TEST(SyntheticTest, IdentitiesHaveDistinctLatents) {
  SynthConfig c = small_synth(8);
  c.identities = 2;
  c.noise_sigma = 0.0;
  c.redundancy_rate = 0.0;
  const auto sets = generate_synthetic(c);
  EXPECT_NE(sets.front().front(), sets.back().front());
}

TEST(SyntheticTest, FullRedundancyPutsDuplicatesInEverySet) {
  SynthConfig c = small_synth(9);
  c.redundancy_rate = 1.0;
  c.n_per_set = 4;
  const SyntheticData data = generate_synthetic_with_provenance(c);
  for (const auto& flags : data.duplicate) EXPECT_GE(std::count(flags.begin(), flags.end(), true), 1);
}

TEST(SyntheticTest, DuplicateFlagsFollowTheRate) {
  SynthConfig c = small_synth(10);
  c.redundancy_rate = 0.5;
  c.n_per_set = 8;
  const SyntheticData data = generate_synthetic_with_provenance(c);
  for (std::size_t s = 0; s < data.sets.size(); ++s) {
    ASSERT_EQ(data.duplicate[s].size(), data.sets[s].size());
    EXPECT_EQ(static_cast<std::size_t>(std::count(data.duplicate[s].begin(), data.duplicate[s].end(), true)),
              data.sets[s].size() / 2);
  }
}

TEST(SyntheticTest, ConfigValidation) {
  SynthConfig c;
  c.redundancy_rate = 2.0;
  EXPECT_THROW(c.validate(), InvariantError);
  c = SynthConfig{};
  c.d = 0;
  EXPECT_THROW(c.validate(), InvariantError);
}

}  // namespace
}  // namespace pifr
