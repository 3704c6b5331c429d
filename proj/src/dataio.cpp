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

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include "pifr/error.hpp"

namespace pifr {

namespace {

class ByteWriter {
 public:
  void bytes(const char* data, std::size_t n) { buffer_.insert(buffer_.end(), data, data + n); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buffer_.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open " + path.string() + " for writing");
    out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out) throw FormatError(FormatError::Kind::kIo, "write failed for " + path.string());
  }

 private:
  std::vector<char> buffer_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::filesystem::path& path) : path_(path.string()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open " + path_);
    buffer_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::size_t remaining() const noexcept { return buffer_.size() - pos_; }

  void take(char* out, std::size_t n, const char* what) {
    if (remaining() < n) {
      std::ostringstream msg;
      msg << path_ << ": truncated while reading " << what << " at byte " << pos_;
      throw FormatError(FormatError::Kind::kTruncated, msg.str());
    }
    std::memcpy(out, buffer_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> b{};
    take(reinterpret_cast<char*>(b.data()), 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }
  std::uint64_t u64(const char* what) {
    const std::uint64_t lo = u32(what);
    const std::uint64_t hi = u32(what);
    return lo | (hi << 32);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  std::vector<char> buffer_;
  std::size_t pos_ = 0;
};

std::uint32_t to_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw InvariantError(std::string(what) + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

void expect_magic(ByteReader& in, const char (&magic)[5]) {
  std::array<char, 4> got{};
  in.take(got.data(), 4, "magic");
  if (std::memcmp(got.data(), magic, 4) != 0)
    throw FormatError(FormatError::Kind::kBadMagic, in.path() + ": bad magic, expected " + magic);
}

void expect_version(ByteReader& in, std::uint32_t expected) {
  const std::uint32_t version = in.u32("version");
  if (version != expected) {
    std::ostringstream msg;
    msg << in.path() << ": unsupported version " << version << " (expected " << expected << ")";
    throw FormatError(FormatError::Kind::kBadVersion, msg.str());
  }
}

}  // namespace

void write_container(const std::vector<FeatureSet>& sets, const std::filesystem::path& path) {
  ByteWriter out;
  out.bytes("PIFR", 4);
  out.u32(kContainerVersion);
  out.u32(to_u32(sets.size(), "set count"));
  for (const FeatureSet& set : sets) {
    set.validate();
    if (set.identity && *set.identity == kNoIdentity)
      throw InvariantError("identity 0xFFFFFFFF is reserved for unlabeled sets");
    const FeatureMap& shape = set.front();
    out.u32(set.identity.value_or(kNoIdentity));
    out.u32(to_u32(set.size(), "N"));
    out.u32(to_u32(shape.h(), "H"));
    out.u32(to_u32(shape.w(), "W"));
    out.u32(to_u32(shape.d(), "D"));
    for (const FeatureMap& map : set.maps) {
      for (double v : map.values()) {
        const auto narrowed = static_cast<float>(v);
        if (!std::isfinite(narrowed)) throw InvariantError("write_container: value overflows f32");
        out.f32(narrowed);
      }
    }
  }
  out.save(path);
}

std::vector<FeatureSet> read_container(const std::filesystem::path& path) {
  ByteReader in(path);
  expect_magic(in, "PIFR");
  expect_version(in, kContainerVersion);
  const std::uint32_t count = in.u32("set count");
  std::vector<FeatureSet> sets;
  sets.reserve(std::min<std::size_t>(count, 1u << 16));
  for (std::uint32_t s = 0; s < count; ++s) {
    FeatureSet set;
    const std::uint32_t identity = in.u32("identity");
    if (identity != kNoIdentity) set.identity = identity;
    const std::size_t n = in.u32("N");
    const std::size_t h = in.u32("H");
    const std::size_t w = in.u32("W");
    const std::size_t d = in.u32("D");
    if (n == 0 || h == 0 || w == 0 || d == 0) {
      std::ostringstream msg;
      msg << in.path() << ": set " << s << " has a zero dimension";
      throw FormatError(FormatError::Kind::kShape, msg.str());
    }
    const std::size_t per_map = h * w * d;
    if (in.remaining() / 4 / per_map < n) {
      std::ostringstream msg;
      msg << in.path() << ": truncated in set " << s;
      throw FormatError(FormatError::Kind::kTruncated, msg.str());
    }
    set.maps.reserve(n);
    for (std::size_t m = 0; m < n; ++m) {
      std::vector<double> values(per_map);
      for (double& v : values) {
        v = in.f32("value");
        if (!std::isfinite(v)) {
          std::ostringstream msg;
          msg << in.path() << ": non-finite value in set " << s << ", map " << m;
          throw FormatError(FormatError::Kind::kNonFinite, msg.str());
        }
      }
      set.maps.emplace_back(h, w, d, std::move(values));
    }
    sets.push_back(std::move(set));
  }
  if (in.remaining() != 0)
    throw FormatError(FormatError::Kind::kShape, in.path() + ": trailing bytes after the last set");
  return sets;
}

void write_checkpoint(const RsaParams& params, const RsaConfig& config, const std::filesystem::path& path) {
  params.validate();
  config.validate();
  ByteWriter out;
  out.bytes("PIFC", 4);
  out.u32(kCheckpointVersion);
  out.u32(to_u32(params.blocks(), "L"));
  out.u32(to_u32(params.embed_dim(), "d_e"));
  out.u32(to_u32(params.dim(), "D"));
  out.f64(config.sigma);
  for (double v : params.flatten()) out.f64(v);
  out.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  ByteReader in(path);
  expect_magic(in, "PIFC");
  expect_version(in, kCheckpointVersion);
  const std::size_t blocks = in.u32("L");
  const std::size_t embed_dim = in.u32("d_e");
  const std::size_t dim = in.u32("D");
  const double sigma = in.f64("sigma");
  if (blocks == 0 || embed_dim == 0 || dim == 0 || !(sigma > 0.0) || !std::isfinite(sigma))
    throw FormatError(FormatError::Kind::kShape, in.path() + ": invalid checkpoint header");
  const std::size_t expected = (blocks * dim + 2 * embed_dim * dim) * 8;
  if (in.remaining() < expected)
    throw FormatError(FormatError::Kind::kTruncated, in.path() + ": checkpoint body is truncated");
  if (in.remaining() > expected)
    throw FormatError(FormatError::Kind::kShape, in.path() + ": checkpoint body is longer than its header declares");

  Checkpoint ckpt;
  ckpt.config.blocks = blocks;
  ckpt.config.embed_dim = embed_dim;
  ckpt.config.sigma = sigma;
  ckpt.params = zero_params(blocks, embed_dim, dim);
  DenseVector flat(expected / 8);
  for (double& v : flat) {
    v = in.f64("parameter");
    if (!std::isfinite(v)) throw FormatError(FormatError::Kind::kNonFinite, in.path() + ": non-finite parameter");
  }
  ckpt.params.assign_flat(flat);
  return ckpt;
}

void SynthConfig::validate() const {
  if (identities == 0 || sets_per_identity == 0 || n_per_set == 0 || h == 0 || w == 0 || d == 0)
    throw InvariantError("SynthConfig: counts and dimensions must be >= 1");
  if (!(redundancy_rate >= 0.0 && redundancy_rate <= 1.0))
    throw InvariantError("SynthConfig: redundancy_rate must lie in [0, 1]");
  if (!(noise_sigma >= 0.0) || !(redundancy_noise >= 0.0) || !(variation_gain >= 0.0))
    throw InvariantError("SynthConfig: noise scales must be >= 0");
}

SyntheticData generate_synthetic_with_provenance(const SynthConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> set_size(1, config.n_per_set);

  const std::size_t plane = config.h * config.w;
  const std::size_t d = config.d;
  auto coord = [](std::size_t i, std::size_t extent) {
    return extent > 1 ? static_cast<double>(i) / static_cast<double>(extent - 1) - 0.5 : 0.0;
  };

  SyntheticData data;
  for (std::size_t id = 0; id < config.identities; ++id) {
    DenseVector latent(d);
    for (double& v : latent) v = normal(rng);
    // Per identity: rank x {constant, vertical, horizontal} basis fields.
    std::vector<std::array<DenseVector, 3>> basis(config.variation_rank);
    for (auto& field : basis)
      for (auto& component : field) {
        component.resize(d);
        for (double& v : component) v = normal(rng);
      }

    for (std::size_t s = 0; s < config.sets_per_identity; ++s) {
      const std::size_t size = set_size(rng);
      const auto duplicates = static_cast<std::size_t>(std::floor(config.redundancy_rate * static_cast<double>(size) + 1e-9));
      const std::size_t clean = size - duplicates;

      std::vector<FeatureMap> sources;
      for (std::size_t k = 0; k < std::max<std::size_t>(clean, 1); ++k) {
        FeatureMap map(config.h, config.w, d);
        std::vector<double> amplitude(config.variation_rank);
        for (double& a : amplitude) a = normal(rng) * config.variation_gain * config.noise_sigma;
        for (std::size_t p = 0; p < plane; ++p) {
          const double y = coord(p / config.w, config.h);
          const double x = coord(p % config.w, config.w);
          auto out = map.position(p);
          for (std::size_t c = 0; c < d; ++c) {
            double v = latent[c];
            for (std::size_t q = 0; q < config.variation_rank; ++q)
              v += amplitude[q] * (basis[q][0][c] + basis[q][1][c] * y + basis[q][2][c] * x);
            out[c] = v + config.noise_sigma * normal(rng);
          }
        }
        sources.push_back(std::move(map));
      }

      FeatureSet set;
      set.identity = static_cast<std::uint32_t>(id);
      std::vector<bool> flags;
      for (std::size_t k = 0; k < clean; ++k) {
        set.maps.push_back(sources[k]);
        flags.push_back(false);
      }
      for (std::size_t k = 0; k < duplicates; ++k) {
        const std::size_t source = std::uniform_int_distribution<std::size_t>(0, sources.size() - 1)(rng);
        FeatureMap map = sources[source];
        for (double& v : map.values()) v += config.redundancy_noise * normal(rng);
        set.maps.push_back(std::move(map));
        flags.push_back(true);
      }
      std::vector<std::size_t> order(set.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      FeatureSet shuffled = permuted(set, order);
      std::vector<bool> shuffled_flags(order.size());
      for (std::size_t k = 0; k < order.size(); ++k) shuffled_flags[k] = flags[order[k]];
      data.sets.push_back(std::move(shuffled));
      data.duplicate.push_back(std::move(shuffled_flags));
    }
  }
  return data;
}

std::vector<FeatureSet> generate_synthetic(const SynthConfig& config) {
  return generate_synthetic_with_provenance(config).sets;
}

}  // namespace pifr
