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


#ifndef PIFR_DATAIO_HPP_
#define PIFR_DATAIO_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pifr/rsa.hpp"
#include "pifr/setrep.hpp"

namespace pifr {

// Feature container, little-endian, no padding:
//   "PIFR" | version u32 (= 1) | set_count u32
//   per set: identity u32 | N u32 | H u32 | W u32 | D u32 | N*H*W*D f32
// values in n-major, then h, then w, then d order. Unlabeled sets carry
// identity kNoIdentity.
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint32_t kNoIdentity = 0xFFFFFFFFu;

void write_container(const std::vector<FeatureSet>& sets, const std::filesystem::path& path);
std::vector<FeatureSet> read_container(const std::filesystem::path& path);

// Parameter checkpoint, little-endian:
//   "PIFC" | version u32 (= 1) | L u32 | d_e u32 | D u32 | sigma f64
//   | omega^1..omega^L (L x D f64) | psi (d_e x D f64) | phi (d_e x D f64)
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RsaParams params;
  RsaConfig config;
};

void write_checkpoint(const RsaParams& params, const RsaConfig& config, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Synthetic set-recognition task. Each identity has a latent D-vector and
// `variation_rank` smooth spatial basis fields; a clean sample is the latent
// broadcast over the plane plus a random combination of the identity's basis
// fields (amplitude scale variation_gain * noise_sigma) plus white noise of
// scale noise_sigma. A redundancy_rate fraction of each set are near-duplicates
// of a clean in-set sample corrupted by white noise of scale redundancy_noise.
// Set sizes are uniform in [1, n_per_set].
struct SynthConfig {
  std::size_t identities = 40;
  std::size_t sets_per_identity = 4;
  std::size_t n_per_set = 8;
  std::size_t h = 4;
  std::size_t w = 4;
  std::size_t d = 16;
  double noise_sigma = 0.5;
  double redundancy_rate = 0.5;
  double redundancy_noise = 2.0;
  double variation_gain = 2.0;
  std::size_t variation_rank = 2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticData {
  std::vector<FeatureSet> sets;
  // duplicate[s][n] is true when map n of set s is a corrupted near-duplicate.
  std::vector<std::vector<bool>> duplicate;
};

SyntheticData generate_synthetic_with_provenance(const SynthConfig& config);
std::vector<FeatureSet> generate_synthetic(const SynthConfig& config);

}  // namespace pifr

#endif  // PIFR_DATAIO_HPP_
