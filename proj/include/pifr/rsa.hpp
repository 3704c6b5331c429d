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


#ifndef PIFR_RSA_HPP_
#define PIFR_RSA_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "pifr/numerics.hpp"
#include "pifr/setrep.hpp"

namespace pifr {

struct RsaConfig {
  std::size_t blocks = 5;
  // 0 selects max(1, D / 2).
  std::size_t embed_dim = 0;
  // Bandwidth of the spatial Gaussian similarity exp(-|hw_i - hw_j|^2 / sigma).
  double sigma = 0.5;
  // Map plane coordinates to [0, 1]^2 before computing spatial similarity.
  bool coord_normalization = true;
  // Subtract each row's maximum logit before exponentiating the affinity.
  // The forward output is invariant to this; disabling it is diagnostic only.
  bool stabilize_logits = true;
  Reduction reduction = Reduction::kCanonical;
  // Embedding entries start uniform in [-init_scale / sqrt(D), init_scale / sqrt(D)].
  double init_scale = 0.5;

  std::size_t resolved_embed_dim(std::size_t dim) const noexcept {
    if (embed_dim != 0) return embed_dim;
    return dim / 2 == 0 ? 1 : dim / 2;
  }
  // Throws InvariantError when blocks == 0, sigma <= 0 or init_scale < 0.
  void validate() const;
};

// Learnable parameters: one channel gate per block plus the two embeddings
// (embed_dim x D) that define the pairwise affinity.
struct RsaParams {
  std::vector<DenseVector> omega;
  DenseMatrix psi;
  DenseMatrix phi;

  std::size_t blocks() const noexcept { return omega.size(); }
  std::size_t dim() const noexcept { return psi.cols(); }
  std::size_t embed_dim() const noexcept { return psi.rows(); }

  void validate() const;

  // Flat view in the order omega^1..omega^L, psi, phi (row-major).
  DenseVector flatten() const;
  void assign_flat(std::span<const double> flat);

  friend bool operator==(const RsaParams&, const RsaParams&) = default;
};

// Gates start at zero (identity stack). Psi is drawn uniformly and Phi starts
// as a copy of it, so psi^T phi is positive semi-definite at initialization
// and the affinity favors similar position-vectors.
RsaParams initialize_params(const RsaConfig& config, std::size_t dim, std::uint64_t seed);
RsaParams zero_params(std::size_t blocks, std::size_t embed_dim, std::size_t dim);

// Same layout as RsaParams.
using RsaGradients = RsaParams;

// In-place SGD step: params -= lr * grads.
void sgd_update(RsaParams& params, const RsaGradients& grads, double lr);
void accumulate(RsaGradients& into, const RsaGradients& grads);

// Spatial similarity over all N*H*W position-vectors (index n * H * W + p).
DenseMatrix build_spatial_delta(std::size_t h, std::size_t w, std::size_t n, const RsaConfig& config);

// Pairwise quantities shared by every block of one forward pass. Indices run
// over position-vectors i = n * H * W + p in the order of the input set.
struct AffinityCache {
  std::size_t plane = 0;      // H * W
  std::size_t positions = 0;  // N * H * W
  DenseMatrix omega;          // positions x positions, embedded-Gaussian affinity
  DenseMatrix plane_delta;    // plane x plane spatial similarity
  DenseVector norm;           // C_i, self term excluded
  DenseMatrix psi_embed;      // positions x embed_dim
  DenseMatrix phi_embed;      // positions x embed_dim
  bool degenerate = false;    // single position-vector: C is an empty sum

  double delta(std::size_t i, std::size_t j) const { return plane_delta(i % plane, j % plane); }
};

AffinityCache build_affinity(const FeatureSet& x0, const RsaParams& params, const RsaConfig& config);

// Everything rsa_backward needs, laid out in canonical element order.
struct RsaTape {
  std::vector<std::size_t> order;  // canonical position k -> input element order[k]
  std::size_t set_size = 0;
  std::size_t h = 0, w = 0, d = 0;
  AffinityCache affinity;
  DenseMatrix weights;              // W_ij / C_i, zero diagonal
  std::vector<DenseMatrix> inputs;  // block inputs x^{l-1}, positions x D
  DenseMatrix x0;
  RsaParams params;
};

struct RsaForward {
  FeatureSet output;
  RsaTape tape;
};

RsaForward rsa_forward(const FeatureSet& x0, const RsaParams& params, const RsaConfig& config);

// Forward pass without recording a tape.
FeatureSet rsa_apply(const FeatureSet& x0, const RsaParams& params, const RsaConfig& config);

struct RsaBackward {
  RsaGradients grads;
  FeatureSet input_grad;  // d loss / d x^0, diagnostic
};

// `upstream` holds d loss / d X^L in the element order of the forward input.
RsaBackward rsa_backward(const RsaTape& tape, const FeatureSet& upstream);

}  // namespace pifr

#endif  // PIFR_RSA_HPP_
