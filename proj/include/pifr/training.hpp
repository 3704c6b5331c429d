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


#ifndef PIFR_TRAINING_HPP_
#define PIFR_TRAINING_HPP_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <random>
#include <vector>

#include "pifr/dfa.hpp"
#include "pifr/numerics.hpp"
#include "pifr/rsa.hpp"
#include "pifr/setrep.hpp"

namespace pifr {

// +1 when probe and gallery share an identity, -1 otherwise.
class PairLabel {
 public:
  static PairLabel same() { return PairLabel(1); }
  static PairLabel different() { return PairLabel(-1); }
  static PairLabel from_match(bool match) { return match ? same() : different(); }

  int alpha() const noexcept { return alpha_; }
  bool is_match() const noexcept { return alpha_ > 0; }

  friend bool operator==(PairLabel, PairLabel) = default;

 private:
  explicit PairLabel(int alpha) : alpha_(alpha) {}
  int alpha_;
};

struct TrainConfig {
  double lr = 3e-4;
  std::size_t epochs = 10;
  std::size_t pairs_per_epoch = 64;
  double margin = 1.0;
  std::uint64_t seed = 1;
  CodingConfig coding;
  std::size_t level1_epochs = 10;
  // Lower bound on the negative-pair reconstruction term (alpha = -1).
  double recon_clamp = 10.0;
  // Abort when more than this fraction of pairs fail to code.
  double max_failure_fraction = 0.1;
  std::size_t threads = 1;

  void validate() const;
};

// (alpha / N) |X - Y A|_F^2 + lambda / (N M) * penalty(A); A is M x N and
// penalty is the entrywise l1 sum (p = 1) or squared Frobenius norm (p = 2).
double pifr_loss(const PooledSet& probe, const PooledSet& gallery, const DenseMatrix& a, PairLabel label,
                 double lambda, int p);

// Gradients of pifr_loss with A held fixed; rows follow probe / gallery elements.
struct PooledGradients {
  DenseMatrix probe;    // N x D
  DenseMatrix gallery;  // M x D
};
PooledGradients loss_grad_pooled(const PooledSet& probe, const PooledSet& gallery, const DenseMatrix& a,
                                 PairLabel label);

// Broadcasts pooled gradients back over the H x W plane (each position gets 1/(H W)).
FeatureSet unpool_gradient(const DenseMatrix& pooled_grad, const FeatureSet& like);

// Sorts a set's maps into canonical order.
FeatureSet canonicalized(const FeatureSet& set);

struct TrainingPair {
  FeatureSet probe;
  FeatureSet gallery;
  PairLabel label = PairLabel::same();
};

// Alternates positive and negative pairs, starting with a positive one.
// Positives use two sets of one identity, or two disjoint random halves of a
// single set when the identity has only one. Requires >= 2 identities.
std::vector<TrainingPair> sample_pairs(const std::vector<FeatureSet>& sets, std::size_t count,
                                       std::mt19937_64& rng);

// Level-2 objective for one pair. The reconstruction term of negative pairs
// is clamped below at -clamp (gradient zero when clamped).
struct Level2Step {
  double loss = 0.0;
  bool clamped = false;
  CodingMatrix codes;
  RsaGradients grads;
};

// Solves the codes with parameters frozen (or uses `frozen_codes`), then
// differentiates the loss with the codes frozen.
Level2Step level2_step(const TrainingPair& pair, const RsaParams& params, const RsaConfig& rsa,
                       const TrainConfig& config, const CodingMatrix* frozen_codes = nullptr);
double level2_objective(const TrainingPair& pair, const RsaParams& params, const RsaConfig& rsa,
                        const TrainConfig& config, const CodingMatrix& frozen_codes);

struct ClassifierHead {
  DenseMatrix weights;                // K x D
  DenseVector bias;                   // K
  std::vector<std::uint32_t> labels;  // class index -> identity
};

struct Level1Result {
  RsaParams params;
  ClassifierHead head;
  std::vector<double> loss_history;  // mean cross-entropy per epoch
};

// RSA -> global pool -> set average -> linear -> softmax cross-entropy, SGD
// on both the RSA parameters and the head. Throws Error with < 2 identities.
Level1Result level1_pretrain(const std::vector<FeatureSet>& sets, const RsaParams& params, const RsaConfig& rsa,
                             const TrainConfig& config, std::ostream* log = nullptr);

// Mean cross-entropy of the current model over `sets`.
double classification_loss(const std::vector<FeatureSet>& sets, const RsaParams& params, const RsaConfig& rsa,
                           const ClassifierHead& head);

// Margin contrastive loss on set descriptors: d^2 for positives,
// max(0, margin - d)^2 for negatives.
double contrastive_loss(const SetDescriptor& probe, const SetDescriptor& gallery, PairLabel label, double margin);

struct ContrastiveResult {
  RsaParams params;
  std::vector<double> loss_history;
};

ContrastiveResult contrastive_pretrain(const std::vector<FeatureSet>& sets, const RsaParams& params,
                                       const RsaConfig& rsa, const TrainConfig& config,
                                       std::ostream* log = nullptr);

struct BilevelResult {
  RsaParams params;
  std::vector<double> loss_trace;        // mean training loss per epoch
  std::vector<double> validation_trace;  // mean validation loss after each epoch
  double validation_initial = std::numeric_limits<double>::quiet_NaN();
  std::size_t failures = 0;
  std::size_t pairs_used = 0;
};

// Mean level-2 loss over `pairs`, codes re-solved at `params`.
double level2_validation_loss(const std::vector<TrainingPair>& pairs, const RsaParams& params,
                              const RsaConfig& rsa, const TrainConfig& config);

BilevelResult bilevel_train(const std::vector<FeatureSet>& sets, const RsaParams& params, const RsaConfig& rsa,
                            const TrainConfig& config, const std::vector<TrainingPair>* validation = nullptr,
                            std::ostream* log = nullptr);

}  // namespace pifr

#endif  // PIFR_TRAINING_HPP_
