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


#ifndef PIFR_EVAL_HPP_
#define PIFR_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pifr/dfa.hpp"
#include "pifr/rsa.hpp"
#include "pifr/setrep.hpp"

namespace pifr {

struct ScoredPair {
  double score = 0.0;  // larger is more similar
  bool is_match = false;
};

// Verification scores.
struct ScoreSet {
  std::vector<ScoredPair> pairs;

  std::size_t positives() const noexcept;
  std::size_t negatives() const noexcept;
};

// One probe searched against every gallery entry.
struct ProbeSearch {
  std::vector<double> scores;       // indexed by gallery id
  std::optional<std::size_t> mate;  // gallery id of the true identity, if enrolled
};

struct IdentificationScores {
  std::vector<ProbeSearch> probes;
  std::size_t gallery_size = 0;
};

// Operating points use thresholds placed on negative (non-mated) scores: a
// pair is accepted when score >= t, and t ranges over -inf, every negative
// score, and the value just above the largest negative score. For each target
// the smallest such threshold whose false rate is <= target is used.
std::vector<double> roc_tar_at_far(const ScoreSet& scores, std::span<const double> far_targets);

// Mann-Whitney AUC, ties counted one half.
double auc(const ScoreSet& scores);

// 1-based rank of the mate under the order (score desc, gallery id asc).
std::size_t mate_rank(const ProbeSearch& probe);

// Closed-set CMC at rank k. Throws Error when a probe has no mate.
double cmc_rank_k(const IdentificationScores& scores, std::size_t k);

// Open-set TPIR at each FPIR target: a mated probe counts when its mate is
// rank 1 and its top score passes the threshold; FPIR counts non-mated probes
// whose top score passes. Throws Error without both mated and non-mated probes.
std::vector<double> tpir_at_fpir(const IdentificationScores& scores, std::span<const double> fpir_targets);

enum class Method {
  kPifr,           // RSA + pooling + DFA set similarity
  kPifrSymmetric,  // mean of both coding directions
  kRsaOnly,        // RSA + pooling + distance between set averages
  kMeanL2,         // no RSA, mean pairwise distance
  kAvePool,        // no RSA, distance between set averages
};

std::string to_string(Method method);

struct MatcherConfig {
  Method method = Method::kPifr;
  RsaConfig rsa;
  // Absent parameters mean the identity RSA.
  std::optional<RsaParams> params;
  CodingConfig coding;
};

// Scores set pairs with one configured pipeline.
class Matcher {
 public:
  explicit Matcher(MatcherConfig config);

  const MatcherConfig& config() const noexcept { return config_; }

  // RSA (when the method uses it and parameters are present) followed by pooling.
  PooledSet represent(const FeatureSet& set) const;
  double score(const PooledSet& probe, const PooledSet& gallery) const;
  double score(const FeatureSet& probe, const FeatureSet& gallery) const;

  // scores[p][g] for every probe/gallery combination; gallery dictionaries are
  // built once per gallery entry.
  std::vector<std::vector<double>> score_matrix(const std::vector<PooledSet>& probes,
                                                const std::vector<PooledSet>& gallery,
                                                std::size_t threads = 1) const;

 private:
  MatcherConfig config_;
};

// All unordered set pairs (i < j): probe i against gallery j.
ScoreSet verification_scores(const std::vector<FeatureSet>& sets, const Matcher& matcher, std::size_t threads = 1);

// First set of every identity (storage order) is enrolled, the rest probe.
IdentificationScores closed_set_scores(const std::vector<FeatureSet>& sets, const Matcher& matcher,
                                       std::size_t threads = 1);

// Identities are sorted by label; the first ceil(K / 2) enroll their first
// set, their remaining sets are mated probes, and every set of the other
// identities is a non-mated probe.
IdentificationScores open_set_scores(const std::vector<FeatureSet>& sets, const Matcher& matcher,
                                     std::size_t threads = 1);

// Recomputes the pipeline score under `trials` independent random shuffles of
// the probe's and gallery's element order and returns the largest absolute
// deviation from the unshuffled score.
double permutation_invariance_audit(const FeatureSet& probe, const FeatureSet& gallery, const Matcher& matcher,
                                    std::size_t trials, std::uint64_t seed);

}  // namespace pifr

#endif  // PIFR_EVAL_HPP_
