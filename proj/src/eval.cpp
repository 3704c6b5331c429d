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


#include "pifr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "pifr/error.hpp"

namespace pifr {

std::size_t ScoreSet::positives() const noexcept {
  return static_cast<std::size_t>(std::count_if(pairs.begin(), pairs.end(), [](const ScoredPair& p) { return p.is_match; }));
}

std::size_t ScoreSet::negatives() const noexcept { return pairs.size() - positives(); }

namespace {

void split_scores(const ScoreSet& scores, std::vector<double>& pos, std::vector<double>& neg) {
  for (const ScoredPair& p : scores.pairs) {
    if (!std::isfinite(p.score)) throw InvariantError("ScoreSet: non-finite score");
    (p.is_match ? pos : neg).push_back(p.score);
  }
  if (pos.empty() || neg.empty()) throw Error("metrics need at least one positive and one negative score");
}

// For each target, the accept rate of `accepted` at the smallest threshold
// (from -inf, each rejected score, just above the largest rejected score)
// whose false rate over `rejected` is <= target. Both inputs sorted ascending.
std::vector<double> rates_at_targets(const std::vector<double>& accepted, const std::vector<double>& rejected,
                                     std::span<const double> targets) {
  const auto n_acc = static_cast<double>(accepted.size());
  const auto n_rej = static_cast<double>(rejected.size());
  auto count_at_least = [](const std::vector<double>& sorted, double t) {
    return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  };

  // Candidate thresholds in decreasing order (false rate non-decreasing).
  std::vector<double> thresholds;
  thresholds.push_back(std::nextafter(rejected.back(), std::numeric_limits<double>::infinity()));
  for (auto it = rejected.rbegin(); it != rejected.rend(); ++it)
    if (*it != thresholds.back()) thresholds.push_back(*it);
  thresholds.push_back(-std::numeric_limits<double>::infinity());

  std::vector<double> out;
  out.reserve(targets.size());
  for (double target : targets) {
    double chosen = thresholds.front();
    for (double t : thresholds) {
      if (count_at_least(rejected, t) / n_rej <= target) chosen = t;
      else break;
    }
    out.push_back(count_at_least(accepted, chosen) / n_acc);
  }
  return out;
}

}  // namespace

std::vector<double> roc_tar_at_far(const ScoreSet& scores, std::span<const double> far_targets) {
  std::vector<double> pos, neg;
  split_scores(scores, pos, neg);
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  return rates_at_targets(pos, neg, far_targets);
}

double auc(const ScoreSet& scores) {
  std::vector<double> pos, neg;
  split_scores(scores, pos, neg);
  std::sort(neg.begin(), neg.end());
  double wins = 0.0;
  for (double s : pos) {
    const auto below = std::lower_bound(neg.begin(), neg.end(), s) - neg.begin();
    const auto ties = std::upper_bound(neg.begin(), neg.end(), s) - neg.begin() - below;
    wins += static_cast<double>(below) + 0.5 * static_cast<double>(ties);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::size_t mate_rank(const ProbeSearch& probe) {
  if (!probe.mate) throw Error("mate_rank: probe has no mate");
  const std::size_t mate = *probe.mate;
  if (mate >= probe.scores.size()) throw InvariantError("mate_rank: mate index outside the gallery");
  const double mate_score = probe.scores[mate];
  std::size_t ahead = 0;
  for (std::size_t g = 0; g < probe.scores.size(); ++g) {
    const double s = probe.scores[g];
    if (s > mate_score || (s == mate_score && g < mate)) ++ahead;
  }
  return ahead + 1;
}

double cmc_rank_k(const IdentificationScores& scores, std::size_t k) {
  if (scores.probes.empty()) throw Error("cmc_rank_k: no probes");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.probes.size(); ++i) {
    const ProbeSearch& probe = scores.probes[i];
    if (!probe.mate) throw Error("cmc_rank_k: probe " + std::to_string(i) + " has no mate (closed-set required)");
    if (mate_rank(probe) <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.probes.size());
}

std::vector<double> tpir_at_fpir(const IdentificationScores& scores, std::span<const double> fpir_targets) {
  // Mated probes contribute their top score when the mate is rank 1, and can
  // never be accepted otherwise (-inf).
  std::vector<double> mated, non_mated;
  for (const ProbeSearch& probe : scores.probes) {
    if (probe.scores.empty()) throw InvariantError("tpir_at_fpir: empty gallery");
    const double top = *std::max_element(probe.scores.begin(), probe.scores.end());
    if (!probe.mate) {
      non_mated.push_back(top);
    } else {
      mated.push_back(mate_rank(probe) == 1 ? top : -std::numeric_limits<double>::infinity());
    }
  }
  if (non_mated.empty()) throw Error("tpir_at_fpir: open-set evaluation needs non-mated probes");
  if (mated.empty()) throw Error("tpir_at_fpir: open-set evaluation needs mated probes");
  std::sort(mated.begin(), mated.end());
  std::sort(non_mated.begin(), non_mated.end());
  std::vector<double> out = rates_at_targets(mated, non_mated, fpir_targets);
  // The -inf threshold must not admit mated probes that missed rank 1.
  const double misses = static_cast<double>(std::count(mated.begin(), mated.end(), -std::numeric_limits<double>::infinity()));
  const double rank1 = (static_cast<double>(mated.size()) - misses) / static_cast<double>(mated.size());
  for (double& v : out) v = std::min(v, rank1);
  return out;
}

std::string to_string(Method method) {
  switch (method) {
    case Method::kPifr: return "pifr";
    case Method::kPifrSymmetric: return "pifr-sym";
    case Method::kRsaOnly: return "rsa-only";
    case Method::kMeanL2: return "meanl2";
    case Method::kAvePool: return "avepool";
  }
  return "unknown";
}

Matcher::Matcher(MatcherConfig config) : config_(std::move(config)) {
  config_.rsa.validate();
  config_.coding.validate();
  if (config_.params) config_.params->validate();
}

PooledSet Matcher::represent(const FeatureSet& set) const {
  const bool uses_rsa = config_.method == Method::kPifr || config_.method == Method::kPifrSymmetric ||
                        config_.method == Method::kRsaOnly;
  if (uses_rsa && config_.params) return pool_set(rsa_apply(set, *config_.params, config_.rsa));
  return pool_set(set);
}

double Matcher::score(const PooledSet& probe, const PooledSet& gallery) const {
  switch (config_.method) {
    case Method::kPifr: return set_similarity(probe, gallery, config_.coding);
    case Method::kPifrSymmetric: return symmetric_similarity(probe, gallery, config_.coding);
    case Method::kRsaOnly:
    case Method::kAvePool: return baseline_avepool(probe, gallery, config_.coding.reduction);
    case Method::kMeanL2: return baseline_mean_l2(probe, gallery, config_.coding.reduction);
  }
  throw Error("Matcher: unknown method");
}

double Matcher::score(const FeatureSet& probe, const FeatureSet& gallery) const {
  return score(represent(probe), represent(gallery));
}

std::vector<std::vector<double>> Matcher::score_matrix(const std::vector<PooledSet>& probes,
                                                       const std::vector<PooledSet>& gallery,
                                                       std::size_t threads) const {
  std::vector<std::vector<double>> out(probes.size(), std::vector<double>(gallery.size()));
  if (config_.method == Method::kPifr) {
    std::vector<std::optional<GalleryDictionary>> dicts(gallery.size());
    parallel_for(gallery.size(), threads, [&](std::size_t g) { dicts[g].emplace(gallery[g], config_.coding); });
    parallel_for(probes.size(), threads, [&](std::size_t p) {
      for (std::size_t g = 0; g < gallery.size(); ++g) out[p][g] = set_similarity(probes[p], *dicts[g]);
    });
    return out;
  }
  parallel_for(probes.size(), threads, [&](std::size_t p) {
    for (std::size_t g = 0; g < gallery.size(); ++g) out[p][g] = score(probes[p], gallery[g]);
  });
  return out;
}

namespace {

std::vector<PooledSet> represent_all(const std::vector<FeatureSet>& sets, const Matcher& matcher,
                                     std::size_t threads) {
  std::vector<PooledSet> reps(sets.size());
  parallel_for(sets.size(), threads, [&](std::size_t i) { reps[i] = matcher.represent(sets[i]); });
  return reps;
}

std::uint32_t label_of(const FeatureSet& set, std::size_t index) {
  if (!set.identity) throw InvariantError("evaluation: set " + std::to_string(index) + " has no identity label");
  return *set.identity;
}

}  // namespace

ScoreSet verification_scores(const std::vector<FeatureSet>& sets, const Matcher& matcher, std::size_t threads) {
  const std::vector<PooledSet> reps = represent_all(sets, matcher, threads);
  std::vector<std::uint32_t> labels(sets.size());
  for (std::size_t i = 0; i < sets.size(); ++i) labels[i] = label_of(sets[i], i);

  // Row i holds the scores of probe i against every gallery j > i.
  std::vector<std::vector<double>> rows(sets.size());
  const bool dfa = matcher.config().method == Method::kPifr;
  std::vector<std::optional<GalleryDictionary>> dicts(dfa ? sets.size() : 0);
  if (dfa) parallel_for(sets.size(), threads, [&](std::size_t j) { dicts[j].emplace(reps[j], matcher.config().coding); });
  parallel_for(sets.size(), threads, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < sets.size(); ++j)
      rows[i].push_back(dfa ? set_similarity(reps[i], *dicts[j]) : matcher.score(reps[i], reps[j]));
  });

  ScoreSet out;
  for (std::size_t i = 0; i < sets.size(); ++i)
    for (std::size_t j = i + 1; j < sets.size(); ++j)
      out.pairs.push_back({rows[i][j - i - 1], labels[i] == labels[j]});
  return out;
}

namespace {

IdentificationScores search(const std::vector<FeatureSet>& sets, const std::vector<std::size_t>& gallery_sets,
                            const std::vector<std::size_t>& probe_sets, const Matcher& matcher,
                            std::size_t threads) {
  std::map<std::uint32_t, std::size_t> enrolled;
  std::vector<FeatureSet> gallery, probes;
  for (std::size_t g = 0; g < gallery_sets.size(); ++g) {
    enrolled[label_of(sets[gallery_sets[g]], gallery_sets[g])] = g;
    gallery.push_back(sets[gallery_sets[g]]);
  }
  for (std::size_t p : probe_sets) probes.push_back(sets[p]);
  const auto matrix = matcher.score_matrix(represent_all(probes, matcher, threads),
                                           represent_all(gallery, matcher, threads), threads);
  IdentificationScores out;
  out.gallery_size = gallery.size();
  for (std::size_t p = 0; p < probes.size(); ++p) {
    ProbeSearch probe;
    probe.scores = matrix[p];
    const auto it = enrolled.find(label_of(probes[p], probe_sets[p]));
    if (it != enrolled.end()) probe.mate = it->second;
    out.probes.push_back(std::move(probe));
  }
  return out;
}

}  // namespace

IdentificationScores closed_set_scores(const std::vector<FeatureSet>& sets, const Matcher& matcher,
                                       std::size_t threads) {
  std::map<std::uint32_t, bool> seen;
  std::vector<std::size_t> gallery, probes;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (seen.emplace(label_of(sets[i], i), true).second) gallery.push_back(i);
    else probes.push_back(i);
  }
  if (gallery.size() < 2) throw Error("closed-set identification needs at least 2 identities");
  if (probes.empty()) throw Error("closed-set identification needs identities with more than one set");
  return search(sets, gallery, probes, matcher, threads);
}

IdentificationScores open_set_scores(const std::vector<FeatureSet>& sets, const Matcher& matcher,
                                     std::size_t threads) {
  std::map<std::uint32_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sets.size(); ++i) groups[label_of(sets[i], i)].push_back(i);
  if (groups.size() < 2) throw Error("open-set identification needs at least 2 identities");
  const std::size_t enrolled = (groups.size() + 1) / 2;
  std::vector<std::size_t> gallery, probes;
  std::size_t rank = 0;
  for (const auto& [label, members] : groups) {
    if (rank++ < enrolled) {
      gallery.push_back(members.front());
      probes.insert(probes.end(), members.begin() + 1, members.end());
    } else {
      probes.insert(probes.end(), members.begin(), members.end());
    }
  }
  return search(sets, gallery, probes, matcher, threads);
}

double permutation_invariance_audit(const FeatureSet& probe, const FeatureSet& gallery, const Matcher& matcher,
                                    std::size_t trials, std::uint64_t seed) {
  const double reference = matcher.score(probe, gallery);
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::vector<std::size_t> probe_order(probe.size()), gallery_order(gallery.size());
  for (std::size_t t = 0; t < trials; ++t) {
    std::iota(probe_order.begin(), probe_order.end(), std::size_t{0});
    std::iota(gallery_order.begin(), gallery_order.end(), std::size_t{0});
    std::shuffle(probe_order.begin(), probe_order.end(), rng);
    std::shuffle(gallery_order.begin(), gallery_order.end(), rng);
    const double shuffled = matcher.score(permuted(probe, probe_order), permuted(gallery, gallery_order));
    worst = std::max(worst, std::abs(shuffled - reference));
  }
  return worst;
}

}  // namespace pifr
