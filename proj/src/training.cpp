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


#include "pifr/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "pifr/error.hpp"

namespace pifr {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvariantError("TrainConfig: lr must be finite and >= 0");
  if (!(margin > 0.0)) throw InvariantError("TrainConfig: margin must be > 0");
  if (!(recon_clamp > 0.0)) throw InvariantError("TrainConfig: recon_clamp must be > 0");
  if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0))
    throw InvariantError("TrainConfig: max_failure_fraction must lie in [0, 1]");
  coding.validate();
}

namespace {

// Non-finite features or parameters during SGD mean the step size is too
// large for the data scale.
[[noreturn]] void report_divergence(const char* stage, std::size_t epoch, const std::exception& cause) {
  std::ostringstream msg;
  msg << stage << " training diverged in epoch " << epoch + 1 << " (" << cause.what()
      << "); lower the learning rate";
  throw Error(msg.str());
}

RsaForward guarded_forward(const FeatureSet& set, const RsaParams& params, const RsaConfig& rsa, const char* stage,
                           std::size_t epoch) {
  try {
    return rsa_forward(set, params, rsa);
  } catch (const InvariantError& e) {
    report_divergence(stage, epoch, e);
  }
}

void guarded_update(RsaParams& params, const RsaGradients& grads, double lr, const char* stage, std::size_t epoch) {
  sgd_update(params, grads, lr);
  try {
    params.validate();
  } catch (const InvariantError& e) {
    report_divergence(stage, epoch, e);
  }
}


void check_coding_shapes(const PooledSet& probe, const PooledSet& gallery, const DenseMatrix& a) {
  if (probe.dim() != gallery.dim()) throw DimensionError("probe and gallery D differ");
  if (a.rows() != gallery.size() || a.cols() != probe.size()) {
    std::ostringstream msg;
    msg << "coding matrix is " << a.rows() << "x" << a.cols() << ", expected " << gallery.size() << "x"
        << probe.size();
    throw DimensionError(msg.str());
  }
}

// Row n = x_n - sum_m A(m, n) y_m.
DenseMatrix reconstruction_residual(const PooledSet& probe, const PooledSet& gallery, const DenseMatrix& a) {
  check_coding_shapes(probe, gallery, a);
  DenseMatrix r = probe.vectors;
  for (std::size_t n = 0; n < probe.size(); ++n) {
    auto row = r.row(n);
    for (std::size_t m = 0; m < gallery.size(); ++m) {
      const double coef = a(m, n);
      auto y = gallery.vector(m);
      for (std::size_t c = 0; c < row.size(); ++c) row[c] -= coef * y[c];
    }
  }
  return r;
}

struct LossTerms {
  double reconstruction = 0.0;
  double penalty = 0.0;
  bool clamped = false;
};

LossTerms loss_terms(const PooledSet& probe, const PooledSet& gallery, const DenseMatrix& a, PairLabel label,
                     double lambda, int p, double clamp) {
  const DenseMatrix r = reconstruction_residual(probe, gallery, a);
  const auto n = static_cast<double>(probe.size());
  const auto m = static_cast<double>(gallery.size());
  LossTerms terms;
  terms.reconstruction = label.alpha() * squared_norm(r.data()) / n;
  if (terms.reconstruction < -clamp) {
    terms.reconstruction = -clamp;
    terms.clamped = true;
  }
  terms.penalty = lambda / (n * m) * coding_penalty(a.data(), p);
  return terms;
}

}  // namespace

double pifr_loss(const PooledSet& probe, const PooledSet& gallery, const DenseMatrix& a, PairLabel label,
                 double lambda, int p) {
  const LossTerms terms =
      loss_terms(probe, gallery, a, label, lambda, p, std::numeric_limits<double>::infinity());
  return terms.reconstruction + terms.penalty;
}

PooledGradients loss_grad_pooled(const PooledSet& probe, const PooledSet& gallery, const DenseMatrix& a,
                                 PairLabel label) {
  const DenseMatrix r = reconstruction_residual(probe, gallery, a);
  const double scale = 2.0 * label.alpha() / static_cast<double>(probe.size());
  PooledGradients grads{DenseMatrix(probe.size(), probe.dim()), DenseMatrix(gallery.size(), gallery.dim())};
  for (std::size_t n = 0; n < probe.size(); ++n) {
    auto out = grads.probe.row(n);
    auto rn = r.row(n);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = scale * rn[c];
  }
  for (std::size_t m = 0; m < gallery.size(); ++m) {
    auto out = grads.gallery.row(m);
    for (std::size_t n = 0; n < probe.size(); ++n) {
      const double coef = -scale * a(m, n);
      auto rn = r.row(n);
      for (std::size_t c = 0; c < out.size(); ++c) out[c] += coef * rn[c];
    }
  }
  return grads;
}

FeatureSet unpool_gradient(const DenseMatrix& pooled_grad, const FeatureSet& like) {
  if (pooled_grad.rows() != like.size() || pooled_grad.cols() != like.front().d())
    throw DimensionError("unpool_gradient: shape mismatch");
  FeatureSet out;
  out.identity = like.identity;
  out.maps.reserve(like.size());
  const FeatureMap& shape = like.front();
  const double inv = 1.0 / static_cast<double>(shape.positions());
  for (std::size_t n = 0; n < like.size(); ++n) {
    FeatureMap map(shape.h(), shape.w(), shape.d());
    auto g = pooled_grad.row(n);
    for (std::size_t p = 0; p < shape.positions(); ++p) {
      auto dst = map.position(p);
      for (std::size_t c = 0; c < shape.d(); ++c) dst[c] = g[c] * inv;
    }
    out.maps.push_back(std::move(map));
  }
  return out;
}

FeatureSet canonicalized(const FeatureSet& set) { return permuted(set, canonical_order(set)); }

namespace {

struct IdentityIndex {
  std::vector<std::uint32_t> labels;                  // sorted distinct identities
  std::vector<std::vector<std::size_t>> sets_of;      // per identity, set indices
};

IdentityIndex index_identities(const std::vector<FeatureSet>& sets) {
  std::map<std::uint32_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (!sets[i].identity) throw InvariantError("training: set " + std::to_string(i) + " has no identity label");
    groups[*sets[i].identity].push_back(i);
  }
  IdentityIndex index;
  for (auto& [label, members] : groups) {
    index.labels.push_back(label);
    index.sets_of.push_back(std::move(members));
  }
  return index;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t count) {
  return std::uniform_int_distribution<std::size_t>(0, count - 1)(rng);
}

}  // namespace

std::vector<TrainingPair> sample_pairs(const std::vector<FeatureSet>& sets, std::size_t count,
                                       std::mt19937_64& rng) {
  const IdentityIndex index = index_identities(sets);
  if (index.labels.size() < 2) throw Error("pair sampling needs at least 2 identities");
  std::vector<std::size_t> positive_capable;
  for (std::size_t k = 0; k < index.labels.size(); ++k) {
    const auto& members = index.sets_of[k];
    const bool splittable = std::any_of(members.begin(), members.end(), [&](std::size_t i) { return sets[i].size() >= 2; });
    if (members.size() >= 2 || splittable) positive_capable.push_back(k);
  }
  if (positive_capable.empty()) throw Error("pair sampling: no identity can form a positive pair");

  std::vector<TrainingPair> pairs;
  pairs.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    TrainingPair pair;
    if (t % 2 == 0) {
      const auto& members = index.sets_of[positive_capable[uniform_index(rng, positive_capable.size())]];
      if (members.size() >= 2) {
        const std::size_t first = uniform_index(rng, members.size());
        std::size_t second = uniform_index(rng, members.size() - 1);
        if (second >= first) ++second;
        pair.probe = canonicalized(sets[members[first]]);
        pair.gallery = canonicalized(sets[members[second]]);
      } else {
        const FeatureSet whole = canonicalized(sets[members.front()]);
        std::vector<std::size_t> shuffle(whole.size());
        std::iota(shuffle.begin(), shuffle.end(), std::size_t{0});
        std::shuffle(shuffle.begin(), shuffle.end(), rng);
        const std::size_t half = whole.size() / 2;
        pair.probe.identity = pair.gallery.identity = whole.identity;
        for (std::size_t k = 0; k < shuffle.size(); ++k)
          (k < half ? pair.probe : pair.gallery).maps.push_back(whole.maps[shuffle[k]]);
        pair.probe = canonicalized(pair.probe);
        pair.gallery = canonicalized(pair.gallery);
      }
      pair.label = PairLabel::same();
    } else {
      const std::size_t first = uniform_index(rng, index.labels.size());
      std::size_t second = uniform_index(rng, index.labels.size() - 1);
      if (second >= first) ++second;
      const auto& a = index.sets_of[first];
      const auto& b = index.sets_of[second];
      pair.probe = canonicalized(sets[a[uniform_index(rng, a.size())]]);
      pair.gallery = canonicalized(sets[b[uniform_index(rng, b.size())]]);
      pair.label = PairLabel::different();
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

Level2Step level2_step(const TrainingPair& pair, const RsaParams& params, const RsaConfig& rsa,
                       const TrainConfig& config, const CodingMatrix* frozen_codes) {
  const RsaForward probe_fwd = rsa_forward(pair.probe, params, rsa);
  const RsaForward gallery_fwd = rsa_forward(pair.gallery, params, rsa);
  const PooledSet probe = pool_set(probe_fwd.output);
  const PooledSet gallery = pool_set(gallery_fwd.output);

  Level2Step step;
  step.codes = frozen_codes ? *frozen_codes : code_set(probe, gallery, config.coding, config.threads);
  const LossTerms terms = loss_terms(probe, gallery, step.codes.a, pair.label, config.coding.lambda,
                                     config.coding.p, config.recon_clamp);
  step.loss = terms.reconstruction + terms.penalty;
  step.clamped = terms.clamped;
  step.grads = zero_params(params.blocks(), params.embed_dim(), params.dim());
  if (terms.clamped) return step;

  const PooledGradients pooled = loss_grad_pooled(probe, gallery, step.codes.a, pair.label);
  accumulate(step.grads, rsa_backward(probe_fwd.tape, unpool_gradient(pooled.probe, pair.probe)).grads);
  accumulate(step.grads, rsa_backward(gallery_fwd.tape, unpool_gradient(pooled.gallery, pair.gallery)).grads);
  return step;
}

double level2_objective(const TrainingPair& pair, const RsaParams& params, const RsaConfig& rsa,
                        const TrainConfig& config, const CodingMatrix& frozen_codes) {
  const PooledSet probe = pool_set(rsa_apply(pair.probe, params, rsa));
  const PooledSet gallery = pool_set(rsa_apply(pair.gallery, params, rsa));
  const LossTerms terms = loss_terms(probe, gallery, frozen_codes.a, pair.label, config.coding.lambda,
                                     config.coding.p, config.recon_clamp);
  return terms.reconstruction + terms.penalty;
}

namespace {

DenseVector logits_of(const ClassifierHead& head, std::span<const double> descriptor) {
  DenseVector logits = matvec(head.weights, descriptor);
  for (std::size_t k = 0; k < logits.size(); ++k) logits[k] += head.bias[k];
  return logits;
}

// Softmax probabilities and the cross-entropy against class `target`.
double softmax_cross_entropy(DenseVector& logits, std::size_t target) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : logits) v /= total;
  return -std::log(std::max(logits[target], std::numeric_limits<double>::min()));
}

std::size_t class_of(const ClassifierHead& head, std::uint32_t identity) {
  const auto it = std::lower_bound(head.labels.begin(), head.labels.end(), identity);
  if (it == head.labels.end() || *it != identity)
    throw InvariantError("classifier: identity " + std::to_string(identity) + " unknown to the head");
  return static_cast<std::size_t>(it - head.labels.begin());
}

// Gradient of a set-descriptor loss pushed back through averaging and pooling.
FeatureSet descriptor_gradient(std::span<const double> grad, const FeatureSet& like) {
  DenseMatrix pooled(like.size(), grad.size());
  const double inv = 1.0 / static_cast<double>(like.size());
  for (std::size_t n = 0; n < like.size(); ++n)
    for (std::size_t c = 0; c < grad.size(); ++c) pooled(n, c) = grad[c] * inv;
  return unpool_gradient(pooled, like);
}

}  // namespace

double classification_loss(const std::vector<FeatureSet>& sets, const RsaParams& params, const RsaConfig& rsa,
                           const ClassifierHead& head) {
  if (sets.empty()) throw InvariantError("classification_loss: no sets");
  double total = 0.0;
  for (const FeatureSet& raw : sets) {
    const FeatureSet set = canonicalized(raw);
    if (!set.identity) throw InvariantError("classification_loss: set has no identity label");
    const SetDescriptor desc = set_average(pool_set(rsa_apply(set, params, rsa)));
    DenseVector logits = logits_of(head, desc.vector);
    total += softmax_cross_entropy(logits, class_of(head, *set.identity));
  }
  return total / static_cast<double>(sets.size());
}

Level1Result level1_pretrain(const std::vector<FeatureSet>& sets, const RsaParams& params, const RsaConfig& rsa,
                             const TrainConfig& config, std::ostream* log) {
  config.validate();
  const IdentityIndex index = index_identities(sets);
  if (index.labels.size() < 2) throw Error("level-1 pretraining needs at least 2 identities");

  Level1Result result;
  result.params = params;
  result.head.labels = index.labels;
  result.head.weights = DenseMatrix(index.labels.size(), params.dim());
  result.head.bias.assign(index.labels.size(), 0.0);

  std::vector<FeatureSet> data;
  data.reserve(sets.size());
  for (const FeatureSet& set : sets) data.push_back(canonicalized(set));

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> visit(data.size());
  std::iota(visit.begin(), visit.end(), std::size_t{0});
  const std::size_t classes = index.labels.size();

  for (std::size_t epoch = 0; epoch < config.level1_epochs; ++epoch) {
    std::shuffle(visit.begin(), visit.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t i : visit) {
      const FeatureSet& set = data[i];
      const RsaForward fwd = guarded_forward(set, result.params, rsa, "level-1", epoch);
      const SetDescriptor desc = set_average(pool_set(fwd.output));
      DenseVector probs = logits_of(result.head, desc.vector);
      const std::size_t target = class_of(result.head, *set.identity);
      epoch_loss += softmax_cross_entropy(probs, target);

      DenseVector& dlogits = probs;
      dlogits[target] -= 1.0;
      DenseVector ddesc(params.dim(), 0.0);
      for (std::size_t k = 0; k < classes; ++k)
        for (std::size_t c = 0; c < params.dim(); ++c) ddesc[c] += result.head.weights(k, c) * dlogits[k];

      const RsaBackward back = rsa_backward(fwd.tape, descriptor_gradient(ddesc, set));
      guarded_update(result.params, back.grads, config.lr, "level-1", epoch);
      for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t c = 0; c < params.dim(); ++c)
          result.head.weights(k, c) -= config.lr * dlogits[k] * desc.vector[c];
        result.head.bias[k] -= config.lr * dlogits[k];
      }
    }
    const double mean = epoch_loss / static_cast<double>(data.size());
    result.loss_history.push_back(mean);
    if (log) *log << "stage=level1 epoch=" << epoch + 1 << " sets=" << data.size() << " mean_loss=" << mean << "\n";
  }
  return result;
}

double contrastive_loss(const SetDescriptor& probe, const SetDescriptor& gallery, PairLabel label, double margin) {
  DenseVector diff(probe.vector.size());
  for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = probe.vector[c] - gallery.vector.at(c);
  const double dist2 = squared_norm(diff);
  if (label.is_match()) return dist2;
  const double gap = std::max(0.0, margin - std::sqrt(dist2));
  return gap * gap;
}

ContrastiveResult contrastive_pretrain(const std::vector<FeatureSet>& sets, const RsaParams& params,
                                       const RsaConfig& rsa, const TrainConfig& config, std::ostream* log) {
  config.validate();
  ContrastiveResult result{params, {}};
  std::mt19937_64 rng(config.seed);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<TrainingPair> pairs = sample_pairs(sets, config.pairs_per_epoch, rng);
    double epoch_loss = 0.0;
    for (const TrainingPair& pair : pairs) {
      const RsaForward probe_fwd = guarded_forward(pair.probe, result.params, rsa, "contrastive", epoch);
      const RsaForward gallery_fwd = guarded_forward(pair.gallery, result.params, rsa, "contrastive", epoch);
      const SetDescriptor p = set_average(pool_set(probe_fwd.output));
      const SetDescriptor g = set_average(pool_set(gallery_fwd.output));
      epoch_loss += contrastive_loss(p, g, pair.label, config.margin);

      DenseVector diff(p.vector.size());
      for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = p.vector[c] - g.vector[c];
      const double dist = norm2(diff);
      double coef = 0.0;  // d loss / d diff = coef * diff
      if (pair.label.is_match()) {
        coef = 2.0;
      } else if (dist < config.margin && dist > 0.0) {
        coef = -2.0 * (config.margin - dist) / dist;
      }
      if (coef == 0.0) continue;
      DenseVector dp(diff.size()), dg(diff.size());
      for (std::size_t c = 0; c < diff.size(); ++c) {
        dp[c] = coef * diff[c];
        dg[c] = -dp[c];
      }
      RsaGradients grads = rsa_backward(probe_fwd.tape, descriptor_gradient(dp, pair.probe)).grads;
      accumulate(grads, rsa_backward(gallery_fwd.tape, descriptor_gradient(dg, pair.gallery)).grads);
      guarded_update(result.params, grads, config.lr, "contrastive", epoch);
    }
    const double mean = pairs.empty() ? 0.0 : epoch_loss / static_cast<double>(pairs.size());
    result.loss_history.push_back(mean);
    if (log) *log << "stage=contrastive epoch=" << epoch + 1 << " pairs=" << pairs.size() << " mean_loss=" << mean << "\n";
  }
  return result;
}

double level2_validation_loss(const std::vector<TrainingPair>& pairs, const RsaParams& params,
                              const RsaConfig& rsa, const TrainConfig& config) {
  if (pairs.empty()) throw InvariantError("level2_validation_loss: no pairs");
  double total = 0.0;
  std::size_t counted = 0;
  for (const TrainingPair& pair : pairs) {
    const PooledSet probe = pool_set(rsa_apply(pair.probe, params, rsa));
    const PooledSet gallery = pool_set(rsa_apply(pair.gallery, params, rsa));
    CodingMatrix codes;
    try {
      codes = code_set(probe, gallery, config.coding, config.threads);
    } catch (const SolverError&) {
      continue;
    }
    const LossTerms terms = loss_terms(probe, gallery, codes.a, pair.label, config.coding.lambda,
                                       config.coding.p, config.recon_clamp);
    total += terms.reconstruction + terms.penalty;
    ++counted;
  }
  if (counted == 0) throw SolverError("level2_validation_loss: every validation pair failed to code");
  return total / static_cast<double>(counted);
}

BilevelResult bilevel_train(const std::vector<FeatureSet>& sets, const RsaParams& params, const RsaConfig& rsa,
                            const TrainConfig& config, const std::vector<TrainingPair>* validation,
                            std::ostream* log) {
  config.validate();
  BilevelResult result;
  result.params = params;
  if (validation) result.validation_initial = level2_validation_loss(*validation, result.params, rsa, config);

  std::mt19937_64 rng(config.seed);
  std::size_t attempted = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<TrainingPair> pairs = sample_pairs(sets, config.pairs_per_epoch, rng);
    double epoch_loss = 0.0;
    std::size_t used = 0;
    std::size_t epoch_failures = 0;
    for (std::size_t t = 0; t < pairs.size(); ++t) {
      ++attempted;
      Level2Step step;
      try {
        step = level2_step(pairs[t], result.params, rsa, config);
      } catch (const SolverError& e) {
        ++result.failures;
        ++epoch_failures;
        if (log) *log << "stage=level2 epoch=" << epoch + 1 << " pair=" << t << " skipped: " << e.what() << "\n";
        continue;
      } catch (const InvariantError& e) {
        report_divergence("level-2", epoch, e);
      }
      guarded_update(result.params, step.grads, config.lr, "level-2", epoch);
      epoch_loss += step.loss;
      ++used;
    }
    result.pairs_used += used;
    if (static_cast<double>(result.failures) > config.max_failure_fraction * static_cast<double>(attempted)) {
      std::ostringstream msg;
      msg << "bilevel training aborted: " << result.failures << " of " << attempted << " pairs failed to code";
      throw Error(msg.str());
    }
    const double mean = used == 0 ? 0.0 : epoch_loss / static_cast<double>(used);
    result.loss_trace.push_back(mean);
    if (validation) result.validation_trace.push_back(level2_validation_loss(*validation, result.params, rsa, config));
    if (log) {
      *log << "stage=level2 epoch=" << epoch + 1 << " pairs=" << used << " mean_loss=" << mean
           << " failures=" << epoch_failures;
      if (validation) *log << " validation_loss=" << result.validation_trace.back();
      *log << "\n";
    }
  }
  return result;
}

}  // namespace pifr
