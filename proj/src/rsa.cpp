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


#include "pifr/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "pifr/error.hpp"

namespace pifr {

void RsaConfig::validate() const {
  if (blocks == 0) throw InvariantError("RsaConfig: blocks must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvariantError("RsaConfig: sigma must be > 0");
  if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw InvariantError("RsaConfig: init_scale must be >= 0");
}

void RsaParams::validate() const {
  if (omega.empty()) throw InvariantError("RsaParams: no blocks");
  if (psi.rows() == 0 || psi.cols() == 0) throw InvariantError("RsaParams: empty embedding");
  if (phi.rows() != psi.rows() || phi.cols() != psi.cols())
    throw DimensionError("RsaParams: psi and phi shapes differ");
  for (const auto& gate : omega) {
    if (gate.size() != psi.cols()) throw DimensionError("RsaParams: gate length differs from D");
    for (double v : gate)
      if (!std::isfinite(v)) throw InvariantError("RsaParams: non-finite gate");
  }
  if (!psi.all_finite() || !phi.all_finite()) throw InvariantError("RsaParams: non-finite embedding");
}

DenseVector RsaParams::flatten() const {
  DenseVector flat;
  flat.reserve(omega.size() * dim() + psi.size() + phi.size());
  for (const auto& gate : omega) flat.insert(flat.end(), gate.begin(), gate.end());
  flat.insert(flat.end(), psi.data().begin(), psi.data().end());
  flat.insert(flat.end(), phi.data().begin(), phi.data().end());
  return flat;
}

void RsaParams::assign_flat(std::span<const double> flat) {
  const std::size_t expected = omega.size() * dim() + psi.size() + phi.size();
  if (flat.size() != expected) throw DimensionError("RsaParams::assign_flat: length mismatch");
  auto it = flat.begin();
  for (auto& gate : omega) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(gate.size()), gate.begin());
    it += static_cast<std::ptrdiff_t>(gate.size());
  }
  std::copy(it, it + static_cast<std::ptrdiff_t>(psi.size()), psi.data().begin());
  it += static_cast<std::ptrdiff_t>(psi.size());
  std::copy(it, it + static_cast<std::ptrdiff_t>(phi.size()), phi.data().begin());
}

RsaParams zero_params(std::size_t blocks, std::size_t embed_dim, std::size_t dim) {
  RsaParams params;
  params.omega.assign(blocks, DenseVector(dim, 0.0));
  params.psi = DenseMatrix(embed_dim, dim);
  params.phi = DenseMatrix(embed_dim, dim);
  return params;
}

RsaParams initialize_params(const RsaConfig& config, std::size_t dim, std::uint64_t seed) {
  config.validate();
  if (dim == 0) throw InvariantError("initialize_params: D must be >= 1");
  RsaParams params = zero_params(config.blocks, config.resolved_embed_dim(dim), dim);
  std::mt19937_64 rng(seed);
  const double scale = config.init_scale / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> uniform(-scale, scale);
  for (double& v : params.psi.data()) v = uniform(rng);
  params.phi = params.psi;
  return params;
}

void sgd_update(RsaParams& params, const RsaGradients& grads, double lr) {
  if (grads.blocks() != params.blocks() || grads.psi.size() != params.psi.size() ||
      grads.phi.size() != params.phi.size())
    throw DimensionError("sgd_update: gradient shape mismatch");
  for (std::size_t l = 0; l < params.blocks(); ++l)
    for (std::size_t c = 0; c < params.dim(); ++c) params.omega[l][c] -= lr * grads.omega[l][c];
  for (std::size_t k = 0; k < params.psi.size(); ++k) params.psi.data()[k] -= lr * grads.psi.data()[k];
  for (std::size_t k = 0; k < params.phi.size(); ++k) params.phi.data()[k] -= lr * grads.phi.data()[k];
}

void accumulate(RsaGradients& into, const RsaGradients& grads) {
  sgd_update(into, grads, -1.0);
}

namespace {

std::pair<double, double> plane_coord(std::size_t p, std::size_t h, std::size_t w, bool normalize) {
  const auto y = static_cast<double>(p / w);
  const auto x = static_cast<double>(p % w);
  if (!normalize) return {y, x};
  return {h > 1 ? y / static_cast<double>(h - 1) : 0.0, w > 1 ? x / static_cast<double>(w - 1) : 0.0};
}

DenseMatrix plane_delta(std::size_t h, std::size_t w, const RsaConfig& config) {
  const std::size_t plane = h * w;
  DenseMatrix delta(plane, plane);
  for (std::size_t a = 0; a < plane; ++a) {
    const auto [ya, xa] = plane_coord(a, h, w, config.coord_normalization);
    for (std::size_t b = 0; b < plane; ++b) {
      const auto [yb, xb] = plane_coord(b, h, w, config.coord_normalization);
      const double dist2 = (ya - yb) * (ya - yb) + (xa - xb) * (xa - xb);
      delta(a, b) = std::exp(-dist2 / config.sigma);
    }
  }
  return delta;
}

// Position-vectors of a set as rows of a (N*H*W) x D matrix.
DenseMatrix stack_positions(const FeatureSet& set) {
  const std::size_t plane = set.front().positions();
  const std::size_t d = set.front().d();
  DenseMatrix x(set.size() * plane, d);
  for (std::size_t n = 0; n < set.size(); ++n) {
    auto values = set.maps[n].values();
    std::copy(values.begin(), values.end(), x.row(n * plane).begin());
  }
  return x;
}

DenseMatrix embed(const DenseMatrix& x, const DenseMatrix& projection) {
  DenseMatrix out(x.rows(), projection.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t e = 0; e < projection.rows(); ++e) out(i, e) = dot(projection.row(e), x.row(i));
  return out;
}

}  // namespace

DenseMatrix build_spatial_delta(std::size_t h, std::size_t w, std::size_t n, const RsaConfig& config) {
  config.validate();
  if (h == 0 || w == 0 || n == 0) throw InvariantError("build_spatial_delta: dimensions must be >= 1");
  const DenseMatrix plane = plane_delta(h, w, config);
  const std::size_t positions = n * h * w;
  DenseMatrix delta(positions, positions);
  for (std::size_t i = 0; i < positions; ++i)
    for (std::size_t j = 0; j < positions; ++j) delta(i, j) = plane(i % (h * w), j % (h * w));
  return delta;
}

AffinityCache build_affinity(const FeatureSet& x0, const RsaParams& params, const RsaConfig& config) {
  x0.validate();
  config.validate();
  params.validate();
  const FeatureMap& shape = x0.front();
  if (shape.d() != params.dim()) {
    std::ostringstream msg;
    msg << "build_affinity: features have D=" << shape.d() << ", parameters expect D=" << params.dim();
    throw DimensionError(msg.str());
  }

  AffinityCache cache;
  cache.plane = shape.positions();
  cache.positions = x0.size() * cache.plane;
  cache.plane_delta = plane_delta(shape.h(), shape.w(), config);
  const DenseMatrix x = stack_positions(x0);
  cache.psi_embed = embed(x, params.psi);
  cache.phi_embed = embed(x, params.phi);

  const std::size_t count = cache.positions;
  cache.omega = DenseMatrix(count, count);
  cache.norm.assign(count, 0.0);
  cache.degenerate = count == 1;

  DenseVector logits(count);
  for (std::size_t i = 0; i < count; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < count; ++j) {
      logits[j] = dot(cache.psi_embed.row(i), cache.phi_embed.row(j));
      if (j != i) row_max = std::max(row_max, logits[j]);
    }
    const double shift = (config.stabilize_logits && count > 1) ? row_max : 0.0;
    double norm = 0.0;
    for (std::size_t j = 0; j < count; ++j) {
      const double value = std::exp(logits[j] - shift);
      cache.omega(i, j) = value;
      if (j != i) norm += value * cache.delta(i, j);
    }
    if (!cache.degenerate && !(norm > 0.0 && std::isfinite(norm))) {
      std::ostringstream msg;
      msg << "build_affinity: normalizer C_" << i << " = " << norm
          << " (affinity under/overflow; enable logit stabilization or raise sigma)";
      throw InvariantError(msg.str());
    }
    cache.norm[i] = norm;
  }
  return cache;
}

namespace {

struct ForwardState {
  DenseMatrix weights;
  std::vector<DenseMatrix> inputs;
  DenseMatrix output;
};

// Runs the block stack on canonical-order position-vectors x0.
ForwardState run_blocks(const DenseMatrix& x0, const AffinityCache& cache, const RsaParams& params,
                        bool record) {
  const std::size_t count = cache.positions;
  const std::size_t d = x0.cols();
  ForwardState state;
  state.weights = DenseMatrix(count, count);
  if (!cache.degenerate) {
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < count; ++j)
        if (j != i) state.weights(i, j) = cache.omega(i, j) * cache.delta(i, j) / cache.norm[i];
  }
  DenseMatrix x = x0;
  if (cache.degenerate) {
    if (record) state.inputs.assign(params.blocks(), x0);
    state.output = std::move(x);
    return state;
  }
  DenseVector residual(d);
  for (std::size_t l = 0; l < params.blocks(); ++l) {
    const DenseVector& gate = params.omega[l];
    DenseMatrix next = x;
    for (std::size_t i = 0; i < count; ++i) {
      std::fill(residual.begin(), residual.end(), 0.0);
      auto xi = x.row(i);
      for (std::size_t j = 0; j < count; ++j) {
        if (j == i) continue;
        const double weight = state.weights(i, j);
        auto xj = x.row(j);
        for (std::size_t c = 0; c < d; ++c) residual[c] += weight * (xj[c] - xi[c]);
      }
      auto out = next.row(i);
      for (std::size_t c = 0; c < d; ++c) out[c] = xi[c] + gate[c] * residual[c];
    }
    if (record) state.inputs.push_back(std::move(x));
    x = std::move(next);
  }
  state.output = std::move(x);
  return state;
}

FeatureSet unstack(const DenseMatrix& x, const FeatureSet& like, std::span<const std::size_t> order) {
  FeatureSet out;
  out.identity = like.identity;
  out.maps.resize(like.size());
  const FeatureMap& shape = like.front();
  const std::size_t plane = shape.positions();
  const std::size_t block = plane * shape.d();
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::vector<double> values(x.data().begin() + static_cast<std::ptrdiff_t>(k * block),
                               x.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * block));
    out.maps[order[k]] = FeatureMap(shape.h(), shape.w(), shape.d(), std::move(values));
  }
  return out;
}

}  // namespace

RsaForward rsa_forward(const FeatureSet& x0, const RsaParams& params, const RsaConfig& config) {
  x0.validate();
  RsaForward result;
  RsaTape& tape = result.tape;
  tape.order = canonical_order(x0, config.reduction);
  const FeatureSet canonical = permuted(x0, tape.order);
  tape.set_size = x0.size();
  tape.h = x0.front().h();
  tape.w = x0.front().w();
  tape.d = x0.front().d();
  tape.affinity = build_affinity(canonical, params, config);
  tape.x0 = stack_positions(canonical);
  ForwardState state = run_blocks(tape.x0, tape.affinity, params, true);
  tape.weights = std::move(state.weights);
  tape.inputs = std::move(state.inputs);
  tape.params = params;
  result.output = unstack(state.output, x0, tape.order);
  return result;
}

FeatureSet rsa_apply(const FeatureSet& x0, const RsaParams& params, const RsaConfig& config) {
  x0.validate();
  const auto order = canonical_order(x0, config.reduction);
  const FeatureSet canonical = permuted(x0, order);
  const AffinityCache cache = build_affinity(canonical, params, config);
  const ForwardState state = run_blocks(stack_positions(canonical), cache, params, false);
  return unstack(state.output, x0, order);
}

RsaBackward rsa_backward(const RsaTape& tape, const FeatureSet& upstream) {
  upstream.validate();
  if (upstream.size() != tape.set_size || upstream.front().h() != tape.h ||
      upstream.front().w() != tape.w || upstream.front().d() != tape.d)
    throw DimensionError("rsa_backward: upstream gradient shape does not match the tape");

  const RsaParams& params = tape.params;
  const std::size_t count = tape.affinity.positions;
  const std::size_t d = tape.d;
  const std::size_t embed_dim = params.embed_dim();

  RsaBackward result;
  result.grads = zero_params(params.blocks(), embed_dim, d);
  DenseMatrix g = stack_positions(permuted(upstream, tape.order));

  if (tape.affinity.degenerate) {
    result.input_grad = unstack(g, upstream, tape.order);
    return result;
  }

  const DenseMatrix& weights = tape.weights;
  // d loss / d weights(i, j), accumulated over blocks.
  DenseMatrix weight_grad(count, count);
  DenseMatrix gated(count, d);
  DenseVector residual(d);

  for (std::size_t l = params.blocks(); l-- > 0;) {
    const DenseMatrix& x = tape.inputs[l];
    const DenseVector& gate = params.omega[l];
    DenseVector& gate_grad = result.grads.omega[l];
    for (std::size_t i = 0; i < count; ++i) {
      auto xi = x.row(i);
      auto gi = g.row(i);
      std::fill(residual.begin(), residual.end(), 0.0);
      for (std::size_t j = 0; j < count; ++j) {
        if (j == i) continue;
        auto xj = x.row(j);
        const double weight = weights(i, j);
        double coupling = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          const double diff = xj[c] - xi[c];
          residual[c] += weight * diff;
          coupling += gate[c] * gi[c] * diff;
        }
        weight_grad(i, j) += coupling;
      }
      auto hi = gated.row(i);
      for (std::size_t c = 0; c < d; ++c) {
        gate_grad[c] += gi[c] * residual[c];
        hi[c] = gate[c] * gi[c];
      }
    }
    // g_prev_k = g_k - h_k + sum_i weights(i, k) h_i
    DenseMatrix prev(count, d);
    for (std::size_t k = 0; k < count; ++k) {
      auto out = prev.row(k);
      auto gk = g.row(k);
      auto hk = gated.row(k);
      for (std::size_t c = 0; c < d; ++c) out[c] = gk[c] - hk[c];
    }
    for (std::size_t i = 0; i < count; ++i) {
      auto hi = gated.row(i);
      for (std::size_t k = 0; k < count; ++k) {
        if (k == i) continue;
        const double weight = weights(i, k);
        auto out = prev.row(k);
        for (std::size_t c = 0; c < d; ++c) out[c] += weight * hi[c];
      }
    }
    g = std::move(prev);
  }

  // Through the row normalization and the exponential: d loss / d logit(i, j).
  DenseMatrix logit_grad(count, count);
  for (std::size_t i = 0; i < count; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < count; ++j)
      if (j != i) mean += weights(i, j) * weight_grad(i, j);
    for (std::size_t j = 0; j < count; ++j)
      if (j != i) logit_grad(i, j) = weights(i, j) * (weight_grad(i, j) - mean);
  }

  const DenseMatrix& u = tape.affinity.psi_embed;
  const DenseMatrix& v = tape.affinity.phi_embed;
  DenseMatrix u_grad(count, embed_dim);
  DenseMatrix v_grad(count, embed_dim);
  for (std::size_t i = 0; i < count; ++i) {
    auto du = u_grad.row(i);
    for (std::size_t j = 0; j < count; ++j) {
      const double s = logit_grad(i, j);
      if (s == 0.0) continue;
      auto vj = v.row(j);
      auto ui = u.row(i);
      auto dv = v_grad.row(j);
      for (std::size_t e = 0; e < embed_dim; ++e) {
        du[e] += s * vj[e];
        dv[e] += s * ui[e];
      }
    }
  }

  for (std::size_t i = 0; i < count; ++i) {
    auto xi = tape.x0.row(i);
    auto du = u_grad.row(i);
    auto dv = v_grad.row(i);
    auto gi = g.row(i);
    for (std::size_t e = 0; e < embed_dim; ++e) {
      for (std::size_t c = 0; c < d; ++c) {
        result.grads.psi(e, c) += du[e] * xi[c];
        result.grads.phi(e, c) += dv[e] * xi[c];
        gi[c] += params.psi(e, c) * du[e] + params.phi(e, c) * dv[e];
      }
    }
  }
  result.input_grad = unstack(g, upstream, tape.order);
  return result;
}

}  // namespace pifr
