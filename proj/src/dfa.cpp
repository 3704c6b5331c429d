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


#include "pifr/dfa.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pifr/error.hpp"

namespace pifr {

void CodingConfig::validate() const {
  if (p != 1 && p != 2) throw InvariantError("CodingConfig: p must be 1 or 2");
  if (!std::isfinite(lambda) || lambda < 0.0) throw InvariantError("CodingConfig: lambda must be finite and >= 0");
  if (max_iterations == 0) throw InvariantError("CodingConfig: max_iterations must be >= 1");
}

double penalty_weight(const CodingConfig& config, std::size_t atoms) {
  return config.lambda / static_cast<double>(atoms);
}

double coding_penalty(std::span<const double> a, int p) {
  double acc = 0.0;
  for (double v : a) acc += p == 1 ? std::abs(v) : v * v;
  return acc;
}

GalleryDictionary::GalleryDictionary(const PooledSet& gallery, const CodingConfig& config)
    : config_(config) {
  config_.validate();
  if (gallery.size() == 0) throw InvariantError("GalleryDictionary: empty gallery");
  if (config_.p == 1 && !(config_.lambda > 0.0))
    throw SolverError("sparse coding requires lambda > 0 (the l1 program is unregularized at lambda = 0)");
  order_ = canonical_order(gallery, config_.reduction);
  atoms_ = permuted(gallery, order_).vectors;
  const std::size_t m = atoms_.rows();
  gram_ = DenseMatrix(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j) gram_(i, j) = gram_(j, i) = dot(atoms_.row(i), atoms_.row(j));
  if (config_.p == 2) {
    DenseMatrix system = gram_;
    const double ridge = penalty_weight(config_, m);
    for (std::size_t i = 0; i < m; ++i) system(i, i) += ridge;
    try {
      ridge_.emplace(system);
    } catch (const FactorizationError& e) {
      ridge_error_ = e.what();
    }
  }
}

DenseVector GalleryDictionary::correlate(std::span<const double> x) const {
  if (x.size() != dim()) {
    std::ostringstream msg;
    msg << "coding: probe vector has D=" << x.size() << ", gallery has D=" << dim();
    throw DimensionError(msg.str());
  }
  DenseVector b(atoms());
  for (std::size_t k = 0; k < atoms(); ++k) b[k] = dot(atoms_.row(k), x);
  return b;
}

DenseVector GalleryDictionary::code(std::span<const double> x) const {
  return config_.p == 2 ? solve_ridge(x) : feature_sign(x);
}

DenseVector GalleryDictionary::residual(std::span<const double> x, std::span<const double> code) const {
  if (code.size() != atoms() || x.size() != dim()) throw DimensionError("residual: shape mismatch");
  DenseVector r(x.begin(), x.end());
  for (std::size_t k = 0; k < atoms(); ++k) {
    auto atom = atoms_.row(k);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] -= code[k] * atom[c];
  }
  return r;
}

DenseVector GalleryDictionary::to_gallery_order(std::span<const double> code) const {
  DenseVector out(code.size());
  for (std::size_t k = 0; k < code.size(); ++k) out[order_[k]] = code[k];
  return out;
}

DenseVector GalleryDictionary::solve_ridge(std::span<const double> x) const {
  if (!ridge_) {
    throw SolverError("collaborative coding: Gram matrix is singular at lambda = " +
                      std::to_string(config_.lambda) + "; use lambda > 0 (" + ridge_error_ + ")");
  }
  return ridge_->solve(correlate(x));
}

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Solves G_AA z = rhs, adding a vanishing ridge if the active columns are
// linearly dependent.
DenseVector solve_active(const DenseMatrix& gram, const std::vector<std::size_t>& active,
                         const DenseVector& rhs) {
  const std::size_t n = active.size();
  DenseMatrix sub(n, n);
  double trace = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) sub(r, c) = gram(active[r], active[c]);
    trace += sub(r, r);
  }
  double jitter = 0.0;
  for (int attempt = 0; attempt < 8; ++attempt) {
    DenseMatrix system = sub;
    for (std::size_t r = 0; r < n; ++r) system(r, r) += jitter;
    try {
      return Cholesky(system).solve(rhs);
    } catch (const FactorizationError&) {
      jitter = jitter == 0.0 ? 1e-12 * (1.0 + trace / static_cast<double>(n)) : jitter * 100.0;
    }
  }
  throw SolverError("feature-sign search: active Gram matrix is numerically singular");
}

}  // namespace

DenseVector GalleryDictionary::feature_sign(std::span<const double> x) const {
  const std::size_t m = atoms();
  const double gamma = penalty_weight(config_, m);
  const DenseVector b = correlate(x);
  double scale = std::max(1.0, gamma);
  for (double v : b) scale = std::max(scale, 2.0 * std::abs(v));
  // Activation margin and tolerance on the nonzero stationarity conditions.
  const double tol = 1e-11 * scale;
  const double opt_tol = 1e-9 * scale;

  DenseVector a(m, 0.0);
  std::vector<double> theta(m, 0.0);
  std::vector<bool> active(m, false);

  auto gradient = [&] {
    DenseVector g(m);
    for (std::size_t k = 0; k < m; ++k) g[k] = 2.0 * (dot(gram_.row(k), a) - b[k]);
    return g;
  };
  auto objective = [&](const DenseVector& point) {
    double value = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      if (point[k] == 0.0) continue;
      value += point[k] * (dot(gram_.row(k), point) - 2.0 * b[k]) + gamma * std::abs(point[k]);
    }
    return value;
  };
  auto kkt_residual = [&](const DenseVector& g) {
    double worst = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double v = a[k] != 0.0 ? std::abs(g[k] + gamma * sign_of(a[k])) : std::abs(g[k]) - gamma;
      worst = std::max(worst, v);
    }
    return worst;
  };

  std::size_t steps = 0;
  while (true) {
    DenseVector g = gradient();
    std::size_t pick = m;
    double pick_value = gamma + tol;
    for (std::size_t k = 0; k < m; ++k) {
      if (a[k] == 0.0 && std::abs(g[k]) > pick_value) {
        pick = k;
        pick_value = std::abs(g[k]);
      }
    }
    if (pick == m) {
      bool nonzero_optimal = true;
      for (std::size_t k = 0; k < m; ++k)
        if (a[k] != 0.0 && std::abs(g[k] + gamma * theta[k]) > opt_tol) nonzero_optimal = false;
      if (nonzero_optimal) return a;
    } else {
      theta[pick] = g[pick] > 0.0 ? -1.0 : 1.0;
      active[pick] = true;
    }

    while (true) {
      if (++steps > config_.max_iterations) {
        std::ostringstream msg;
        msg << "feature-sign search did not converge in " << config_.max_iterations
            << " steps (KKT residual " << kkt_residual(gradient()) << ")";
        throw SolverError(msg.str());
      }
      std::vector<std::size_t> idx;
      for (std::size_t k = 0; k < m; ++k)
        if (active[k]) idx.push_back(k);
      if (idx.empty()) break;
      DenseVector rhs(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) rhs[r] = b[idx[r]] - 0.5 * gamma * theta[idx[r]];
      const DenseVector target = solve_active(gram_, idx, rhs);

      // Discrete line search over the segment's end point and its sign changes.
      DenseVector best = a;
      for (std::size_t r = 0; r < idx.size(); ++r) best[idx[r]] = target[r];
      double best_value = objective(best);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::size_t k = idx[r];
        if (a[k] == 0.0 || sign_of(target[r]) == sign_of(a[k])) continue;
        const double t = a[k] / (a[k] - target[r]);
        DenseVector point = a;
        for (std::size_t q = 0; q < idx.size(); ++q) point[idx[q]] = a[idx[q]] + t * (target[q] - a[idx[q]]);
        point[k] = 0.0;
        const double value = objective(point);
        if (value < best_value) {
          best_value = value;
          best = std::move(point);
        }
      }
      a = std::move(best);
      for (std::size_t k : idx) {
        theta[k] = sign_of(a[k]);
        if (a[k] == 0.0) active[k] = false;
      }

      g = gradient();
      bool nonzero_optimal = true;
      for (std::size_t k = 0; k < m; ++k)
        if (a[k] != 0.0 && std::abs(g[k] + gamma * theta[k]) > opt_tol) nonzero_optimal = false;
      if (nonzero_optimal) break;
    }
  }
}

double coding_objective(std::span<const double> x, const PooledSet& gallery, std::span<const double> a,
                        const CodingConfig& config) {
  if (a.size() != gallery.size() || x.size() != gallery.dim())
    throw DimensionError("coding_objective: shape mismatch");
  DenseVector r(x.begin(), x.end());
  for (std::size_t m = 0; m < gallery.size(); ++m) {
    auto atom = gallery.vector(m);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] -= a[m] * atom[c];
  }
  return squared_norm(r) + penalty_weight(config, gallery.size()) * coding_penalty(a, config.p);
}

DenseVector solve_collaborative(std::span<const double> x, const PooledSet& gallery,
                                const CodingConfig& config) {
  CodingConfig ridge = config;
  ridge.p = 2;
  const GalleryDictionary dict(gallery, ridge);
  return dict.to_gallery_order(dict.code(x));
}

DenseVector solve_sparse(std::span<const double> x, const PooledSet& gallery, const CodingConfig& config) {
  CodingConfig sparse = config;
  sparse.p = 1;
  const GalleryDictionary dict(gallery, sparse);
  return dict.to_gallery_order(dict.code(x));
}

double sparse_kkt_residual(std::span<const double> x, const PooledSet& gallery, std::span<const double> a,
                           const CodingConfig& config) {
  if (a.size() != gallery.size() || x.size() != gallery.dim())
    throw DimensionError("sparse_kkt_residual: shape mismatch");
  const double gamma = penalty_weight(config, gallery.size());
  DenseVector r(x.begin(), x.end());
  for (std::size_t m = 0; m < gallery.size(); ++m) {
    auto atom = gallery.vector(m);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] -= a[m] * atom[c];
  }
  double worst = 0.0;
  for (std::size_t m = 0; m < gallery.size(); ++m) {
    const double g = -2.0 * dot(gallery.vector(m), r);
    const double v = a[m] != 0.0 ? std::abs(g + gamma * sign_of(a[m])) : std::abs(g) - gamma;
    worst = std::max(worst, v);
  }
  return worst;
}

CodingMatrix code_set(const PooledSet& probe, const GalleryDictionary& gallery, std::size_t threads) {
  if (probe.size() == 0) throw InvariantError("code_set: empty probe set");
  if (probe.dim() != gallery.dim()) throw DimensionError("code_set: probe and gallery D differ");
  CodingMatrix out{DenseMatrix(gallery.atoms(), probe.size()), gallery.config()};
  parallel_for(probe.size(), threads, [&](std::size_t n) {
    DenseVector code;
    try {
      code = gallery.code(probe.vector(n));
    } catch (const SolverError& e) {
      throw SolverError("column " + std::to_string(n) + ": " + e.what());
    }
    for (std::size_t k = 0; k < code.size(); ++k) out.a(gallery.order()[k], n) = code[k];
  });
  return out;
}

CodingMatrix code_set(const PooledSet& probe, const PooledSet& gallery, const CodingConfig& config,
                      std::size_t threads) {
  if (probe.dim() != gallery.dim()) throw DimensionError("code_set: probe and gallery D differ");
  return code_set(probe, GalleryDictionary(gallery, config), threads);
}

double set_similarity(const PooledSet& probe, const GalleryDictionary& gallery) {
  if (probe.size() == 0) throw InvariantError("set_similarity: empty probe set");
  if (probe.dim() != gallery.dim()) throw DimensionError("set_similarity: probe and gallery D differ");
  double total = 0.0;
  for (std::size_t n : canonical_order(probe, gallery.config().reduction)) {
    const auto x = probe.vector(n);
    total += squared_norm(gallery.residual(x, gallery.code(x)));
  }
  return -total / static_cast<double>(probe.size());
}

double set_similarity(const PooledSet& probe, const PooledSet& gallery, const CodingConfig& config) {
  if (probe.dim() != gallery.dim()) throw DimensionError("set_similarity: probe and gallery D differ");
  return set_similarity(probe, GalleryDictionary(gallery, config));
}

double symmetric_similarity(const PooledSet& probe, const PooledSet& gallery, const CodingConfig& config) {
  return 0.5 * (set_similarity(probe, gallery, config) + set_similarity(gallery, probe, config));
}

}  // namespace pifr
