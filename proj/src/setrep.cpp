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


#include "pifr/setrep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pifr/error.hpp"

namespace pifr {

FeatureMap::FeatureMap(std::size_t h, std::size_t w, std::size_t d, double fill)
    : h_(h), w_(w), d_(d), values_(h * w * d, fill) {
  if (h == 0 || w == 0 || d == 0) throw InvariantError("FeatureMap: dimensions must be >= 1");
}

FeatureMap::FeatureMap(std::size_t h, std::size_t w, std::size_t d, std::vector<double> values)
    : h_(h), w_(w), d_(d), values_(std::move(values)) {
  if (h == 0 || w == 0 || d == 0) throw InvariantError("FeatureMap: dimensions must be >= 1");
  if (values_.size() != h * w * d) throw InvariantError("FeatureMap: value count does not match H*W*D");
  if (!std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); }))
    throw InvariantError("FeatureMap: non-finite value");
}

void FeatureSet::validate() const {
  if (maps.empty()) throw InvariantError("FeatureSet: set is empty");
  for (std::size_t n = 0; n < maps.size(); ++n) {
    if (!maps[n].same_shape(maps.front())) {
      std::ostringstream msg;
      msg << "FeatureSet: map " << n << " has shape " << maps[n].h() << "x" << maps[n].w() << "x"
          << maps[n].d() << ", expected " << maps.front().h() << "x" << maps.front().w() << "x"
          << maps.front().d();
      throw InvariantError(msg.str());
    }
    for (double v : maps[n].values())
      if (!std::isfinite(v)) throw InvariantError("FeatureSet: non-finite value");
  }
}

namespace {

template <typename RowOf>
std::vector<std::size_t> sorted_order(std::size_t count, Reduction mode, RowOf row_of) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == Reduction::kCanonical) {
    // Ties are bitwise-identical elements, so stability does not affect results.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return bitwise_less(row_of(a), row_of(b)); });
  }
  return order;
}

}  // namespace

std::vector<std::size_t> canonical_order(const FeatureSet& set, Reduction mode) {
  return sorted_order(set.size(), mode, [&](std::size_t i) { return set.maps[i].values(); });
}

std::vector<std::size_t> canonical_order(const PooledSet& set, Reduction mode) {
  return sorted_order(set.size(), mode, [&](std::size_t i) { return set.vector(i); });
}

FeatureSet permuted(const FeatureSet& set, std::span<const std::size_t> order) {
  if (order.size() != set.size()) throw DimensionError("permuted: order length mismatch");
  FeatureSet out;
  out.identity = set.identity;
  out.maps.reserve(set.size());
  for (std::size_t idx : order) out.maps.push_back(set.maps.at(idx));
  return out;
}

PooledSet permuted(const PooledSet& set, std::span<const std::size_t> order) {
  if (order.size() != set.size()) throw DimensionError("permuted: order length mismatch");
  PooledSet out{DenseMatrix(set.size(), set.dim())};
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto src = set.vector(order[k]);
    std::copy(src.begin(), src.end(), out.vectors.row(k).begin());
  }
  return out;
}

DenseVector global_pool(const FeatureMap& map) {
  DenseVector out(map.d(), 0.0);
  for (std::size_t p = 0; p < map.positions(); ++p) {
    auto v = map.position(p);
    for (std::size_t c = 0; c < map.d(); ++c) out[c] += v[c];
  }
  const double inv = 1.0 / static_cast<double>(map.positions());
  for (double& v : out) v *= inv;
  return out;
}

PooledSet pool_set(const FeatureSet& set) {
  set.validate();
  PooledSet out{DenseMatrix(set.size(), set.front().d())};
  for (std::size_t n = 0; n < set.size(); ++n) {
    const DenseVector pooled = global_pool(set.maps[n]);
    std::copy(pooled.begin(), pooled.end(), out.vectors.row(n).begin());
  }
  return out;
}

SetDescriptor set_average(const PooledSet& pooled, Reduction mode) {
  if (pooled.size() == 0) throw InvariantError("set_average: empty set");
  SetDescriptor out{DenseVector(pooled.dim(), 0.0)};
  for (std::size_t idx : canonical_order(pooled, mode)) {
    auto v = pooled.vector(idx);
    for (std::size_t c = 0; c < v.size(); ++c) out.vector[c] += v[c];
  }
  const double inv = 1.0 / static_cast<double>(pooled.size());
  for (double& v : out.vector) v *= inv;
  return out;
}

namespace {

void require_same_dim(const PooledSet& a, const PooledSet& b, const char* what) {
  if (a.size() == 0 || b.size() == 0) throw InvariantError(std::string(what) + ": empty set");
  if (a.dim() != b.dim()) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a.dim() << " vs " << b.dim() << ")";
    throw DimensionError(msg.str());
  }
}

double distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double diff = a[c] - b[c];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

double baseline_mean_l2(const PooledSet& probe, const PooledSet& gallery, Reduction mode) {
  require_same_dim(probe, gallery, "baseline_mean_l2");
  const auto probe_order = canonical_order(probe, mode);
  const auto gallery_order = canonical_order(gallery, mode);
  double total = 0.0;
  for (std::size_t n : probe_order)
    for (std::size_t m : gallery_order) total += distance(probe.vector(n), gallery.vector(m));
  return -total / static_cast<double>(probe.size() * gallery.size());
}

double baseline_avepool(const PooledSet& probe, const PooledSet& gallery, Reduction mode) {
  require_same_dim(probe, gallery, "baseline_avepool");
  const SetDescriptor p = set_average(probe, mode);
  const SetDescriptor g = set_average(gallery, mode);
  return -distance(p.vector, g.vector);
}

}  // namespace pifr
