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


#ifndef PIFR_SETREP_HPP_
#define PIFR_SETREP_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pifr/numerics.hpp"

namespace pifr {

// Reduction order over set elements. kCanonical sorts elements by their bit
// representation before any order-sensitive accumulation, so results do not
// depend on the stored element order at all. kInputOrder is a diagnostic mode
// that accumulates in storage order.
enum class Reduction { kCanonical, kInputOrder };

// One H x W x D feature map, stored with d fastest, then w, then h.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t d, double fill = 0.0);
  // Throws InvariantError on empty dims, wrong length or non-finite values.
  FeatureMap(std::size_t h, std::size_t w, std::size_t d, std::vector<double> values);

  std::size_t h() const noexcept { return h_; }
  std::size_t w() const noexcept { return w_; }
  std::size_t d() const noexcept { return d_; }
  std::size_t positions() const noexcept { return h_ * w_; }

  double& at(std::size_t y, std::size_t x, std::size_t c) { return values_[(y * w_ + x) * d_ + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return values_[(y * w_ + x) * d_ + c];
  }

  // The D-vector stored at plane position p = y * W + x.
  std::span<double> position(std::size_t p) { return {values_.data() + p * d_, d_}; }
  std::span<const double> position(std::size_t p) const { return {values_.data() + p * d_, d_}; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const FeatureMap& other) const noexcept {
    return h_ == other.h_ && w_ == other.w_ && d_ == other.d_;
  }

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::size_t d_ = 0;
  std::vector<double> values_;
};

// One subject's image set: N homogeneous feature maps plus an optional label.
struct FeatureSet {
  std::vector<FeatureMap> maps;
  std::optional<std::uint32_t> identity;

  std::size_t size() const noexcept { return maps.size(); }
  const FeatureMap& front() const { return maps.front(); }

  // Throws InvariantError unless non-empty, homogeneous and finite.
  void validate() const;

  friend bool operator==(const FeatureSet&, const FeatureSet&) = default;
};

// N pooled D-vectors, one matrix row per set element.
struct PooledSet {
  DenseMatrix vectors;

  std::size_t size() const noexcept { return vectors.rows(); }
  std::size_t dim() const noexcept { return vectors.cols(); }
  std::span<const double> vector(std::size_t i) const { return vectors.row(i); }

  friend bool operator==(const PooledSet&, const PooledSet&) = default;
};

// Set-level average of pooled vectors.
struct SetDescriptor {
  DenseVector vector;
};

// Permutation `order` such that order[k] is the storage index of the k-th
// element in canonical (bitwise lexicographic) order. Identity permutation
// for Reduction::kInputOrder.
std::vector<std::size_t> canonical_order(const FeatureSet& set, Reduction mode = Reduction::kCanonical);
std::vector<std::size_t> canonical_order(const PooledSet& set, Reduction mode = Reduction::kCanonical);

FeatureSet permuted(const FeatureSet& set, std::span<const std::size_t> order);
PooledSet permuted(const PooledSet& set, std::span<const std::size_t> order);

// Spatial average over the H x W plane, per channel.
DenseVector global_pool(const FeatureMap& map);

PooledSet pool_set(const FeatureSet& set);

SetDescriptor set_average(const PooledSet& pooled, Reduction mode = Reduction::kCanonical);

// Negated mean pairwise Euclidean distance (larger is more similar).
double baseline_mean_l2(const PooledSet& probe, const PooledSet& gallery,
                        Reduction mode = Reduction::kCanonical);

// Negated distance between set means.
double baseline_avepool(const PooledSet& probe, const PooledSet& gallery,
                        Reduction mode = Reduction::kCanonical);

}  // namespace pifr

#endif  // PIFR_SETREP_HPP_
