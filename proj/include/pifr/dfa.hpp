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


#ifndef PIFR_DFA_HPP_
#define PIFR_DFA_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pifr/numerics.hpp"
#include "pifr/setrep.hpp"

namespace pifr {

// Coding objective per probe vector x over gallery dictionary Y (D x M):
//   |x - Y a|^2 + (lambda / M) * penalty(a)
// with penalty = |a|_1 for p = 1 and |a|_2^2 for p = 2.
struct CodingConfig {
  int p = 2;
  double lambda = 1.0;
  // Feature-sign search step budget.
  std::size_t max_iterations = 1000;
  Reduction reduction = Reduction::kCanonical;

  void validate() const;
};

// Column n holds the code of probe vector n; rows follow the gallery's order.
struct CodingMatrix {
  DenseMatrix a;
  CodingConfig config;
};

// A gallery set prepared for repeated coding: atoms in canonical order, their
// Gram matrix and, for p = 2, the factorized ridge system.
class GalleryDictionary {
 public:
  GalleryDictionary(const PooledSet& gallery, const CodingConfig& config);

  std::size_t atoms() const noexcept { return atoms_.rows(); }
  std::size_t dim() const noexcept { return atoms_.cols(); }
  const CodingConfig& config() const noexcept { return config_; }
  // order()[k] is the gallery index of canonical atom k.
  std::span<const std::size_t> order() const noexcept { return order_; }
  const DenseMatrix& gram() const noexcept { return gram_; }

  // Optimal code in canonical atom order. Throws SolverError.
  DenseVector code(std::span<const double> x) const;
  // x - Y a for a code in canonical atom order.
  DenseVector residual(std::span<const double> x, std::span<const double> code) const;
  // Canonical-order code scattered back to the gallery's storage order.
  DenseVector to_gallery_order(std::span<const double> code) const;

 private:
  DenseVector correlate(std::span<const double> x) const;
  DenseVector solve_ridge(std::span<const double> x) const;
  DenseVector feature_sign(std::span<const double> x) const;

  CodingConfig config_;
  std::vector<std::size_t> order_;
  DenseMatrix atoms_;  // M x D, canonical order
  DenseMatrix gram_;
  std::optional<Cholesky> ridge_;
  std::string ridge_error_;
};

// Penalty weight lambda / M.
double penalty_weight(const CodingConfig& config, std::size_t atoms);
double coding_penalty(std::span<const double> a, int p);
// Full per-vector objective, gallery in storage order.
double coding_objective(std::span<const double> x, const PooledSet& gallery,
                        std::span<const double> a, const CodingConfig& config);

// Ridge code (p = 2). Throws SolverError when lambda = 0 and the Gram matrix is singular.
DenseVector solve_collaborative(std::span<const double> x, const PooledSet& gallery,
                                const CodingConfig& config);

// l1 code (p = 1) by feature-sign search. Throws SolverError when lambda = 0
// or the step budget runs out.
DenseVector solve_sparse(std::span<const double> x, const PooledSet& gallery, const CodingConfig& config);

// Largest violation of the l1 optimality conditions at `a`.
double sparse_kkt_residual(std::span<const double> x, const PooledSet& gallery,
                           std::span<const double> a, const CodingConfig& config);

CodingMatrix code_set(const PooledSet& probe, const PooledSet& gallery, const CodingConfig& config,
                      std::size_t threads = 1);
CodingMatrix code_set(const PooledSet& probe, const GalleryDictionary& gallery, std::size_t threads = 1);

// -(1/N) |X - Y A|_F^2; the coding penalty is not part of the score.
double set_similarity(const PooledSet& probe, const PooledSet& gallery, const CodingConfig& config);
double set_similarity(const PooledSet& probe, const GalleryDictionary& gallery);

double symmetric_similarity(const PooledSet& probe, const PooledSet& gallery, const CodingConfig& config);

}  // namespace pifr

#endif  // PIFR_DFA_HPP_
