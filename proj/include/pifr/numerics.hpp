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


#ifndef PIFR_NUMERICS_HPP_
#define PIFR_NUMERICS_HPP_

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace pifr {

using DenseVector = std::vector<double>;

// Row-major dense matrix of finite doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws DimensionError if data.size() != rows * cols.
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  DenseMatrix transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseVector matvec(const DenseMatrix& a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double norm2(std::span<const double> a);

// Lower-triangular Cholesky factor of an SPD matrix, reusable across
// right-hand sides.
class Cholesky {
 public:
  // Throws DimensionError for non-square input, FactorizationError when the
  // matrix is asymmetric beyond 1e-10 (relative to its largest entry) or not
  // positive-definite.
  explicit Cholesky(const DenseMatrix& g);

  std::size_t dim() const noexcept { return lower_.rows(); }
  DenseVector solve(std::span<const double> rhs) const;

 private:
  DenseMatrix lower_;
};

DenseVector solve_spd(const DenseMatrix& g, std::span<const double> rhs);

// Central-difference gradient (f(x+h e_k) - f(x-h e_k)) / 2h.
// Throws Error when step <= 0 or f returns a non-finite value.
DenseVector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                             std::span<const double> at, double step);

// Runs body(i) for i in [0, count) on up to `threads` workers. Work items must
// be independent; the first exception thrown by any item is rethrown.
void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& body);

// Total order on real sequences by their IEEE-754 bit patterns, compared
// lexicographically. Used to fix reduction order independent of input order.
bool bitwise_less(std::span<const double> a, std::span<const double> b) noexcept;
bool bitwise_equal(std::span<const double> a, std::span<const double> b) noexcept;

}  // namespace pifr

#endif  // PIFR_NUMERICS_HPP_
