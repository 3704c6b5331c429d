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

#ifndef PIFR_ERROR_HPP_
#define PIFR_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace pifr {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A matrix expected to be symmetric positive-definite is not.
class FactorizationError : public Error {
 public:
  using Error::Error;
};

// Coding solver failed (singular ridge system, non-convergence, bad config).
class SolverError : public Error {
 public:
  using Error::Error;
};

// A value violates a type invariant (non-finite entry, empty set, ...).
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Binary container / checkpoint decoding failures.
class FormatError : public Error {
 public:
  enum class Kind { kIo, kBadMagic, kBadVersion, kTruncated, kNonFinite, kShape };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace pifr

#endif  // PIFR_ERROR_HPP_
