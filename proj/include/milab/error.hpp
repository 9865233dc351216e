// Copyright 2026 The milab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MILAB_ERROR_HPP_
#define MILAB_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace milab {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or inconsistent configuration (bad sizes, malformed arch, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

/// An erase policy was used with an operation it does not support.
class InvalidPolicy : public Error {
public:
  using Error::Error;
};

/// No feasible region placement exists.
class GeometryError : public Error {
public:
  using Error::Error;
};

/// Tensor/batch dimensions do not match.
class ShapeError : public Error {
public:
  using Error::Error;
};

/// Filesystem read/write failure.
class IoError : public Error {
public:
  using Error::Error;
};

/// On-disk data is structurally corrupt (bad header, length mismatch).
class FormatError : public Error {
public:
  using Error::Error;
};

/// Loaded data violates a documented invariant (label range, NaN pixels).
class InvariantError : public Error {
public:
  using Error::Error;
};

/// A training or attack loss became non-finite.
class DivergenceError : public Error {
public:
  using Error::Error;
};

/// A requested identity has no samples in the reference set.
class MissingIdentityError : public Error {
public:
  using Error::Error;
};

/// A statistic is undefined for the given inputs (rank-deficient, 0/0).
class DegenerateError : public Error {
public:
  using Error::Error;
};

}  // namespace milab

#endif  // MILAB_ERROR_HPP_
