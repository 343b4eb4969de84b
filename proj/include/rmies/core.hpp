// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rmies {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using Array = ArrayX<double>;

// Spectra are stored column-wise: a bands x n matrix is pixel-major,
// band-minor in memory, which is also the on-disk cube layout.
using SpectraMatrix = Matrix;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Errors caused by malformed input data or configuration.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Errors raised when a numerical procedure cannot produce a result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

#define RMIES_DEFINE_ERROR(Name, Base) \
  class Name : public Base {           \
   public:                             \
    using Base::Base;                  \
  }

RMIES_DEFINE_ERROR(FormatError, DataError);
RMIES_DEFINE_ERROR(ParseError, DataError);
RMIES_DEFINE_ERROR(DimensionError, DataError);
RMIES_DEFINE_ERROR(ConfigError, DataError);
RMIES_DEFINE_ERROR(RangeError, DataError);
RMIES_DEFINE_ERROR(GridError, DataError);

RMIES_DEFINE_ERROR(DomainError, NumericalError);
RMIES_DEFINE_ERROR(RankError, NumericalError);
RMIES_DEFINE_ERROR(SingularDesign, NumericalError);
RMIES_DEFINE_ERROR(DegenerateInput, NumericalError);
RMIES_DEFINE_ERROR(PeakOnBoundary, NumericalError);

#undef RMIES_DEFINE_ERROR

inline constexpr const char* kVersion = "0.3.0";

}  // namespace rmies
