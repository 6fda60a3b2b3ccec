#pragma once

#include <stdexcept>
#include <string>

namespace rca {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define RCA_DEFINE_ERROR(Name)            \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

RCA_DEFINE_ERROR(ShapeMismatch);
RCA_DEFINE_ERROR(SymmetryViolation);
RCA_DEFINE_ERROR(BadCropSize);
RCA_DEFINE_ERROR(OddSpatialDims);
RCA_DEFINE_ERROR(BadConfig);
RCA_DEFINE_ERROR(NonScalarRoot);
RCA_DEFINE_ERROR(TooFewSamples);
RCA_DEFINE_ERROR(IdMismatch);
RCA_DEFINE_ERROR(DivergenceDetected);
RCA_DEFINE_ERROR(IoError);
RCA_DEFINE_ERROR(FormatError);
RCA_DEFINE_ERROR(MissingMask);
RCA_DEFINE_ERROR(CorruptImage);

#undef RCA_DEFINE_ERROR

}  // namespace rca
