#pragma once

#include <stdexcept>
#include <string>

namespace lifegen {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define LIFEGEN_DEFINE_ERROR(Name)                               \
  struct Name : Error {                                          \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

// tensor / autodiff
LIFEGEN_DEFINE_ERROR(ShapeMismatch);
LIFEGEN_DEFINE_ERROR(DomainError);
LIFEGEN_DEFINE_ERROR(AxisOutOfRange);
LIFEGEN_DEFINE_ERROR(NotScalar);
LIFEGEN_DEFINE_ERROR(StaleTape);
LIFEGEN_DEFINE_ERROR(MissingGradient);
LIFEGEN_DEFINE_ERROR(NonFinite);

// cvae / lifelong
LIFEGEN_DEFINE_ERROR(UnknownLabel);
LIFEGEN_DEFINE_ERROR(NoSnapshot);
LIFEGEN_DEFINE_ERROR(LabelOverlap);
LIFEGEN_DEFINE_ERROR(EmptyDataset);

// data
LIFEGEN_DEFINE_ERROR(BadMagic);
LIFEGEN_DEFINE_ERROR(CountMismatch);
LIFEGEN_DEFINE_ERROR(TruncatedFile);
LIFEGEN_DEFINE_ERROR(MissingClass);

// metrics
LIFEGEN_DEFINE_ERROR(TooFewSamples);
LIFEGEN_DEFINE_ERROR(NotSymmetric);
LIFEGEN_DEFINE_ERROR(DimensionMismatch);
LIFEGEN_DEFINE_ERROR(ClassMissing);
LIFEGEN_DEFINE_ERROR(TooFewImages);

// config / io
LIFEGEN_DEFINE_ERROR(UnknownKey);
LIFEGEN_DEFINE_ERROR(BadValue);
LIFEGEN_DEFINE_ERROR(MissingDataRoot);
LIFEGEN_DEFINE_ERROR(IoError);
LIFEGEN_DEFINE_ERROR(BadCheckpoint);

#undef LIFEGEN_DEFINE_ERROR

}  // namespace lifegen
