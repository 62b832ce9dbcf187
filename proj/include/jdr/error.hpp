#pragma once

#include <stdexcept>
#include <string>

namespace jdr {

/// Base of every error the library throws. The concrete type names the
/// failure class; what() carries the detail.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define JDR_DEFINE_ERROR(Name)                      \
  class Name : public Error {                       \
   public:                                          \
    explicit Name(const std::string& what)          \
        : Error(std::string(#Name ": ") + what) {}  \
  }

JDR_DEFINE_ERROR(ShapeMismatch);
JDR_DEFINE_ERROR(RankError);
JDR_DEFINE_ERROR(GeometryError);
JDR_DEFINE_ERROR(QuantMismatch);
JDR_DEFINE_ERROR(StrideUnsupported);
JDR_DEFINE_ERROR(InvalidArgument);

// Input decoding.
JDR_DEFINE_ERROR(UnsupportedFormat);
JDR_DEFINE_ERROR(CorruptStream);
JDR_DEFINE_ERROR(TruncatedFile);
JDR_DEFINE_ERROR(SubsamplingUnsupported);

// Weight files.
JDR_DEFINE_ERROR(CorruptFile);
JDR_DEFINE_ERROR(VersionMismatch);

JDR_DEFINE_ERROR(ConfigError);

#undef JDR_DEFINE_ERROR

}  // namespace jdr
