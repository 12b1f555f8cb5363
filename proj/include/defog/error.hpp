#pragma once

#include <stdexcept>
#include <string>

namespace defog {

enum class ErrorCode : int {
  kOk = 0,
  kInvalidArgument = 1,
  kDimension = 2,
  kShape = 3,
  kTopology = 4,
  kCancelled = 5,
  kTransport = 6,
  kDegenerate = 7,
  kConfig = 8,
  kUsage = 9,
  kInternal = 10,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define DEFOG_DEFINE_ERROR(Name, Code)                                 \
  class Name : public Error {                                          \
   public:                                                             \
    explicit Name(const std::string& what) : Error(ErrorCode::Code, what) {} \
  };

DEFOG_DEFINE_ERROR(InvalidArgument, kInvalidArgument)
DEFOG_DEFINE_ERROR(DimensionError, kDimension)
DEFOG_DEFINE_ERROR(ShapeError, kShape)
DEFOG_DEFINE_ERROR(TopologyError, kTopology)
DEFOG_DEFINE_ERROR(CancelledError, kCancelled)
DEFOG_DEFINE_ERROR(TransportError, kTransport)
DEFOG_DEFINE_ERROR(DegeneracyError, kDegenerate)
DEFOG_DEFINE_ERROR(ConfigError, kConfig)
DEFOG_DEFINE_ERROR(UsageError, kUsage)

#undef DEFOG_DEFINE_ERROR

// Rethrows a stored (code, message) pair as the matching exception type.
[[noreturn]] void throw_error(ErrorCode code, const std::string& what);

}  // namespace defog
