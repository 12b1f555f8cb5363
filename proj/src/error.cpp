#include "defog/error.hpp"

namespace defog {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kOk: return "ok";
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kDimension: return "dimension error";
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kTopology: return "topology error";
    case ErrorCode::kCancelled: return "cancelled";
    case ErrorCode::kTransport: return "transport error";
    case ErrorCode::kDegenerate: return "numerical degeneracy";
    case ErrorCode::kConfig: return "configuration error";
    case ErrorCode::kUsage: return "usage error";
    case ErrorCode::kInternal: return "internal error";
  }
  return "unknown error";
}

void throw_error(ErrorCode code, const std::string& what) {
  switch (code) {
    case ErrorCode::kInvalidArgument: throw InvalidArgument(what);
    case ErrorCode::kDimension: throw DimensionError(what);
    case ErrorCode::kShape: throw ShapeError(what);
    case ErrorCode::kTopology: throw TopologyError(what);
    case ErrorCode::kCancelled: throw CancelledError(what);
    case ErrorCode::kTransport: throw TransportError(what);
    case ErrorCode::kDegenerate: throw DegeneracyError(what);
    case ErrorCode::kConfig: throw ConfigError(what);
    case ErrorCode::kUsage: throw UsageError(what);
    default: throw Error(code, what);
  }
}

}  // namespace defog
