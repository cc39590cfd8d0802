#include "sudoku/error.h"

namespace sudoku {

std::string_view ErrorKindName(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidMapping: return "InvalidMapping";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kAlreadyInjective: return "AlreadyInjective";
    case ErrorKind::kDegenerateDistribution: return "DegenerateDistribution";
    case ErrorKind::kLowConfidence: return "LowConfidence";
    case ErrorKind::kNoSpikesDetected: return "NoSpikesDetected";
    case ErrorKind::kStreamsNotRowHit: return "StreamsNotRowHit";
    case ErrorKind::kInsufficientSamples: return "InsufficientSamples";
    case ErrorKind::kUnresolvableBit: return "UnresolvableBit";
    case ErrorKind::kIrreparableSystem: return "IrreparableSystem";
    case ErrorKind::kAmbiguousPeak: return "AmbiguousPeak";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace sudoku
