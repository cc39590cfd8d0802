#ifndef SUDOKU_ERROR_H_
#define SUDOKU_ERROR_H_

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sudoku {

enum class ErrorKind {
  kInvalidMapping,
  kParseError,
  kAlreadyInjective,
  kDegenerateDistribution,
  kLowConfidence,
  kNoSpikesDetected,
  kStreamsNotRowHit,
  kInsufficientSamples,
  kUnresolvableBit,
  kIrreparableSystem,
  kAmbiguousPeak,
  kInvalidArgument,
};

std::string_view ErrorKindName(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so that
// callers (and the CLI exit-code contract) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what)
      : Error(ErrorKind::kParseError,
              "line " + std::to_string(line) +
                  (field.empty() ? "" : " (" + field + ")") + ": " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

}  // namespace sudoku

#endif  // SUDOKU_ERROR_H_
