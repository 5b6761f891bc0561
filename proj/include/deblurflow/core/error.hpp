#pragma once

#include <stdexcept>
#include <string>

namespace deblurflow {

// Failure categories surfaced to callers. The CLI maps each kind to an
// exit code, so the set is closed.
enum class ErrorKind { kInvalidArgument, kNotFound, kDependency, kNumericFailure, kUnsupported };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& w) : Error(ErrorKind::kInvalidArgument, w) {}
};
struct NotFound : Error {
  explicit NotFound(const std::string& w) : Error(ErrorKind::kNotFound, w) {}
};
struct DependencyError : Error {
  explicit DependencyError(const std::string& w) : Error(ErrorKind::kDependency, w) {}
};
struct Unsupported : Error {
  explicit Unsupported(const std::string& w) : Error(ErrorKind::kUnsupported, w) {}
};

/// Raised when a value turns NaN/Inf. `where` carries the step or epoch
/// index so runs can be diagnosed from the message alone.
struct NumericFailure : Error {
  NumericFailure(const std::string& w, long where)
      : Error(ErrorKind::kNumericFailure, w + " (at index " + std::to_string(where) + ")"), index(where) {}
  long index;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace deblurflow
