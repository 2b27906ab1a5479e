#pragma once

#include <stdexcept>
#include <string>

namespace cvault {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed paths, wrong sizes, invalid configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Data failed a hash or authentication check.
class IntegrityError : public Error {
 public:
  explicit IntegrityError(const std::string& what, long long chunk_index = -1)
      : Error(what), chunk_index_(chunk_index) {}

  // -1 when the failure is not tied to a particular chunk.
  long long chunk_index() const noexcept { return chunk_index_; }

 private:
  long long chunk_index_;
};

// Operation refused because of root lifecycle or alarm state.
class LifecycleError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// Not enough stripes or no reachable cache nodes.
class UnavailableError : public Error {
 public:
  using Error::Error;
};

}  // namespace cvault
