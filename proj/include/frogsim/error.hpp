#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace frogsim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A construction parameter or call precondition was violated.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A vertex path that does not exist in the tree.
class InvalidVertex : public Error {
 public:
  explicit InvalidVertex(const std::string& path) : Error("invalid vertex: " + path) {}
};

/// Materialization would exceed the configured vertex cap.
class VertexCapExceeded : public Error {
 public:
  VertexCapExceeded(std::size_t requested, std::size_t cap)
      : Error("vertex cap exceeded: " + std::to_string(requested) + " vertices requested, cap " +
              std::to_string(cap)),
        requested_(requested),
        cap_(cap) {}

  std::size_t requested() const noexcept { return requested_; }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t requested_;
  std::size_t cap_;
};

/// An audited inequality failed on a concrete instance.
class AuditFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace frogsim
