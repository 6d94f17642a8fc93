#pragma once

#include <stdexcept>
#include <string>

namespace heatflow {

/// Raised by the model / scenario parsers with a 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& reason)
      : std::runtime_error("line " + std::to_string(line) + ": " + reason), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Structural problems in an otherwise well-formed model file
/// (unknown parent, duplicate body name, cycle, non-physical inertia...).
class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// Mass matrix not positive definite at the queried configuration.
class SingularMass : public std::runtime_error {
 public:
  explicit SingularMass(const std::string& what) : std::runtime_error(what) {}
};

class InvalidDegree : public std::invalid_argument {
 public:
  explicit InvalidDegree(const std::string& what) : std::invalid_argument(what) {}
};

/// Interpolation query outside [-1, 1] (beyond a small tolerance).
class OutOfDomain : public std::domain_error {
 public:
  explicit OutOfDomain(const std::string& what) : std::domain_error(what) {}
};

/// Grid boundary rows disagree with the requested endpoint states.
class BoundaryMismatch : public std::runtime_error {
 public:
  explicit BoundaryMismatch(const std::string& what) : std::runtime_error(what) {}
};

/// A simulation produced a non-finite state.
class Diverged : public std::runtime_error {
 public:
  explicit Diverged(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace heatflow
