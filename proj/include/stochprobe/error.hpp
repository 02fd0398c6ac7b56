#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace stochprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tree shape does not match the instance (child keys, horizon, group reuse).
class StructuralError : public Error {
 public:
  using Error::Error;
};

// An action id that the instance does not define.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

// A state space, level space or enumeration exceeded its configured cap.
class CapacityError : public Error {
 public:
  CapacityError(const std::string& what, std::size_t count)
      : Error(what), count_(count) {}
  std::size_t count() const noexcept { return count_; }

 private:
  std::size_t count_;
};

class HintError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class DiscretizationError : public Error {
 public:
  using Error::Error;
};

}  // namespace stochprobe
