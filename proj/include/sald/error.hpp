// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sald {

/// Root of every exception the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value or combination (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Tensor or image shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the autodiff graph, e.g. backward through a detached tensor.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Malformed serialized data (payload, checkpoint, manifest, image file).
class FormatError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values in a computation (CLI exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The serialized payload does not fit the edge byte budget.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(std::size_t actual, std::size_t budget)
      : Error("payload of " + std::to_string(actual) +
              " bytes exceeds budget of " + std::to_string(budget) + " bytes"),
        actual_(actual),
        budget_(budget) {}

  std::size_t actual() const noexcept { return actual_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t actual_;
  std::size_t budget_;
};

/// The channel refused a payload larger than B_max.
class TransmissionRejected : public Error {
 public:
  TransmissionRejected(std::size_t actual, std::size_t budget)
      : Error("transmission rejected: " + std::to_string(actual) +
              " bytes > budget " + std::to_string(budget)),
        actual_(actual),
        budget_(budget) {}

  std::size_t actual() const noexcept { return actual_; }
  std::size_t budget() const noexcept { return budget_; }

 private:
  std::size_t actual_;
  std::size_t budget_;
};

}  // namespace sald
