#pragma once

#include <stdexcept>
#include <string>

namespace twocurve {

/// Malformed user input: config fields, basis names, invalid arguments.
/// The CLI maps this to exit code 2.
class config_error : public std::invalid_argument {
 public:
  explicit config_error(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical failure such as a singular information matrix.
/// The CLI maps this to exit code 3.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace twocurve
