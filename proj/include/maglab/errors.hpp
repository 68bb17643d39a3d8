#pragma once

#include <stdexcept>
#include <string>

namespace maglab {

// Malformed configuration or input files. The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A numerical stage failed to deliver its contract. The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  NumericalError(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind(std::move(kind)) {}
  std::string kind;
};

}  // namespace maglab
