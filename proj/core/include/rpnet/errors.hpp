#ifndef RPNET_ERRORS_HPP
#define RPNET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace rpnet {

// Shape or operand mismatch while recording a tape op.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed input files (IDX, checkpoints) or inconsistent dataset contents.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-facing configuration: unknown pipeline name, invalid CLI/config
// value, out-of-range parameter.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite loss or other numeric breakdown during training/attacks.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rpnet

#endif  // RPNET_ERRORS_HPP
