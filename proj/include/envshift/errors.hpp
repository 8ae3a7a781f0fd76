#pragma once

#include <stdexcept>
#include <string>

namespace envshift {

// Every failure raised by the library derives from Error so callers can
// catch one type and still branch on the concrete kind when needed.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ENVSHIFT_DEFINE_ERROR(Name)                 \
  class Name : public Error {                       \
   public:                                          \
    explicit Name(const std::string& what)          \
        : Error(std::string(#Name ": ") + what) {}  \
  };

ENVSHIFT_DEFINE_ERROR(ConfigError)
ENVSHIFT_DEFINE_ERROR(ShapeError)
ENVSHIFT_DEFINE_ERROR(EmptySelection)
ENVSHIFT_DEFINE_ERROR(MissingClass)
ENVSHIFT_DEFINE_ERROR(SingleEnv)
ENVSHIFT_DEFINE_ERROR(PairingError)
ENVSHIFT_DEFINE_ERROR(InsufficientData)
ENVSHIFT_DEFINE_ERROR(OneClassOnly)
ENVSHIFT_DEFINE_ERROR(MissingDetector)
ENVSHIFT_DEFINE_ERROR(ZeroVector)
ENVSHIFT_DEFINE_ERROR(FormatError)

#undef ENVSHIFT_DEFINE_ERROR

/// Raised when a loss or activation stops being finite. `layer` is the index
/// of the first layer whose output was non-finite, or -1 when the loss itself
/// was the first non-finite quantity.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, int layer)
      : Error("NumericalError: " + what + " (layer " + std::to_string(layer) + ")"),
        layer_(layer) {}
  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

}  // namespace envshift
