#pragma once

#include <stdexcept>
#include <string>

namespace vplab {

/// Root of every error raised by the library. Callers that only need a
/// message can catch this; the service layer maps subclasses to HTTP codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VPLAB_DECLARE_ERROR(Name)              \
  class Name : public Error {                  \
   public:                                     \
    using Error::Error;                        \
  }

// segcore
VPLAB_DECLARE_ERROR(EncoderNotFound);
VPLAB_DECLARE_ERROR(InvalidImage);
VPLAB_DECLARE_ERROR(InvalidPrompt);
VPLAB_DECLARE_ERROR(ShapeError);
VPLAB_DECLARE_ERROR(SlotError);
VPLAB_DECLARE_ERROR(ConfigError);

// peft
VPLAB_DECLARE_ERROR(TargetResolutionError);
VPLAB_DECLARE_ERROR(MergeStateError);
VPLAB_DECLARE_ERROR(ConfigMismatch);
VPLAB_DECLARE_ERROR(CorruptCheckpoint);

// matcher
VPLAB_DECLARE_ERROR(EmptyReference);
VPLAB_DECLARE_ERROR(NoMatch);

// trainer
VPLAB_DECLARE_ERROR(SpecError);

// service
VPLAB_DECLARE_ERROR(MigrationRequired);

#undef VPLAB_DECLARE_ERROR

/// Raised when a forward pass produces a non-finite value. `layer` is the
/// two-way block index, or -1 for stages outside the block stack.
class NumericalError : public Error {
 public:
  NumericalError(int layer, const std::string& what)
      : Error("non-finite value at layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

  [[nodiscard]] int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

}  // namespace vplab
