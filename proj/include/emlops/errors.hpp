#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace emlops {

/// Root of every error raised by this project. `kind()` is a stable
/// machine-readable tag; it travels over the HTTP API in error bodies.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual const char* kind() const noexcept { return "error"; }
};

#define EMLOPS_DEFINE_ERROR(Name, tag)                          \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& what) : Error(what) {}     \
    const char* kind() const noexcept override { return tag; }  \
  }

EMLOPS_DEFINE_ERROR(DimensionError, "dimension");
EMLOPS_DEFINE_ERROR(InvalidDataError, "invalid_data");
EMLOPS_DEFINE_ERROR(CalibrationError, "calibration");
EMLOPS_DEFINE_ERROR(IntegrityError, "integrity");
EMLOPS_DEFINE_ERROR(VersionError, "version");
EMLOPS_DEFINE_ERROR(ManifestError, "manifest");
EMLOPS_DEFINE_ERROR(NotFoundError, "not_found");
EMLOPS_DEFINE_ERROR(ConflictError, "conflict");
EMLOPS_DEFINE_ERROR(StateError, "state");
EMLOPS_DEFINE_ERROR(PreconditionError, "precondition");
EMLOPS_DEFINE_ERROR(BadRequestError, "bad_request");
EMLOPS_DEFINE_ERROR(ConfigError, "config");
EMLOPS_DEFINE_ERROR(UnavailableError, "unavailable");
EMLOPS_DEFINE_ERROR(UsageError, "usage");
EMLOPS_DEFINE_ERROR(TrainingError, "training");
EMLOPS_DEFINE_ERROR(StorageError, "storage");
EMLOPS_DEFINE_ERROR(TransportError, "transport");

#undef EMLOPS_DEFINE_ERROR

/// Errors tied to a position in a byte stream (bundle blobs, PPM files).
class OffsetError : public Error {
 public:
  OffsetError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class ParseError : public OffsetError {
 public:
  using OffsetError::OffsetError;
  const char* kind() const noexcept override { return "parse"; }
};

class InputError : public OffsetError {
 public:
  using OffsetError::OffsetError;
  const char* kind() const noexcept override { return "input"; }
};

}  // namespace emlops
