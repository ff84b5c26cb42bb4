#pragma once

#include <stdexcept>
#include <string>

namespace dot {

// Base of every error raised by the library. The CLI maps these to a
// one-line diagnostic and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke an operation precondition (e.g. merging a parent whose
// children are not all leaves).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// NodeId does not resolve to a live node of the expected kind.
class HandleError : public Error {
 public:
  using Error::Error;
};

class DepthCappedError : public Error {
 public:
  using Error::Error;
};

class OutOfBoundsError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

// A buffer (signal, gradient) was produced against a different tree
// topology than the one it is applied to.
class StaleError : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  enum class Kind { kMissingFile, kMalformedJson, kImageSize, kImageDecode };
  LoadError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

class FormatError : public Error {
 public:
  enum class Kind { kIo, kCrc, kMagic, kVersion, kStructure };
  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace dot
