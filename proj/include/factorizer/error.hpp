#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace factorizer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller violated a documented precondition (bad argument, shape mismatch).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A serialized file is malformed or carries an unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// No segmentation of a word exists with the available vocabulary.
class CoverageError : public Error {
 public:
  CoverageError(const std::string& what, std::size_t stuck_position)
      : Error(what), stuck_position_(stuck_position) {}

  std::size_t stuck_position() const noexcept { return stuck_position_; }

 private:
  std::size_t stuck_position_;
};

/// A triplet that is not part of the vocabulary was passed to detokenize.
class UnknownTripletError : public Error {
 public:
  UnknownTripletError(const std::string& what, std::size_t position)
      : Error(what), position_(position) {}

  std::size_t position() const noexcept { return position_; }

 private:
  std::size_t position_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long step) : Error(what), step_(step) {}

  long step() const noexcept { return step_; }

 private:
  long step_;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace factorizer
