#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gtppo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateRecordError : public Error {
 public:
  DuplicateRecordError(long frame, long ped)
      : Error("duplicate record for frame " + std::to_string(frame) + ", pedestrian " +
              std::to_string(ped)),
        frame_(frame),
        ped_(ped) {}
  long frame() const noexcept { return frame_; }
  long ped() const noexcept { return ped_; }

 private:
  long frame_;
  long ped_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

/// Raised when training produces a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace gtppo
