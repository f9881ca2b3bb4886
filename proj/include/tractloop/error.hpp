#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace tractloop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated input file. `offset()` is a byte offset for binary
/// formats and a 1-based line number for text formats.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong session state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Training data contains a single class.
class NeedBothClasses : public Error {
 public:
  NeedBothClasses() : Error("need both classes") {}
};

/// Submitted label batch does not match the outstanding candidates.
class LabelMismatch : public Error {
 public:
  LabelMismatch(std::vector<std::size_t> missing,
                std::vector<std::size_t> unexpected,
                std::vector<std::size_t> duplicated);

  const std::vector<std::size_t>& missing() const noexcept { return missing_; }
  const std::vector<std::size_t>& unexpected() const noexcept { return unexpected_; }
  const std::vector<std::size_t>& duplicated() const noexcept { return duplicated_; }

 private:
  std::vector<std::size_t> missing_;
  std::vector<std::size_t> unexpected_;
  std::vector<std::size_t> duplicated_;
};

class TooFewRoiStreamlines : public Error {
 public:
  TooFewRoiStreamlines(std::size_t found, std::size_t required);
  std::size_t found() const noexcept { return found_; }
  std::size_t required() const noexcept { return required_; }

 private:
  std::size_t found_;
  std::size_t required_;
};

}  // namespace tractloop
