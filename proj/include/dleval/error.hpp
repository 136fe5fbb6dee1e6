#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dleval {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed KB document or hypothesis text. `location()` is a 1-based line
// number for KB documents and a 0-based byte offset for hypothesis text.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t location)
      : Error(what), location_(location) {}

  std::size_t location() const noexcept { return location_; }

 private:
  std::size_t location_;
};

// Precondition violation on a library call (unknown id, length mismatch, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DeviceError : public Error {
 public:
  DeviceError(const std::string& what, std::size_t device_id)
      : Error(what), device_id_(device_id) {}

  std::size_t device_id() const noexcept { return device_id_; }

 private:
  std::size_t device_id_;
};

// A batch was aborted because of the hypothesis at `index()`.
class BatchError : public Error {
 public:
  BatchError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace dleval
