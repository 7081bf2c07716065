#pragma once

#include <stdexcept>
#include <string>

namespace jelly {

/// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

/// An annotation or record violates a type invariant; `field()` names it.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An API contract was broken by the caller (e.g. backward from a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class EmptyDatasetError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(int epoch, const std::string& what)
      : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

}  // namespace jelly
