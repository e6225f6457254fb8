#pragma once

#include <stdexcept>
#include <string>

namespace ste {

enum class ErrorKind { config, domain, simulation, training, inference, io };

/// Base of every exception thrown by the library. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

/// Argument outside the mathematical domain of an operation (t <= 0, negative mean, ...).
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::domain, what) {}
};

class SimulationError : public Error {
 public:
  explicit SimulationError(const std::string& what) : Error(ErrorKind::simulation, what) {}
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch = -1) : Error(ErrorKind::training, what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class InferenceError : public Error {
 public:
  explicit InferenceError(const std::string& what) : Error(ErrorKind::inference, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

}  // namespace ste
