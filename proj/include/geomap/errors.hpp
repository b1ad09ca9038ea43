#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace geomap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A point or path left the territory where a field is known.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what,
                       std::optional<Eigen::VectorXd> last_valid = std::nullopt)
      : Error(what), last_valid_(std::move(last_valid)) {}

  const std::optional<Eigen::VectorXd>& last_valid() const { return last_valid_; }

 private:
  std::optional<Eigen::VectorXd> last_valid_;
};

class SingularMetricError : public Error {
 public:
  using Error::Error;
};

class SingularCovarianceError : public Error {
 public:
  SingularCovarianceError(const std::string& what, std::size_t cell)
      : Error(what), cell_(cell) {}
  std::size_t cell() const { return cell_; }

 private:
  std::size_t cell_;
};

class InvalidFrameError : public Error {
 public:
  using Error::Error;
};

class NoSolutionError : public Error {
 public:
  NoSolutionError(const std::string& what, double best_residual)
      : Error(what), best_residual_(best_residual) {}
  double best_residual() const { return best_residual_; }

 private:
  double best_residual_;
};

class InvalidSegmentError : public Error {
 public:
  using Error::Error;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

class EmbeddingError : public Error {
 public:
  using Error::Error;
};

class DisconnectedGraphError : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

class OutOfSupportError : public Error {
 public:
  using Error::Error;
};

class BehindCameraError : public Error {
 public:
  using Error::Error;
};

class MeasurementError : public Error {
 public:
  MeasurementError(const std::string& what, std::size_t channel)
      : Error(what), channel_(channel) {}
  std::size_t channel() const { return channel_; }

 private:
  std::size_t channel_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Wraps an error raised inside a named pipeline stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace geomap
