#pragma once

#include <stdexcept>
#include <string>

namespace agsd {

// Every library failure derives from Error so callers can catch one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- estimators ------------------------------------------------------------

// Raised by estimators that cannot be evaluated on the data at hand. Monitoring
// treats this as "not enough data yet"; the bootstrap retries the resample.
class EstimatorFailure : public Error {
 public:
  using Error::Error;
};

class EmptyArm : public EstimatorFailure {
 public:
  using EstimatorFailure::EstimatorFailure;
};

class NonMonotoneMissingness : public EstimatorFailure {
 public:
  using EstimatorFailure::EstimatorFailure;
};

class WeightOverflow : public EstimatorFailure {
 public:
  using EstimatorFailure::EstimatorFailure;
};

class DegenerateSampleSize : public EstimatorFailure {
 public:
  using EstimatorFailure::EstimatorFailure;
};

// ---- covariance / orthogonalize -------------------------------------------

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class SingularIncrementMatrix : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

// ---- boundaries / design ---------------------------------------------------

class DomainError : public Error {
 public:
  using Error::Error;
};

class NoRoot : public Error {
 public:
  using Error::Error;
};

class TerminalState : public Error {
 public:
  using Error::Error;
};

// ---- sim / cli -------------------------------------------------------------

class FailedReplicates : public Error {
 public:
  FailedReplicates(const std::string& what, long count)
      : Error(what), count_(count) {}
  long count() const { return count_; }

 private:
  long count_;
};

// `path` is the dotted location of the offending field, e.g. "design.thetaA".
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : Error(path + ": " + message), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

class StateMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace agsd
