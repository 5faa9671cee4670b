#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gpseg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid domain, parameters, or option values.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// Field length does not match the grid it is used with.
class DimensionError : public Error {
public:
  using Error::Error;
};

/// A documented precondition of an operation is violated.
class PreconditionError : public Error {
public:
  using Error::Error;
};

/// Linear or eigen solve failed.
class SolverError : public Error {
public:
  SolverError(const std::string& what, int iterations = 0)
      : Error(what), iterations_(iterations) {}
  int iterations() const noexcept { return iterations_; }

private:
  int iterations_;
};

/// Newton iteration blew up; carries the residual history.
class DivergenceError : public SolverError {
public:
  DivergenceError(const std::string& what, std::vector<double> trace)
      : SolverError(what, static_cast<int>(trace.size())), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const noexcept { return trace_; }

private:
  std::vector<double> trace_;
};

/// Deflation did not locate a new solution. A legitimate outcome, not a bug.
class NotFoundError : public SolverError {
public:
  using SolverError::SolverError;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Config text error, tagged with the 1-based line it occurred on (0 if none).
class ParseError : public ConfigError {
public:
  ParseError(int line, const std::string& msg)
      : ConfigError(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

}  // namespace gpseg
