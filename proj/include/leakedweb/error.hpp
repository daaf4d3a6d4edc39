#pragma once

#include <stdexcept>
#include <string>

namespace leakedweb {

/// Base for all domain errors. CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A type invariant or operation precondition was violated.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Malformed external input (CSV, JSON, wire frames).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what, long line = -1)
      : Error(line >= 0 ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Wire-protocol violation; the offending connection is dropped.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Host lacks a required kernel interface (procfs, perf events).
class UnsupportedPlatformError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or parameter combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace leakedweb
