// SPDX-FileCopyrightText: 2026 The eciwb Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace eciwb {

// Base of every error the library throws. Callers that only need a message
// can catch this; the CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes, or a shape that disagrees with a config.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the operation's domain (axis, index, hyperparameter...).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Misuse of the gradient tape (closed tape, non-scalar loss, no tape).
class TapeError : public Error {
 public:
  using Error::Error;
};

// Checkpoint container problems. Each failure mode has its own kind so callers
// and tests can tell them apart without parsing messages.
class FormatError : public Error {
 public:
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated, kCorrupt, kIo };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Benchmark/dataset ingestion problems. line() is 1-based, 0 when unknown.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0) : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Run-config schema violations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A non-finite loss during training.
class NanLossError : public Error {
 public:
  NanLossError(const std::string& what, long step) : Error(what), step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace eciwb
