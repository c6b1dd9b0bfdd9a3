// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace deskmoe {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch at an op boundary.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration violates one of its invariants.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data is unusable (out-of-vocabulary ids, empty streams, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// An API contract was violated by the caller (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Model output does not follow the reasoning template.
class MalformedOutputError : public Error {
 public:
  using Error::Error;
};

/// Checkpoints cannot be combined.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared where a finite one is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File-level failure: missing file, truncated container, bad header.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace deskmoe
