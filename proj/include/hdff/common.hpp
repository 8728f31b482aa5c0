// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hdff {

using Real = double;

// Base for every error raised by the framework. Subclasses exist so the CLI
// can map failures onto its exit-code contract.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: config, arguments, manifests, policy files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed, truncated or incompatible serialized state.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A training invariant was broken (frozen-parameter drift, non-finite loss,
// illegal stage transition at run time).
class InvariantError : public Error {
 public:
  using Error::Error;
};

enum class ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2 };

}  // namespace hdff
