// Copyright (c) 2026 the dvpo authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dvpo {

// Error taxonomy. The CLI maps these onto distinct exit codes (see tools/).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

// Non-finite values or failed numeric convergence.
struct NumericError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

// A pipeline stage was launched before the artifact it depends on exists.
struct MissingArtifactError : Error {
  using Error::Error;
};

}  // namespace dvpo
