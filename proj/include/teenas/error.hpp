// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace teenas {

// Rejections of malformed inputs use std::invalid_argument directly. The
// types below mark outcomes that callers (mostly the CLI) map onto exit codes.

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SearchExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyFront : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace teenas
