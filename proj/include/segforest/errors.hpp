// Copyright 2026 The SegForest Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace segforest {

/// A precondition of a public operation was violated (wrong sizes, invalid
/// configuration, mismatched layouts). Maps to CLI exit code 3.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed input bytes (PGM, SFF1, DSL strings) or I/O failure. Maps to
/// CLI exit code 2.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An arithmetic operation was applied outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ContractError(message);
}

}  // namespace segforest
