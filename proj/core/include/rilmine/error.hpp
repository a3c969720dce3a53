// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rilmine {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed program text. `where` is either "line:col" for syntax errors or
/// a JSON field path such as `functions[2].blocks[0].ops[3].in[1]`.
class ParseError : public Error {
 public:
  ParseError(std::string where, const std::string& what)
      : Error(where + ": " + what), where_(std::move(where)) {}
  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// A cross reference (callee, vtable slot, class name) that names nothing.
class DanglingReference : public Error {
 public:
  using Error::Error;
};

class DuplicateId : public Error {
 public:
  using Error::Error;
};

/// Input that does not satisfy an operation's precondition, e.g. group-byte
/// inference over a single module.
class AmbiguousInput : public Error {
 public:
  using Error::Error;
};

/// Mutation requested on a payload with no dynamic bytes.
class NoMutableBytes : public Error {
 public:
  using Error::Error;
};

}  // namespace rilmine
