// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rilmine/ir.hpp"

namespace rilmine::ir {

/// Parses and links a program file. Throws ParseError, DanglingReference or
/// DuplicateId.
Program load_program(std::string_view text);
Program load_program_file(const std::filesystem::path& path);

/// Canonical text form; `load_program(serialize(p)) == p`.
std::string serialize(const Program& program);

struct Diagnostic {
  std::string invariant;  // short tag, e.g. "member-this-param"
  std::string location;   // e.g. "function f3" or "f3@0:2"
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

/// Checks every structural invariant of the IR. Empty iff the program is
/// well formed.
std::vector<Diagnostic> validate(const Program& program);

}  // namespace rilmine::ir
