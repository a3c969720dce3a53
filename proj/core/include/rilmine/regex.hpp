// SPDX-License-Identifier: Apache-2.0
//
// Small Thompson-NFA regex engine. Linear in the input for any pattern, so
// nested quantifiers such as `([^/ ]*)+` cannot blow up the way they do in
// backtracking engines.
//
// Supported syntax: literals, `.`, `[...]` / `[^...]` with ranges, groups,
// `|`, `*`, `+`, `?` (each optionally followed by a lazy `?`, which does not
// change what matches), `^`, `$` and `\` escapes.

#pragma once

#include <bitset>
#include <string>
#include <string_view>
#include <vector>

namespace rilmine::rx {

class Regex {
 public:
  /// Throws rilmine::ParseError on malformed patterns.
  explicit Regex(std::string_view pattern);

  /// Whole-string match, as std::regex_match.
  bool full_match(std::string_view text) const;
  /// Match anywhere, as std::regex_search.
  bool search(std::string_view text) const;

  const std::string& pattern() const { return pattern_; }

 private:
  struct State {
    enum class Kind : std::uint8_t { Chars, Split, Begin, End, Match };
    Kind kind = Kind::Match;
    std::bitset<256> chars;
    int out = -1;
    int out2 = -1;
  };

  bool run(std::string_view text, bool anchored) const;
  void closure(int s, std::size_t pos, std::size_t size, std::vector<int>& set, std::vector<std::size_t>& mark,
               std::size_t gen) const;

  std::string pattern_;
  std::vector<State> states_;
  int start_ = -1;

  friend class Compiler;
};

}  // namespace rilmine::rx
