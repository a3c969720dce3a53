// SPDX-License-Identifier: Apache-2.0
#include "rilmine/regex.hpp"

#include "rilmine/error.hpp"

namespace rilmine::rx {

namespace {

struct Frag {
  int start = -1;
  std::vector<int*> dangling;  // unpatched `out` slots
};

}  // namespace

class Compiler {
 public:
  Compiler(Regex& re, std::string_view pattern) : re_(re), p_(pattern) {}

  void compile() {
    re_.states_.reserve(p_.size() * 4 + 4);
    Frag f = alternation();
    if (pos_ != p_.size()) fail("unexpected ')'");
    const int match = add({Regex::State::Kind::Match, {}, -1, -1});
    patch(f, match);
    re_.start_ = f.start;
  }

 private:
  using S = Regex::State;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("regex offset " + std::to_string(pos_), what + " in '" + std::string(p_) + "'");
  }

  int add(S s) {
    // Fragments keep pointers into states_, so it must never reallocate.
    if (re_.states_.size() == re_.states_.capacity()) fail("pattern too large");
    re_.states_.push_back(std::move(s));
    return static_cast<int>(re_.states_.size()) - 1;
  }

  void patch(Frag& f, int target) {
    for (int* slot : f.dangling) *slot = target;
    f.dangling.clear();
  }

  bool at_end() const { return pos_ >= p_.size(); }
  char peek() const { return p_[pos_]; }

  Frag alternation() {
    Frag left = concat();
    while (!at_end() && peek() == '|') {
      ++pos_;
      Frag right = concat();
      const int split = add({S::Kind::Split, {}, left.start, right.start});
      Frag f{split, {}};
      f.dangling = left.dangling;
      f.dangling.insert(f.dangling.end(), right.dangling.begin(), right.dangling.end());
      left = std::move(f);
    }
    return left;
  }

  Frag concat() {
    Frag acc;
    bool empty = true;
    while (!at_end() && peek() != '|' && peek() != ')') {
      Frag next = repeat();
      if (empty) {
        acc = std::move(next);
        empty = false;
      } else {
        patch(acc, next.start);
        acc.dangling = std::move(next.dangling);
      }
    }
    if (empty) {
      // Empty branch: a split whose both arms continue.
      const int s = add({S::Kind::Split, {}, -1, -1});
      acc.start = s;
      acc.dangling = {&re_.states_[s].out, &re_.states_[s].out2};
    }
    return acc;
  }

  Frag repeat() {
    Frag a = atom();
    while (!at_end() && (peek() == '*' || peek() == '+' || peek() == '?')) {
      const char q = peek();
      ++pos_;
      if (!at_end() && peek() == '?') ++pos_;  // lazy form; same language
      const int split = add({S::Kind::Split, {}, a.start, -1});
      if (q == '*') {
        patch(a, split);
        a = Frag{split, {&re_.states_[split].out2}};
      } else if (q == '+') {
        patch(a, split);
        a = Frag{a.start, {&re_.states_[split].out2}};
      } else {
        a.dangling.push_back(&re_.states_[split].out2);
        a.start = split;
      }
    }
    return a;
  }

  Frag single(S s) {
    const int id = add(std::move(s));
    return Frag{id, {&re_.states_[id].out}};
  }

  Frag atom() {
    const char c = peek();
    ++pos_;
    switch (c) {
      case '(': {
        Frag f = alternation();
        if (at_end() || peek() != ')') fail("missing ')'");
        ++pos_;
        return f;
      }
      case '[':
        return single({S::Kind::Chars, char_class(), -1, -1});
      case '.': {
        std::bitset<256> all;
        all.set();
        all.reset('\n');
        return single({S::Kind::Chars, all, -1, -1});
      }
      case '^':
        return single({S::Kind::Begin, {}, -1, -1});
      case '$':
        return single({S::Kind::End, {}, -1, -1});
      case '*':
      case '+':
      case '?':
        fail("nothing to repeat");
      case '\\': {
        if (at_end()) fail("trailing backslash");
        std::bitset<256> one;
        one.set(static_cast<unsigned char>(p_[pos_++]));
        return single({S::Kind::Chars, one, -1, -1});
      }
      default: {
        std::bitset<256> one;
        one.set(static_cast<unsigned char>(c));
        return single({S::Kind::Chars, one, -1, -1});
      }
    }
  }

  std::bitset<256> char_class() {
    std::bitset<256> set;
    bool negate = false;
    if (!at_end() && peek() == '^') {
      negate = true;
      ++pos_;
    }
    bool first = true;
    while (true) {
      if (at_end()) fail("missing ']'");
      char c = peek();
      if (c == ']' && !first) {
        ++pos_;
        break;
      }
      first = false;
      ++pos_;
      if (c == '\\') {
        if (at_end()) fail("trailing backslash");
        c = p_[pos_++];
      }
      if (pos_ + 1 < p_.size() && peek() == '-' && p_[pos_ + 1] != ']') {
        const char hi = p_[pos_ + 1];
        pos_ += 2;
        if (static_cast<unsigned char>(hi) < static_cast<unsigned char>(c)) fail("bad range");
        for (int x = static_cast<unsigned char>(c); x <= static_cast<unsigned char>(hi); ++x) set.set(static_cast<std::size_t>(x));
      } else {
        set.set(static_cast<unsigned char>(c));
      }
    }
    return negate ? ~set : set;
  }

  Regex& re_;
  std::string_view p_;
  std::size_t pos_ = 0;
};

Regex::Regex(std::string_view pattern) : pattern_(pattern) {
  Compiler(*this, pattern_).compile();
}

void Regex::closure(int s, std::size_t pos, std::size_t size, std::vector<int>& set, std::vector<std::size_t>& mark,
                    std::size_t gen) const {
  std::vector<int> stack{s};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    if (cur < 0 || mark[static_cast<std::size_t>(cur)] == gen) continue;
    mark[static_cast<std::size_t>(cur)] = gen;
    const auto& st = states_[static_cast<std::size_t>(cur)];
    switch (st.kind) {
      case State::Kind::Split:
        stack.push_back(st.out2);
        stack.push_back(st.out);
        break;
      case State::Kind::Begin:
        if (pos == 0) stack.push_back(st.out);
        break;
      case State::Kind::End:
        if (pos == size) stack.push_back(st.out);
        break;
      default:
        set.push_back(cur);
        break;
    }
  }
}

bool Regex::run(std::string_view text, bool anchored) const {
  std::vector<std::size_t> mark(states_.size(), SIZE_MAX);
  std::size_t gen = 0;
  std::vector<int> cur, next;
  closure(start_, 0, text.size(), cur, mark, gen);
  for (std::size_t pos = 0;; ++pos) {
    for (int s : cur) {
      if (states_[static_cast<std::size_t>(s)].kind == State::Kind::Match && (!anchored || pos == text.size()))
        return true;
    }
    if (pos == text.size()) return false;
    ++gen;
    next.clear();
    const auto ch = static_cast<unsigned char>(text[pos]);
    for (int s : cur) {
      const auto& st = states_[static_cast<std::size_t>(s)];
      if (st.kind == State::Kind::Chars && st.chars.test(ch)) closure(st.out, pos + 1, text.size(), next, mark, gen);
    }
    if (!anchored) closure(start_, pos + 1, text.size(), next, mark, gen);
    std::swap(cur, next);
    if (cur.empty() && anchored) return false;
  }
}

bool Regex::full_match(std::string_view text) const { return run(text, true); }
bool Regex::search(std::string_view text) const { return run(text, false); }

}  // namespace rilmine::rx
