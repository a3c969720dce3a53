// SPDX-License-Identifier: Apache-2.0
#include "rilmine/dataflow.hpp"

#include <algorithm>
#include <deque>

namespace rilmine::dfa {

using ir::Opcode;

namespace {

constexpr int kMaxDepth = 24;

const DefSet kEntryOnly{DefLoc::entry()};

const DefSet& lookup(const std::map<Key, DefSet>& state, Key k) {
  auto it = state.find(k);
  return it == state.end() ? kEntryOnly : it->second;
}

DefSet unite(const DefSet& a, const DefSet& b) {
  DefSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

}  // namespace

FunctionFacts::FunctionFacts(const ir::Program& program, std::uint32_t function_index)
    : program_(&program), function_(&program.functions.at(function_index)), function_index_(function_index) {
  const auto& blocks = function_->blocks;
  preds_.assign(blocks.size(), {});
  for (std::uint32_t b = 0; b < blocks.size(); ++b) {
    for (int succ : blocks[b].successors) {
      if (auto idx = function_->block_index(succ)) preds_[*idx].push_back(b);
    }
  }
  stack_def_.resize(blocks.size());
  stack_use_.resize(blocks.size());
  for (std::uint32_t b = 0; b < blocks.size(); ++b) {
    stack_def_[b].assign(blocks[b].ops.size(), std::nullopt);
    stack_use_[b].assign(blocks[b].ops.size(), std::nullopt);
  }

  solve(false);
  for (std::uint32_t b = 0; b < blocks.size(); ++b) {
    for (std::uint32_t i = 0; i < blocks[b].ops.size(); ++i) {
      const auto& ins = blocks[b].ops[i];
      if (ins.op == Opcode::Store && ins.in.size() == 2) {
        if (auto off = frame_offset_impl(b, i, ins.in[0], 0)) stack_def_[b][i] = Key{ir::Space::Stack, *off};
      } else if (ins.out && ins.out->space == ir::Space::Stack) {
        stack_def_[b][i] = key_of(*ins.out);
      }
      if (ins.op == Opcode::Load && ins.in.size() == 1) {
        if (auto off = frame_offset_impl(b, i, ins.in[0], 0)) stack_use_[b][i] = Key{ir::Space::Stack, *off};
      }
    }
  }
  solve(true);
}

void FunctionFacts::transfer(State& state, std::uint32_t block, std::uint32_t index, bool with_stack) const {
  const auto& ins = function_->blocks[block].ops[index];
  const DefLoc here{static_cast<std::int32_t>(block), static_cast<std::int32_t>(index)};
  if (ins.out && !ins.out->is_const()) state[key_of(*ins.out)] = DefSet{here};
  if (with_stack && stack_def_[block][index]) state[*stack_def_[block][index]] = DefSet{here};
}

void FunctionFacts::solve(bool with_stack) {
  const auto& blocks = function_->blocks;
  std::vector<State> in(blocks.size());
  std::vector<bool> visited(blocks.size(), false);
  if (blocks.empty()) {
    (with_stack ? in_full_ : in_registers_) = std::move(in);
    return;
  }
  std::deque<std::uint32_t> work{0};
  visited[0] = true;
  while (!work.empty()) {
    const auto b = work.front();
    work.pop_front();
    State state = in[b];
    for (std::uint32_t i = 0; i < blocks[b].ops.size(); ++i) transfer(state, b, i, with_stack);
    for (int succ_id : blocks[b].successors) {
      auto succ = function_->block_index(succ_id);
      if (!succ) continue;
      const auto s = static_cast<std::uint32_t>(*succ);
      if (!visited[s]) {
        visited[s] = true;
        in[s] = state;
        work.push_back(s);
        continue;
      }
      bool changed = false;
      State merged;
      auto merge_key = [&](Key k) {
        if (merged.contains(k)) return;
        DefSet u = unite(lookup(in[s], k), lookup(state, k));
        if (u != lookup(in[s], k)) changed = true;
        if (u != kEntryOnly) merged[k] = std::move(u);
      };
      for (const auto& [k, _] : in[s]) merge_key(k);
      for (const auto& [k, _] : state) merge_key(k);
      if (changed) {
        in[s] = std::move(merged);
        if (std::find(work.begin(), work.end(), s) == work.end()) work.push_back(s);
      }
    }
  }
  (with_stack ? in_full_ : in_registers_) = std::move(in);
}

DefSet FunctionFacts::reaching_impl(std::uint32_t block, std::uint32_t index, Key key, bool with_stack) const {
  const auto& states = with_stack ? in_full_ : in_registers_;
  DefSet defs = lookup(states.at(block), key);
  const auto& ops = function_->blocks[block].ops;
  for (std::uint32_t i = 0; i < index && i < ops.size(); ++i) {
    const auto& ins = ops[i];
    const bool defines = (ins.out && !ins.out->is_const() && key_of(*ins.out) == key) ||
                         (with_stack && stack_def_[block][i] == key);
    if (defines) defs = DefSet{{static_cast<std::int32_t>(block), static_cast<std::int32_t>(i)}};
  }
  return defs;
}

DefSet FunctionFacts::reaching(std::uint32_t block, std::uint32_t index, const ir::Varnode& v) const {
  if (v.is_const()) return {};
  return reaching_impl(block, index, key_of(v), true);
}

DefSet FunctionFacts::reaching_key(std::uint32_t block, std::uint32_t index, Key key) const {
  return reaching_impl(block, index, key, true);
}

std::optional<std::int64_t> FunctionFacts::frame_offset(std::uint32_t block, std::uint32_t index,
                                                        const ir::Varnode& v) const {
  return frame_offset_impl(block, index, v, 0);
}

std::optional<std::int64_t> FunctionFacts::frame_offset_impl(std::uint32_t block, std::uint32_t index,
                                                             const ir::Varnode& v, int depth) const {
  if (v.is_frame()) return 0;
  if (v.is_const() || depth > kMaxDepth) return std::nullopt;
  const DefSet defs = reaching_impl(block, index, key_of(v), false);
  std::optional<std::int64_t> result;
  for (const auto& d : defs) {
    if (d.is_entry()) return std::nullopt;
    auto off = frame_offset_of_def(d, depth + 1);
    if (!off || (result && *result != *off)) return std::nullopt;
    result = off;
  }
  return result;
}

std::optional<std::int64_t> FunctionFacts::frame_offset_of_def(DefLoc d, int depth) const {
  const auto& ins = at(d);
  const auto b = static_cast<std::uint32_t>(d.block), i = static_cast<std::uint32_t>(d.index);
  switch (ins.op) {
    case Opcode::Copy:
      return frame_offset_impl(b, i, ins.in[0], depth);
    case Opcode::IntAdd:
      for (int k = 0; k < 2; ++k) {
        const auto& base = ins.in[k];
        const auto& other = ins.in[1 - k];
        if (!other.is_const()) continue;
        if (auto off = frame_offset_impl(b, i, base, depth)) return *off + other.offset;
      }
      return std::nullopt;
    case Opcode::IntSub:
      if (ins.in[1].is_const()) {
        if (auto off = frame_offset_impl(b, i, ins.in[0], depth)) return *off - ins.in[1].offset;
      }
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

std::optional<Key> FunctionFacts::stack_def(std::uint32_t block, std::uint32_t index) const {
  return stack_def_.at(block).at(index);
}

std::optional<Key> FunctionFacts::stack_use(std::uint32_t block, std::uint32_t index) const {
  return stack_use_.at(block).at(index);
}

std::optional<std::int64_t> FunctionFacts::constant_value(std::uint32_t block, std::uint32_t index,
                                                          const ir::Varnode& v) const {
  return constant_impl(block, index, v, 0);
}

std::optional<std::int64_t> FunctionFacts::constant_impl(std::uint32_t block, std::uint32_t index,
                                                         const ir::Varnode& v, int depth) const {
  if (v.is_const()) return v.offset;
  if (depth > kMaxDepth) return std::nullopt;
  auto value_of = [&](DefLoc d, auto&& self) -> std::optional<std::int64_t> {
    const auto& ins = at(d);
    const auto b = static_cast<std::uint32_t>(d.block), i = static_cast<std::uint32_t>(d.index);
    switch (ins.op) {
      case Opcode::Copy:
        return constant_impl(b, i, ins.in[0], depth + 1);
      case Opcode::Store:
        return constant_impl(b, i, ins.in[1], depth + 1);
      case Opcode::IntAdd:
      case Opcode::IntSub: {
        auto x = constant_impl(b, i, ins.in[0], depth + 1);
        auto y = constant_impl(b, i, ins.in[1], depth + 1);
        if (!x || !y) return std::nullopt;
        return ins.op == Opcode::IntAdd ? *x + *y : *x - *y;
      }
      case Opcode::Load: {
        auto use = stack_use_[b][i];
        if (!use) return std::nullopt;
        std::optional<std::int64_t> r;
        for (const auto& d2 : reaching_impl(b, i, *use, true)) {
          if (d2.is_entry()) return std::nullopt;
          auto val = self(d2, self);
          if (!val || (r && *r != *val)) return std::nullopt;
          r = val;
        }
        return r;
      }
      default:
        return std::nullopt;
    }
  };
  std::optional<std::int64_t> result;
  const DefSet defs = reaching_impl(block, index, key_of(v), true);
  if (defs.empty()) return std::nullopt;
  for (const auto& d : defs) {
    if (d.is_entry()) return std::nullopt;
    auto val = value_of(d, value_of);
    if (!val || (result && *result != *val)) return std::nullopt;
    result = val;
  }
  return result;
}

std::optional<std::size_t> FunctionFacts::param_of_register(const ir::Varnode& v) const {
  const auto ws = program_->word_size;
  if (v.space != ir::Space::Reg || v.offset < 0 || v.offset >= ir::kFrameRegister) return std::nullopt;
  if (v.offset % ws != 0) return std::nullopt;
  const auto k = static_cast<std::size_t>(v.offset / ws);
  if (k >= function_->params.size()) return std::nullopt;
  return k;
}

std::optional<std::size_t> FunctionFacts::entry_param(std::uint32_t block, std::uint32_t index,
                                                      const ir::Varnode& v) const {
  if (v.is_const()) return std::nullopt;
  std::optional<std::size_t> result;
  int guard = 0;
  for (const auto& d : reaching_impl(block, index, key_of(v), true)) {
    std::optional<std::size_t> k;
    if (d.is_entry()) {
      k = param_of_register(v);
    } else if (const auto& ins = at(d); ins.op == Opcode::Copy && ++guard < kMaxDepth) {
      k = entry_param(static_cast<std::uint32_t>(d.block), static_cast<std::uint32_t>(d.index), ins.in[0]);
    }
    if (!k || (result && *result != *k)) return std::nullopt;
    result = k;
  }
  return result;
}

const FunctionFacts& ProgramFacts::of(std::uint32_t function_index) {
  auto it = cache_.find(function_index);
  if (it == cache_.end()) it = cache_.try_emplace(function_index, *program_, function_index).first;
  return it->second;
}

}  // namespace rilmine::dfa
