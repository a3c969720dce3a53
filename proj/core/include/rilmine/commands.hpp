// SPDX-License-Identifier: Apache-2.0
//
// Command database and the semantics layer on top of it: tokenization,
// module labels, distribution tables, group-byte inference and diffing.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rilmine/config.hpp"
#include "rilmine/taint.hpp"

namespace rilmine::cmd {

enum class Direction : std::uint8_t { Solicited, Unsolicited };
enum class Kind : std::uint8_t { Static, Hybrid };

std::string_view to_string(Direction d);
std::string_view to_string(Kind k);

struct CommandRecord {
  std::string binary;
  Direction direction = Direction::Solicited;
  std::string api;
  std::string site;           // func@block:idx of the system call
  std::string root_function;  // symbol name
  std::string module;
  /// Solicited: concretized payload. Unsolicited: the compared constant,
  /// little-endian at the comparison width.
  taint::PayloadBytes payload;
  std::string channel;
  std::optional<std::string> handler;  // unsolicited dispatch target

  Kind kind() const { return payload.is_static() ? Kind::Static : Kind::Hybrid; }
  bool operator==(const CommandRecord&) const = default;
};

/// (direction, payload with dynamic bytes as "..", root function).
using CommandKey = std::tuple<Direction, std::string, std::string>;
CommandKey key_of(const CommandRecord& r);
std::string to_string(const CommandKey& k);

class CommandDB {
 public:
  std::string binary;
  std::string config_hash;

  /// Inserts or merges: on a key collision the record with the smaller
  /// (site, channel) stays. Returns true when the key was new.
  bool insert(CommandRecord r);

  std::vector<CommandRecord> records() const;  // key order
  const std::map<CommandKey, CommandRecord>& by_key() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  bool contains(const CommandKey& k) const { return records_.contains(k); }

  bool operator==(const CommandDB&) const = default;

 private:
  std::map<CommandKey, CommandRecord> records_;
};

/// Tab-separated form with `# binary=` / `# config=` provenance lines.
std::string to_tsv(const CommandDB& db);
CommandDB parse_tsv(std::string_view text, std::string_view source = "<db>");
std::string to_json(const CommandDB& db);
CommandDB parse_json(std::string_view text, std::string_view source = "<db>");
/// Picks the parser from the content (a leading '{' means JSON).
CommandDB load_db_file(const std::filesystem::path& path);
void save_db_file(const CommandDB& db, const std::filesystem::path& path);

// --- semantics -------------------------------------------------------------

/// Method part of `Class::Method`, split at case changes, letter/digit
/// boundaries and underscores.
std::vector<std::string> tokenize(std::string_view name);

/// First token that is not in the filter list, scanning the class qualifier
/// before the method. "Unknown" when everything is filtered.
std::string classify_module(std::string_view name, const AnalysisConfig& config = {});

struct DistributionRow {
  Direction direction = Direction::Solicited;
  std::string module;
  std::size_t count = 0;
  double percentage = 0;  // rounded to 2 decimals
  bool operator==(const DistributionRow&) const = default;
};

/// Per direction, sorted by count descending then module name.
std::vector<DistributionRow> module_distribution(const CommandDB& db);
std::string format_distribution(const std::vector<DistributionRow>& rows);

struct GroupByteReport {
  std::optional<std::size_t> position;
  std::map<std::string, std::uint8_t> mapping;  // module -> group byte
  bool operator==(const GroupByteReport&) const = default;
};

/// Smallest byte position that is static in every solicited payload, constant
/// within each module and distinct across modules. Throws AmbiguousInput when
/// fewer than two modules have solicited payloads.
GroupByteReport infer_group_byte(const CommandDB& db);

struct DiffResult {
  std::string base;
  std::string current;
  std::vector<CommandKey> base_unique;
  std::vector<CommandKey> cur_unique;

  std::size_t count(Direction d, bool base_side) const;
};

DiffResult diff(const CommandDB& base, const CommandDB& cur);
std::string format_diff(const DiffResult& d);

struct EvolutionPoint {
  std::string binary;
  std::size_t solicited = 0;
  std::size_t unsolicited = 0;
  std::map<std::string, std::size_t> per_api;  // __write_chk counted as write, __read_chk as read
  bool operator==(const EvolutionPoint&) const = default;
};

std::vector<EvolutionPoint> evolution_report(const std::vector<CommandDB>& dbs);
std::string format_evolution(const std::vector<EvolutionPoint>& series);

}  // namespace rilmine::cmd
