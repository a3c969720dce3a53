// SPDX-License-Identifier: Apache-2.0
#include "rilmine/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "rilmine/error.hpp"
#include "rilmine/util.hpp"

namespace rilmine::cmd {

using nlohmann::json;

namespace {

const std::vector<std::string> kColumns = {"binary",  "direction", "api",  "site",          "root_function", "module",
                                           "payload", "channel",   "kind", "length_source", "handler"};

bool upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }
bool lower(char c) { return std::islower(static_cast<unsigned char>(c)) != 0; }
bool digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }
bool alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (!alnum(c)) {
      flush();
      continue;
    }
    if (!cur.empty()) {
      const char prev = cur.back();
      const bool boundary = digit(prev) != digit(c) || (lower(prev) && upper(c)) ||
                            (upper(prev) && upper(c) && i + 1 < s.size() && lower(s[i + 1]));
      if (boundary) flush();
    }
    cur.push_back(c);
  }
  flush();
  return out;
}

Direction parse_direction(std::string_view s, const std::string& where) {
  if (s == "solicited") return Direction::Solicited;
  if (s == "unsolicited") return Direction::Unsolicited;
  throw ParseError(where, "bad direction '" + std::string(s) + "'");
}

taint::LengthSource parse_length(std::string_view s, std::size_t payload_size, const std::string& where) {
  using K = taint::LengthSource::Kind;
  if (s == "constant-arg") return {K::ConstantArg, static_cast<std::int64_t>(payload_size)};
  if (s == "unknown") return {K::Unknown, 0};
  constexpr std::string_view prefix = "strlen-bounded(";
  if (s.starts_with(prefix) && s.ends_with(")")) {
    if (auto v = util::parse_int(s.substr(prefix.size(), s.size() - prefix.size() - 1))) return {K::StrlenBounded, *v};
  }
  throw ParseError(where, "bad length_source '" + std::string(s) + "'");
}

CommandRecord record_from_fields(const std::vector<std::string>& f, const std::string& where) {
  CommandRecord r;
  r.binary = f[0];
  r.direction = parse_direction(f[1], where);
  r.api = f[2];
  r.site = f[3];
  r.root_function = f[4];
  r.module = f[5];
  auto payload = taint::parse_payload_dump(f[6]);
  if (!payload) throw ParseError(where, "bad payload '" + f[6] + "'");
  r.payload = *payload;
  r.channel = f[7];
  if (f[8] != to_string(r.kind())) throw ParseError(where, "kind '" + f[8] + "' disagrees with payload mask");
  r.payload.length = parse_length(f[9], r.payload.bytes.size(), where);
  if (!f[10].empty()) r.handler = f[10];
  return r;
}

std::vector<std::string> record_fields(const CommandRecord& r) {
  return {r.binary,  std::string(to_string(r.direction)), r.api,
          r.site,    r.root_function,
          r.module,  taint::dump(r.payload),
          r.channel, std::string(to_string(r.kind())),
          taint::to_string(r.payload.length), r.handler.value_or("")};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string_view to_string(Direction d) { return d == Direction::Solicited ? "solicited" : "unsolicited"; }
std::string_view to_string(Kind k) { return k == Kind::Static ? "static" : "hybrid"; }

CommandKey key_of(const CommandRecord& r) { return {r.direction, taint::dump(r.payload), r.root_function}; }

std::string to_string(const CommandKey& k) {
  return std::string(to_string(std::get<0>(k))) + "|" + std::get<1>(k) + "|" + std::get<2>(k);
}

bool CommandDB::insert(CommandRecord r) {
  auto key = key_of(r);
  auto it = records_.find(key);
  if (it == records_.end()) {
    records_.emplace(std::move(key), std::move(r));
    return true;
  }
  if (std::tie(r.site, r.channel) < std::tie(it->second.site, it->second.channel)) it->second = std::move(r);
  return false;
}

std::vector<CommandRecord> CommandDB::records() const {
  std::vector<CommandRecord> out;
  out.reserve(records_.size());
  for (const auto& [k, r] : records_) out.push_back(r);
  return out;
}

std::string to_tsv(const CommandDB& db) {
  std::ostringstream os;
  os << "# rilmine command db v1\n";
  os << "# binary=" << db.binary << '\n';
  os << "# config=" << db.config_hash << '\n';
  for (std::size_t i = 0; i < kColumns.size(); ++i) os << (i ? "\t" : "") << kColumns[i];
  os << '\n';
  for (const auto& [k, r] : db.by_key()) {
    const auto fields = record_fields(r);
    for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "\t" : "") << fields[i];
    os << '\n';
  }
  return os.str();
}

CommandDB parse_tsv(std::string_view text, std::string_view source) {
  CommandDB db;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = std::string(source) + ":" + std::to_string(lineno);
    if (line.empty()) continue;
    if (line.starts_with("#")) {
      const auto body = util::trim(std::string_view(line).substr(1));
      if (body.starts_with("binary=")) db.binary = std::string(body.substr(7));
      else if (body.starts_with("config=")) db.config_hash = std::string(body.substr(7));
      continue;
    }
    auto fields = util::split(line, '\t');
    if (!header) {
      if (fields != kColumns) throw ParseError(where, "unexpected column header");
      header = true;
      continue;
    }
    if (fields.size() != kColumns.size())
      throw ParseError(where, "expected " + std::to_string(kColumns.size()) + " fields, got " +
                                  std::to_string(fields.size()));
    if (!db.insert(record_from_fields(fields, where))) throw ParseError(where, "duplicate command key");
  }
  if (!header) throw ParseError(std::string(source) + ":" + std::to_string(lineno), "missing column header");
  return db;
}

std::string to_json(const CommandDB& db) {
  json j;
  j["format"] = "rilmine-db";
  j["version"] = 1;
  j["binary"] = db.binary;
  j["config"] = db.config_hash;
  j["records"] = json::array();
  for (const auto& [k, r] : db.by_key()) {
    const auto fields = record_fields(r);
    json rec;
    for (std::size_t i = 0; i < kColumns.size(); ++i) rec[kColumns[i]] = fields[i];
    j["records"].push_back(std::move(rec));
  }
  return j.dump(2) + "\n";
}

CommandDB parse_json(std::string_view text, std::string_view source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source) + ":byte " + std::to_string(e.byte), "JSON syntax error");
  }
  CommandDB db;
  try {
    db.binary = j.at("binary").get<std::string>();
    db.config_hash = j.at("config").get<std::string>();
    const auto& recs = j.at("records");
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const std::string where = std::string(source) + ":records[" + std::to_string(i) + "]";
      std::vector<std::string> fields;
      for (const auto& c : kColumns) fields.push_back(recs[i].at(c).get<std::string>());
      if (!db.insert(record_from_fields(fields, where))) throw ParseError(where, "duplicate command key");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string(source), e.what());
  }
  return db;
}

CommandDB load_db_file(const std::filesystem::path& path) {
  const auto text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') return parse_json(text, path.string());
  return parse_tsv(text, path.string());
}

void save_db_file(const CommandDB& db, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << (path.extension() == ".json" ? to_json(db) : to_tsv(db));
}

std::vector<std::string> tokenize(std::string_view name) {
  const auto pos = name.rfind("::");
  return split_words(pos == std::string_view::npos ? name : name.substr(pos + 2));
}

std::string classify_module(std::string_view name, const AnalysisConfig& config) {
  std::vector<std::string> tokens;
  if (const auto pos = name.rfind("::"); pos != std::string_view::npos) tokens = split_words(name.substr(0, pos));
  for (auto& t : tokenize(name)) tokens.push_back(std::move(t));
  const auto& filtered = config.filter_tokens;
  for (const auto& t : tokens) {
    if (std::find(filtered.begin(), filtered.end(), t) == filtered.end()) return t;
  }
  return "Unknown";
}

std::vector<DistributionRow> module_distribution(const CommandDB& db) {
  std::map<Direction, std::map<std::string, std::size_t>> counts;
  std::map<Direction, std::size_t> totals;
  for (const auto& [k, r] : db.by_key()) {
    ++counts[r.direction][r.module];
    ++totals[r.direction];
  }
  std::vector<DistributionRow> out;
  for (const auto& [dir, modules] : counts) {
    std::vector<DistributionRow> rows;
    for (const auto& [m, n] : modules) {
      const double pct = std::round(static_cast<double>(n) * 10000.0 / static_cast<double>(totals[dir])) / 100.0;
      rows.push_back({dir, m, n, pct});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return a.count != b.count ? a.count > b.count : a.module < b.module;
    });
    out.insert(out.end(), rows.begin(), rows.end());
  }
  return out;
}

std::string format_distribution(const std::vector<DistributionRow>& rows) {
  std::ostringstream os;
  os << "direction\tmodule\tcount\tpercent\n";
  for (const auto& r : rows) {
    os << to_string(r.direction) << '\t' << r.module << '\t' << r.count << '\t' << std::fixed << std::setprecision(2)
       << r.percentage << '\n';
  }
  return os.str();
}

GroupByteReport infer_group_byte(const CommandDB& db) {
  std::map<std::string, std::vector<const taint::PayloadBytes*>> by_module;
  for (const auto& [k, r] : db.by_key()) {
    if (r.direction == Direction::Solicited) by_module[r.module].push_back(&r.payload);
  }
  if (by_module.size() < 2)
    throw AmbiguousInput("group-byte inference needs solicited payloads from at least two modules");
  std::size_t shortest = SIZE_MAX;
  for (const auto& [m, payloads] : by_module) {
    for (const auto* pl : payloads) shortest = std::min(shortest, pl->bytes.size());
  }
  for (std::size_t pos = 0; pos < shortest; ++pos) {
    std::map<std::string, std::uint8_t> mapping;
    bool ok = true;
    for (const auto& [m, payloads] : by_module) {
      std::optional<std::uint8_t> value;
      for (const auto* pl : payloads) {
        if (pl->mask[pos] != taint::PayloadBytes::Mask::Static || (value && *value != pl->bytes[pos])) {
          ok = false;
          break;
        }
        value = pl->bytes[pos];
      }
      if (!ok) break;
      mapping[m] = *value;
    }
    if (!ok) continue;
    std::set<std::uint8_t> distinct;
    for (const auto& [m, v] : mapping) distinct.insert(v);
    if (distinct.size() == mapping.size()) return {pos, mapping};
  }
  return {};
}

std::size_t DiffResult::count(Direction d, bool base_side) const {
  const auto& keys = base_side ? base_unique : cur_unique;
  return static_cast<std::size_t>(
      std::count_if(keys.begin(), keys.end(), [&](const CommandKey& k) { return std::get<0>(k) == d; }));
}

DiffResult diff(const CommandDB& base, const CommandDB& cur) {
  DiffResult d;
  d.base = base.binary;
  d.current = cur.binary;
  for (const auto& [k, r] : base.by_key()) {
    if (!cur.contains(k)) d.base_unique.push_back(k);
  }
  for (const auto& [k, r] : cur.by_key()) {
    if (!base.contains(k)) d.cur_unique.push_back(k);
  }
  return d;
}

std::string format_diff(const DiffResult& d) {
  std::ostringstream os;
  os << "base\t" << d.base << '\n' << "current\t" << d.current << '\n';
  for (auto dir : {Direction::Solicited, Direction::Unsolicited}) {
    os << to_string(dir) << "\tbase_unique=" << d.count(dir, true) << "\tcur_unique=" << d.count(dir, false) << '\n';
  }
  for (const auto& k : d.base_unique) os << "- " << to_string(k) << '\n';
  for (const auto& k : d.cur_unique) os << "+ " << to_string(k) << '\n';
  return os.str();
}

std::vector<EvolutionPoint> evolution_report(const std::vector<CommandDB>& dbs) {
  std::vector<EvolutionPoint> out;
  for (const auto& db : dbs) {
    EvolutionPoint pt;
    pt.binary = db.binary;
    for (const auto& [k, r] : db.by_key()) {
      (r.direction == Direction::Solicited ? pt.solicited : pt.unsolicited) += 1;
      ++pt.per_api[taint::canonical_api(r.api)];
    }
    out.push_back(std::move(pt));
  }
  return out;
}

std::string format_evolution(const std::vector<EvolutionPoint>& series) {
  std::ostringstream os;
  os << "binary\tsolicited\tunsolicited\tapis\n";
  for (const auto& pt : series) {
    os << pt.binary << '\t' << pt.solicited << '\t' << pt.unsolicited << '\t';
    bool first = true;
    for (const auto& [api, n] : pt.per_api) {
      os << (first ? "" : ",") << api << '=' << n;
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace rilmine::cmd
