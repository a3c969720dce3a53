// SPDX-License-Identifier: Apache-2.0
#include "rilmine/config.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "rilmine/error.hpp"
#include "rilmine/util.hpp"

namespace rilmine {

using nlohmann::json;

std::string AnalysisConfig::to_json() const {
  json j;
  j["filter_tokens"] = filter_tokens;
  j["keep_sockets"] = keep_sockets;
  j["path_arg_table"] = path_arg_table;
  j["channel_depth"] = channel_depth;
  j["taint_depth"] = taint_depth;
  return j.dump(2) + "\n";
}

std::string AnalysisConfig::hash() const {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << util::fnv1a(json::parse(to_json()).dump());
  return os.str();
}

AnalysisConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  }
  if (!j.is_object()) throw ParseError("$", "config must be an object");
  AnalysisConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& key = it.key();
    try {
      if (key == "filter_tokens") c.filter_tokens = it->get<std::vector<std::string>>();
      else if (key == "keep_sockets") c.keep_sockets = it->get<bool>();
      else if (key == "path_arg_table") c.path_arg_table = it->get<std::map<std::string, int>>();
      else if (key == "channel_depth") c.channel_depth = it->get<int>();
      else if (key == "taint_depth") c.taint_depth = it->get<int>();
      else throw ParseError(key, "unknown config key");
    } catch (const json::exception& e) {
      throw ParseError(key, e.what());
    }
  }
  if (c.channel_depth < 1 || c.taint_depth < 1) throw ParseError("depth", "depth limits must be >= 1");
  return c;
}

AnalysisConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + e.where(), e.what());
  }
}

}  // namespace rilmine
