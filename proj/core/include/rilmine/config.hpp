// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace rilmine {

/// Analysis settings shared by the channel filter, the taint engine and the
/// semantics layer. Loaded from a JSON filter-config file.
struct AnalysisConfig {
  /// Prefix and verb tokens skipped by module classification.
  std::vector<std::string> filter_tokens = {"Ipc", "Tx",  "Rx",  "Protocol", "40",     "41",      "41X",     "Get",
                                            "Set", "Do",  "Process", "Make", "On", "Handle", "Request", "Response"};
  /// Keep sendto sites whose fd comes from socket().
  bool keep_sockets = false;
  /// Path-argument indices as listed for the open family. Informational: the
  /// path is traced at argument 0 for every member.
  std::map<std::string, int> path_arg_table = {{"open", 1}, {"__open_2", 1}, {"fopen", 0}};
  int channel_depth = 16;
  int taint_depth = 32;

  /// Stable hash of every field, recorded as DB provenance.
  std::string hash() const;
  std::string to_json() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
AnalysisConfig parse_config(std::string_view json_text);
AnalysisConfig load_config_file(const std::filesystem::path& path);

}  // namespace rilmine
