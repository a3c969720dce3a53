// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rilmine::util {

/// Lowercase hex without separators: {0x07, 0xab} -> "07ab".
std::string to_hex(std::span<const std::uint8_t> bytes);
/// Inverse of to_hex; accepts upper/lower case, rejects odd lengths.
std::optional<std::vector<std::uint8_t>> parse_hex(std::string_view text);
/// "0x1f" style; minimum two digits.
std::string hex_address(std::uint64_t value);
std::string hex_byte(std::uint8_t value);

/// Decimal or 0x-prefixed hex, optional leading '-'.
std::optional<std::int64_t> parse_int(std::string_view text);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// 64-bit FNV-1a; stable across platforms, used for provenance hashes.
std::uint64_t fnv1a(std::string_view data);

}  // namespace rilmine::util
