#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tractloop/active_loop.hpp"

namespace tractloop {

/// `key = value` text with optional `[section]` headers and `#` comments.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

struct ConfigSection {
  std::string name;  // empty for entries before the first header
  std::size_t line = 0;
  std::vector<ConfigEntry> entries;
};

/// Throws FormatError (offset = line number) on malformed lines.
std::vector<ConfigSection> parse_config_text(std::string_view text);

/// Sets one SessionConfig option by its config-file key. Throws InvalidArgument.
void apply_session_option(SessionConfig& cfg, std::string_view key, std::string_view value);

/// Applies every top-level entry; errors are reported as FormatError with the line.
SessionConfig parse_session_config(std::string_view text, SessionConfig base = {});

/// All options as (key, value) strings, in a fixed order.
std::vector<std::pair<std::string, std::string>> session_config_entries(const SessionConfig& cfg);

}  // namespace tractloop
