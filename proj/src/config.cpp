#include "tractloop/config.hpp"

#include <charconv>

#include "tractloop/error.hpp"

namespace tractloop {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_unsigned(std::string_view key, std::string_view value) {
  T out{};
  const auto* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), last, out);
  if (ec != std::errc() || ptr != last)
    throw InvalidArgument("option " + std::string(key) + ": expected a non-negative integer, got \"" +
                          std::string(value) + "\"");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InvalidArgument("option " + std::string(key) + ": expected true or false, got \"" + std::string(value) + "\"");
}

}  // namespace

std::vector<ConfigSection> parse_config_text(std::string_view text) {
  std::vector<ConfigSection> sections(1);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw FormatError("line " + std::to_string(line_no) + ": malformed section header", line_no);
      sections.push_back({std::string(trim(line.substr(1, line.size() - 2))), line_no, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("line " + std::to_string(line_no) + ": expected \"key = value\"", line_no);
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": missing key", line_no);
    sections.back().entries.push_back({std::string(key), std::string(value), line_no});
  }
  return sections;
}

void apply_session_option(SessionConfig& cfg, std::string_view key, std::string_view value) {
  using U = std::size_t;
  if (key == "points_per_streamline") cfg.points_per_streamline = parse_unsigned<U>(key, value);
  else if (key == "initial_prototypes") cfg.initial_prototypes = parse_unsigned<U>(key, value);
  else if (key == "adaptive_prototype_cap") cfg.adaptive_prototype_cap = parse_unsigned<U>(key, value);
  else if (key == "init_random_count") cfg.init_random_count = parse_unsigned<U>(key, value);
  else if (key == "init_positive_seed_count") cfg.init_positive_seed_count = parse_unsigned<U>(key, value);
  else if (key == "queries_per_iteration") cfg.queries_per_iteration = parse_unsigned<U>(key, value);
  else if (key == "max_iterations") cfg.max_iterations = parse_unsigned<U>(key, value);
  else if (key == "strategy") cfg.strategy = parse_strategy(value);
  else if (key == "seed") cfg.seed = parse_unsigned<std::uint64_t>(key, value);
  else if (key == "forest.trees") cfg.forest.trees = parse_unsigned<U>(key, value);
  else if (key == "forest.max_features") cfg.forest.max_features = parse_unsigned<U>(key, value);
  else if (key == "forest.min_samples_split") cfg.forest.min_samples_split = parse_unsigned<U>(key, value);
  else if (key == "forest.min_samples_leaf") cfg.forest.min_samples_leaf = parse_unsigned<U>(key, value);
  else if (key == "forest.max_depth") cfg.forest.max_depth = parse_unsigned<U>(key, value);
  else if (key == "forest.bootstrap") cfg.forest.bootstrap = parse_bool(key, value);
  else if (key == "forest.balanced_class_weights") cfg.forest.balanced_class_weights = parse_bool(key, value);
  else throw InvalidArgument("unknown option \"" + std::string(key) + "\"");
}

SessionConfig parse_session_config(std::string_view text, SessionConfig base) {
  const auto sections = parse_config_text(text);
  if (sections.size() > 1)
    throw FormatError("line " + std::to_string(sections[1].line) + ": sections are not allowed in session configs",
                      sections[1].line);
  for (const auto& e : sections.front().entries) {
    try {
      apply_session_option(base, e.key, e.value);
    } catch (const InvalidArgument& err) {
      throw FormatError("line " + std::to_string(e.line) + ": " + err.what(), e.line);
    }
  }
  try {
    base.validate();
  } catch (const InvalidArgument& err) {
    throw FormatError(err.what(), 0);
  }
  return base;
}

std::vector<std::pair<std::string, std::string>> session_config_entries(const SessionConfig& cfg) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"points_per_streamline", std::to_string(cfg.points_per_streamline)},
      {"initial_prototypes", std::to_string(cfg.initial_prototypes)},
      {"adaptive_prototype_cap", std::to_string(cfg.adaptive_prototype_cap)},
      {"init_random_count", std::to_string(cfg.init_random_count)},
      {"init_positive_seed_count", std::to_string(cfg.init_positive_seed_count)},
      {"queries_per_iteration", std::to_string(cfg.queries_per_iteration)},
      {"max_iterations", std::to_string(cfg.max_iterations)},
      {"strategy", to_string(cfg.strategy)},
      {"seed", std::to_string(cfg.seed)},
      {"forest.trees", std::to_string(cfg.forest.trees)},
      {"forest.max_features", std::to_string(cfg.forest.max_features)},
      {"forest.min_samples_split", std::to_string(cfg.forest.min_samples_split)},
      {"forest.min_samples_leaf", std::to_string(cfg.forest.min_samples_leaf)},
      {"forest.max_depth", std::to_string(cfg.forest.max_depth)},
      {"forest.bootstrap", b(cfg.forest.bootstrap)},
      {"forest.balanced_class_weights", b(cfg.forest.balanced_class_weights)},
  };
}

}  // namespace tractloop
