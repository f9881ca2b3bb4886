#include "tractloop/journal.hpp"

#include <optional>

#include <json.hpp>

#include "tractloop/active_loop.hpp"
#include "tractloop/config.hpp"
#include "tractloop/error.hpp"

namespace tractloop {

using nlohmann::json;

std::string Journal::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

Journal Journal::parse(std::string_view text) {
  Journal j;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!json::accept(line)) throw FormatError("journal line " + std::to_string(line_no) + ": invalid JSON", line_no);
    j.append(std::move(line));
  }
  if (j.lines_.empty()) throw FormatError("journal is empty", 0);
  return j;
}

namespace {

std::vector<Label> parse_label_pairs(const json& arr) {
  std::vector<Label> out;
  for (const auto& pair : arr) out.push_back({pair.at(0).get<std::size_t>(), pair.at(1).get<int>() == 1});
  return out;
}

RoiSphere parse_roi(const json& j) {
  const auto& c = j.at("center");
  return {{c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()}, j.at("radius").get<double>()};
}

std::string describe(std::span<const std::size_t> ids) {
  std::string s = "[";
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? "," : "") + std::to_string(ids[i]);
  return s + "]";
}

ReplayResult replay_events(const Journal& journal, std::shared_ptr<const Dataset> data) {
  ReplayResult result;
  const auto lines = journal.lines();
  if (lines.empty()) throw FormatError("journal is empty", 0);
  json header;
  try {
    header = json::parse(lines.front());
  } catch (const json::exception& e) {
    throw FormatError(std::string("journal header: ") + e.what(), 1);
  }
  if (header.value("event", "") != "session") throw FormatError("journal does not start with a session header", 1);

  SessionConfig cfg;
  for (const auto& [key, value] : header.at("config").items()) apply_session_option(cfg, key, value.get<std::string>());
  if (header.at("streamlines").get<std::size_t>() != data->tractogram.size())
    throw InvalidArgument("journal was recorded on a tractogram with " +
                          std::to_string(header.at("streamlines").get<std::size_t>()) + " streamlines, dataset has " +
                          std::to_string(data->tractogram.size()));
  if (data->resampled.points_per_streamline() != cfg.points_per_streamline)
    data = Dataset::create(data->name, data->tractogram, cfg.points_per_streamline);

  const bool interactive = header.at("mode").get<std::string>() == "interactive";
  std::optional<Session> session;
  if (interactive) session.emplace(Session::interactive(data, parse_roi(header.at("roi")), cfg));

  auto diverge = [&](std::size_t line_no, const std::string& what) {
    if (result.matches) {
      result.matches = false;
      result.mismatch = "line " + std::to_string(line_no) + ": " + what;
    }
  };

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    const json ev = json::parse(lines[i]);
    const std::string kind = ev.at("event").get<std::string>();
    if (kind == "initial_labels") {
      if (session) throw FormatError("unexpected initial_labels event", line_no);
      session.emplace(Session::with_initial_labels(data, parse_label_pairs(ev.at("labels")), cfg));
      continue;
    }
    if (!session) throw FormatError("event before session initialization", line_no);
    if (kind == "candidates") {
      const auto round = ev.at("round").get<std::size_t>();
      if (session->rounds_completed() < round) session->step();
      const auto expected = ev.at("ids").get<std::vector<std::size_t>>();
      const auto got = session->candidates();
      if (!std::equal(expected.begin(), expected.end(), got.begin(), got.end()))
        diverge(line_no, "candidates " + describe(got) + " differ from journal " + describe(expected));
    } else if (kind == "labels") {
      session->submit_labels(parse_label_pairs(ev.at("labels")));
    } else if (kind == "resample") {
      session->resample_initial(parse_roi(ev.at("roi")));
      const auto expected = ev.at("ids").get<std::vector<std::size_t>>();
      const auto got = session->candidates();
      if (!std::equal(expected.begin(), expected.end(), got.begin(), got.end()))
        diverge(line_no, "resampled candidates differ from journal");
    } else if (kind == "final") {
      result.finalized_in_journal = true;
      result.tract = session->finalize();
      if (result.tract != ev.at("tract").get<std::vector<std::size_t>>())
        diverge(line_no, "final tract differs from journal");
    } else {
      throw FormatError("unknown journal event \"" + kind + "\"", line_no);
    }
  }
  if (!session) throw FormatError("journal has no initialization event", lines.size());
  if (!result.finalized_in_journal && session->rounds_completed() > 0) result.tract = session->current_tract();
  result.iterations = session->iteration();
  return result;
}

}  // namespace

ReplayResult replay(const Journal& journal, std::shared_ptr<const Dataset> data) {
  try {
    return replay_events(journal, std::move(data));
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed journal event: ") + e.what(), 0);
  }
}

}  // namespace tractloop
