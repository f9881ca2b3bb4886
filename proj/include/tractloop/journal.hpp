#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tractloop {

struct Dataset;

/// Line-delimited JSON record of a session: one header line, then one line per
/// event (initial labels, candidate batches, label batches, resamples, final
/// tract). Contains no timestamps, so equal sessions give equal bytes.
class Journal {
 public:
  void append(std::string line) { lines_.push_back(std::move(line)); }
  std::span<const std::string> lines() const noexcept { return lines_; }
  std::string text() const;

  static Journal parse(std::string_view text);

  friend bool operator==(const Journal&, const Journal&) = default;

 private:
  std::vector<std::string> lines_;
};

struct ReplayResult {
  std::vector<std::size_t> tract;
  std::size_t iterations = 0;
  bool finalized_in_journal = false;
  bool matches = true;   // candidates and final tract agree with the journal
  std::string mismatch;  // first divergence, empty when matches
};

/// Re-drives a session from its journal against the same dataset.
ReplayResult replay(const Journal& journal, std::shared_ptr<const Dataset> data);

}  // namespace tractloop
