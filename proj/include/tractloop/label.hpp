#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tractloop {

/// Binary tract membership of one streamline.
struct Label {
  std::size_t streamline_id = 0;
  bool positive = false;

  friend bool operator==(const Label&, const Label&) = default;
};

using LabelFile = std::vector<Label>;

inline std::size_t count_positive(std::span<const Label> labels) {
  std::size_t n = 0;
  for (const auto& l : labels) n += l.positive ? 1 : 0;
  return n;
}

/// Ids of the positive labels, in file order.
std::vector<std::size_t> positive_ids(std::span<const Label> labels);

}  // namespace tractloop
