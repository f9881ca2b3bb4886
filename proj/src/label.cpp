#include "tractloop/label.hpp"

namespace tractloop {

std::vector<std::size_t> positive_ids(std::span<const Label> labels) {
  std::vector<std::size_t> ids;
  for (const auto& l : labels)
    if (l.positive) ids.push_back(l.streamline_id);
  return ids;
}

}  // namespace tractloop
