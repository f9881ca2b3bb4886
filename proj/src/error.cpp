#include "tractloop/error.hpp"

#include <sstream>

namespace tractloop {

namespace {

void append_ids(std::ostringstream& out, const char* what, const std::vector<std::size_t>& ids) {
  if (ids.empty()) return;
  out << ' ' << what << " [";
  for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? "," : "") << ids[i];
  out << ']';
}

std::string mismatch_message(const std::vector<std::size_t>& missing,
                             const std::vector<std::size_t>& unexpected,
                             const std::vector<std::size_t>& duplicated) {
  std::ostringstream out;
  out << "labels do not match outstanding candidates:";
  append_ids(out, "missing", missing);
  append_ids(out, "unexpected", unexpected);
  append_ids(out, "duplicated", duplicated);
  return out.str();
}

}  // namespace

LabelMismatch::LabelMismatch(std::vector<std::size_t> missing, std::vector<std::size_t> unexpected,
                             std::vector<std::size_t> duplicated)
    : Error(mismatch_message(missing, unexpected, duplicated)),
      missing_(std::move(missing)),
      unexpected_(std::move(unexpected)),
      duplicated_(std::move(duplicated)) {}

TooFewRoiStreamlines::TooFewRoiStreamlines(std::size_t found, std::size_t required)
    : Error("only " + std::to_string(found) + " streamlines pass through the ROI, " +
            std::to_string(required) + " required"),
      found_(found),
      required_(required) {}

}  // namespace tractloop
