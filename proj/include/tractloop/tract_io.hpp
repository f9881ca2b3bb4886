#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "tractloop/geometry.hpp"
#include "tractloop/label.hpp"
#include "tractloop/voxel.hpp"

namespace tractloop::io {

enum class ByteOrder { little, big };

struct TckHeader {
  std::map<std::string, std::string> fields;  // every "key: value" line, values trimmed
  ByteOrder byte_order = ByteOrder::little;
  std::size_t data_offset = 0;
  std::optional<std::size_t> count;
};

/// Parses the header of a TCK stream held in memory. Throws FormatError with
/// the byte offset of the offending line.
TckHeader parse_tck_header(std::string_view bytes);

Tractogram decode_tck(std::string_view bytes);
std::string encode_tck(const Tractogram& t);

Tractogram read_tck(const std::filesystem::path& path);
TckHeader read_tck_header(const std::filesystem::path& path);
void write_tck(const Tractogram& t, const std::filesystem::path& path);

/// "id,label" per line. Errors carry 1-based line numbers.
LabelFile parse_labels(std::string_view text);
std::string format_labels(std::span<const Label> labels);
LabelFile read_labels(const std::filesystem::path& path);
void write_labels(std::span<const Label> labels, const std::filesystem::path& path);

VoxelMask decode_mask(std::string_view bytes);
std::string encode_mask(const VoxelMask& mask);
VoxelMask read_mask(const std::filesystem::path& path);
void write_mask(const VoxelMask& mask, const std::filesystem::path& path);

/// Whole-file helpers shared by the readers and writers.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace tractloop::io
