#include "tractloop/tract_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "tractloop/error.hpp"

namespace tractloop::io {

namespace {

constexpr std::string_view kMagic = "mrtrix tracks";

std::string at_byte(std::size_t offset) { return " (byte offset " + std::to_string(offset) + ")"; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if constexpr (std::is_floating_point_v<T>) {
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
  } else {
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) | (v << 24);
}

constexpr bool host_little = std::endian::native == std::endian::little;

float load_float(const char* p, ByteOrder order) {
  std::uint32_t bits;
  std::memcpy(&bits, p, 4);
  if ((order == ByteOrder::little) != host_little) bits = byteswap32(bits);
  return std::bit_cast<float>(bits);
}

void store_float_le(char* p, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  if (!host_little) bits = byteswap32(bits);
  std::memcpy(p, &bits, 4);
}

// Splits the next '\n'-terminated line starting at pos. Returns false at end of input.
bool next_line(std::string_view bytes, std::size_t& pos, std::string_view& line) {
  if (pos >= bytes.size()) return false;
  const std::size_t nl = bytes.find('\n', pos);
  if (nl == std::string_view::npos) {
    line = bytes.substr(pos);
    pos = bytes.size();
    return false;
  }
  line = bytes.substr(pos, nl - pos);
  pos = nl + 1;
  return true;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  if (size < 0) throw IoError("cannot read " + path.string());
  std::string bytes(static_cast<std::size_t>(size), '\0');
  in.seekg(0);
  in.read(bytes.data(), size);
  if (!in) throw IoError("cannot read " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------- TCK

TckHeader parse_tck_header(std::string_view bytes) {
  std::size_t pos = 0;
  std::string_view line;
  if (!next_line(bytes, pos, line) || line != kMagic)
    throw FormatError("missing magic line \"mrtrix tracks\"" + at_byte(0), 0);

  TckHeader header;
  bool have_datatype = false;
  bool have_file = false;
  bool terminated = false;
  std::size_t line_start = pos;
  while (next_line(bytes, pos, line)) {
    if (line == "END") {
      terminated = true;
      break;
    }
    const auto colon = line.find(':');
    if (colon == std::string_view::npos)
      throw FormatError("malformed header line" + at_byte(line_start), line_start);
    const std::string key(trim(line.substr(0, colon)));
    const std::string_view value = trim(line.substr(colon + 1));
    header.fields[key] = std::string(value);
    if (key == "datatype") {
      if (value == "Float32LE") {
        header.byte_order = ByteOrder::little;
      } else if (value == "Float32BE") {
        header.byte_order = ByteOrder::big;
      } else {
        throw FormatError("unknown datatype \"" + std::string(value) + "\"" + at_byte(line_start), line_start);
      }
      have_datatype = true;
    } else if (key == "file") {
      if (value.size() < 2 || value[0] != '.' || value[1] != ' ' ||
          !parse_number(value.substr(2), header.data_offset))
        throw FormatError("malformed file field" + at_byte(line_start), line_start);
      have_file = true;
    } else if (key == "count") {
      std::size_t count = 0;
      if (!parse_number(value, count)) throw FormatError("malformed count field" + at_byte(line_start), line_start);
      header.count = count;
    }
    line_start = pos;
  }
  if (!terminated) throw FormatError("header not terminated by END" + at_byte(line_start), line_start);
  if (!have_datatype) throw FormatError("header lacks datatype" + at_byte(pos), pos);
  if (!have_file) throw FormatError("header lacks file field" + at_byte(pos), pos);
  if (header.data_offset < pos)
    throw FormatError("data offset " + std::to_string(header.data_offset) + " points into the header" + at_byte(pos),
                      pos);
  if (header.data_offset > bytes.size())
    throw FormatError("data offset " + std::to_string(header.data_offset) + " beyond end of file" + at_byte(bytes.size()),
                      bytes.size());
  return header;
}

Tractogram decode_tck(std::string_view bytes) {
  const TckHeader header = parse_tck_header(bytes);
  std::vector<Point3f> points;
  std::vector<std::size_t> offsets{0};
  if (header.count) {
    offsets.reserve(*header.count + 1);
    points.reserve((bytes.size() - header.data_offset) / 12);
  }

  std::size_t pos = header.data_offset;
  std::size_t streamline_start = pos;
  bool terminated = false;
  auto close_streamline = [&](std::size_t at) {
    const std::size_t n = points.size() - offsets.back();
    if (n < 2)
      throw FormatError("streamline " + std::to_string(offsets.size() - 1) + " has " + std::to_string(n) +
                            " point(s), at least 2 required" + at_byte(streamline_start),
                        streamline_start);
    offsets.push_back(points.size());
    streamline_start = at;
  };
  while (pos + 12 <= bytes.size()) {
    const float x = load_float(bytes.data() + pos, header.byte_order);
    const float y = load_float(bytes.data() + pos + 4, header.byte_order);
    const float z = load_float(bytes.data() + pos + 8, header.byte_order);
    if (std::isnan(x) && std::isnan(y) && std::isnan(z)) {
      close_streamline(pos + 12);
    } else if (std::isinf(x) && std::isinf(y) && std::isinf(z)) {
      if (points.size() != offsets.back()) close_streamline(pos + 12);
      terminated = true;
      break;
    } else if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      throw FormatError("non-finite coordinate inside a streamline" + at_byte(pos), pos);
    } else {
      points.push_back({x, y, z});
    }
    pos += 12;
  }
  if (!terminated) throw FormatError("truncated payload: no end-of-data marker" + at_byte(pos), pos);
  const std::size_t parsed = offsets.size() - 1;
  if (header.count && *header.count != parsed)
    throw FormatError("header declares " + std::to_string(*header.count) + " streamlines but payload holds " +
                          std::to_string(parsed) + at_byte(pos),
                      pos);
  return Tractogram::from_buffers(std::move(points), std::move(offsets));
}

std::string encode_tck(const Tractogram& t) {
  std::string base = std::string(kMagic) + "\ncount: " + std::to_string(t.size()) + "\ndatatype: Float32LE\n";
  std::size_t offset = 0;
  std::string header;
  for (int attempt = 0; attempt < 4; ++attempt) {
    header = base + "file: . " + std::to_string(offset) + "\nEND\n";
    if (header.size() == offset) break;
    offset = header.size();
  }
  const std::size_t payload = 12 * (t.total_points() + t.size() + 1);
  std::string out = header;
  out.resize(header.size() + payload);
  char* p = out.data() + header.size();
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  auto put = [&p](float x, float y, float z) {
    store_float_le(p, x);
    store_float_le(p + 4, y);
    store_float_le(p + 8, z);
    p += 12;
  };
  for (std::size_t i = 0; i < t.size(); ++i) {
    for (const auto& pt : t.points(i)) put(pt.x, pt.y, pt.z);
    put(nan, nan, nan);
  }
  put(inf, inf, inf);
  return out;
}

Tractogram read_tck(const std::filesystem::path& path) {
  try {
    return decode_tck(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

TckHeader read_tck_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string head;
  std::string line;
  while (std::getline(in, line)) {
    head += line;
    head += '\n';
    if (line == "END" || head.size() > (1u << 20)) break;
  }
  // The offset check needs the file size; pad the view virtually.
  in.clear();
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  std::string view = head;
  if (size > view.size()) view.resize(size, '\0');
  return parse_tck_header(view);
}

void write_tck(const Tractogram& t, const std::filesystem::path& path) { write_file(path, encode_tck(t)); }

// ---------------------------------------------------------------- labels

LabelFile parse_labels(std::string_view text) {
  LabelFile labels;
  std::unordered_set<std::size_t> seen;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::size_t id = 0;
    int value = 0;
    if (comma == std::string_view::npos || !parse_number(line.substr(0, comma), id) ||
        !parse_number(line.substr(comma + 1), value) || (value != 0 && value != 1))
      throw FormatError("line " + std::to_string(line_no) + ": expected \"id,label\" with label 0 or 1", line_no);
    if (!seen.insert(id).second)
      throw FormatError("line " + std::to_string(line_no) + ": duplicate id " + std::to_string(id), line_no);
    labels.push_back({id, value == 1});
  }
  return labels;
}

std::string format_labels(std::span<const Label> labels) {
  std::string out;
  out.reserve(labels.size() * 10);
  for (const auto& l : labels) {
    out += std::to_string(l.streamline_id);
    out += l.positive ? ",1\n" : ",0\n";
  }
  return out;
}

LabelFile read_labels(const std::filesystem::path& path) {
  try {
    return parse_labels(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_labels(std::span<const Label> labels, const std::filesystem::path& path) {
  write_file(path, format_labels(labels));
}

// ---------------------------------------------------------------- masks

VoxelMask decode_mask(std::string_view bytes) {
  std::size_t pos = 0;
  std::string_view line;
  auto expect = [&](std::string_view key, auto& values) {
    const std::size_t start = pos;
    if (!next_line(bytes, pos, line) || line.substr(0, key.size()) != key)
      throw FormatError("expected \"" + std::string(key) + "\" header line" + at_byte(start), start);
    std::istringstream fields{std::string(line.substr(key.size()))};
    for (auto& v : values) {
      std::string token;
      if (!(fields >> token) || !parse_number(token, v))
        throw FormatError("malformed \"" + std::string(key) + "\" values" + at_byte(start), start);
    }
    std::string extra;
    if (fields >> extra) throw FormatError("trailing values in \"" + std::string(key) + "\"" + at_byte(start), start);
  };

  std::array<std::size_t, 3> dims{};
  std::array<double, 3> voxel{};
  std::array<double, 3> origin{};
  expect("dims:", dims);
  expect("voxel:", voxel);
  expect("origin:", origin);
  const std::size_t data_line = pos;
  if (!next_line(bytes, pos, line) || line != "DATA")
    throw FormatError("expected DATA line" + at_byte(data_line), data_line);
  for (int a = 0; a < 3; ++a) {
    if (dims[a] == 0) throw FormatError("mask dimensions must be positive" + at_byte(0), 0);
    if (!(voxel[a] > 0.0)) throw FormatError("voxel size must be positive" + at_byte(0), 0);
  }

  VoxelMask mask;
  mask.grid.dims = dims;
  mask.grid.voxel_size = {voxel[0], voxel[1], voxel[2]};
  mask.grid.origin = {origin[0], origin[1], origin[2]};
  std::size_t expected = 1;
  for (auto d : dims)
    if (__builtin_mul_overflow(expected, d, &expected))
      throw FormatError("mask dimensions overflow" + at_byte(0), 0);
  const std::size_t available = bytes.size() - pos;
  if (available != expected)
    throw FormatError("mask payload size mismatch: expected " + std::to_string(expected) + " bytes, found " +
                          std::to_string(available) + at_byte(pos),
                      pos);
  mask.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i] > 1) throw FormatError("mask voxel value not 0 or 1" + at_byte(pos + i), pos + i);
  return mask;
}

std::string encode_mask(const VoxelMask& mask) {
  if (mask.data.size() != mask.grid.voxel_count()) throw InvalidArgument("mask payload does not match its dimensions");
  const auto& g = mask.grid;
  std::string out = "dims: " + std::to_string(g.dims[0]) + " " + std::to_string(g.dims[1]) + " " +
                    std::to_string(g.dims[2]) + "\n";
  out += "voxel: " + format_double(g.voxel_size.x) + " " + format_double(g.voxel_size.y) + " " +
         format_double(g.voxel_size.z) + "\n";
  out += "origin: " + format_double(g.origin.x) + " " + format_double(g.origin.y) + " " + format_double(g.origin.z) +
         "\n";
  out += "DATA\n";
  out.append(reinterpret_cast<const char*>(mask.data.data()), mask.data.size());
  return out;
}

VoxelMask read_mask(const std::filesystem::path& path) {
  try {
    return decode_mask(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

void write_mask(const VoxelMask& mask, const std::filesystem::path& path) { write_file(path, encode_mask(mask)); }

}  // namespace tractloop::io
