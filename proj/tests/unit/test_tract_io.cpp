#include <doctest.h>

#include <bit>
#include <cstring>
#include <limits>

#include "corruption_corpus.hpp"
#include "support.hpp"
#include "tractloop/error.hpp"
#include "tractloop/tract_io.hpp"

using namespace tractloop;

namespace {

void put_f32(std::string& out, float v, bool big_endian) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) {
    const int shift = big_endian ? 8 * (3 - i) : 8 * i;
    out.push_back(static_cast<char>((bits >> shift) & 0xffu));
  }
}

// Builds a TCK byte stream by hand from the format definition.
std::string hand_tck(const std::vector<std::vector<float>>& streamlines, bool big_endian,
                     const std::string& extra_header = "") {
  const std::string dtype = big_endian ? "Float32BE" : "Float32LE";
  std::string head_without_offset = "mrtrix tracks\ndatatype: " + dtype + "\n" + extra_header + "file: . ";
  // offset field has a fixed width so the header length is known up front
  std::string tail = "\nEND\n";
  const std::size_t width = 4;
  const std::size_t offset = head_without_offset.size() + width + tail.size();
  std::string offset_text = std::to_string(offset);
  offset_text.insert(0, width - offset_text.size(), '0');
  std::string out = head_without_offset + offset_text + tail;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  for (const auto& s : streamlines) {
    for (float v : s) put_f32(out, v, big_endian);
    for (int i = 0; i < 3; ++i) put_f32(out, nan, big_endian);
  }
  for (int i = 0; i < 3; ++i) put_f32(out, inf, big_endian);
  return out;
}

bool same_bits(const Tractogram& a, const Tractogram& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto pa = a.points(i), pb = b.points(i);
    if (pa.size() != pb.size()) return false;
    if (std::memcmp(pa.data(), pb.data(), pa.size() * sizeof(Point3f)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("hand-built TCK with one two-point streamline") {
  for (bool big : {false, true}) {
    const auto bytes = hand_tck({{0, 0, 0, 1, 2, 3}}, big);
    const auto t = io::decode_tck(bytes);
    REQUIRE(t.size() == 1);
    const auto pts = t.points(0);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0] == Point3f{0, 0, 0});
    CHECK(pts[1] == Point3f{1, 2, 3});
    const auto header = io::parse_tck_header(bytes);
    CHECK(header.byte_order == (big ? io::ByteOrder::big : io::ByteOrder::little));
    CHECK(!header.count.has_value());
  }
}

TEST_CASE("empty TCK") {
  const auto bytes = hand_tck({}, false);
  CHECK(io::decode_tck(bytes).size() == 0);

  const auto written = io::encode_tck(Tractogram{});
  CHECK(written.rfind("mrtrix tracks\n", 0) == 0);
  const auto header = io::parse_tck_header(written);
  REQUIRE(header.count.has_value());
  CHECK(*header.count == 0);
  CHECK(header.fields.at("datatype") == "Float32LE");
  CHECK(io::decode_tck(written).size() == 0);
}

TEST_CASE("writer header is self-consistent") {
  const auto t = support::random_tractogram(4, 3);
  const auto bytes = io::encode_tck(t);
  const auto header = io::parse_tck_header(bytes);
  CHECK(header.data_offset == bytes.find("END\n") + 4);
  CHECK(header.byte_order == io::ByteOrder::little);
  CHECK(*header.count == 3);
  CHECK(bytes.size() == header.data_offset + 12 * (t.total_points() + t.size() + 1));
}

TEST_CASE("TCK round-trip is bit-exact") {
  support::TempDir dir;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto t = support::random_tractogram(seed, 1 + seed * 7);
    io::write_tck(t, dir / "t.tck");
    CHECK(same_bits(io::read_tck(dir / "t.tck"), t));
  }
  // values that do not survive a decimal round-trip
  Tractogram odd;
  const std::vector<Point3f> pts{{1e-38f, -0.0f, 3.4e38f}, {0.1f, 1.0f / 3.0f, -7.25e-12f}};
  odd.add(std::span<const Point3f>(pts));
  CHECK(same_bits(io::decode_tck(io::encode_tck(odd)), odd));
}

TEST_CASE("one million short streamlines round-trip") {
  std::vector<Point3f> points;
  std::vector<std::size_t> offsets{0};
  points.reserve(2'000'000);
  offsets.reserve(1'000'001);
  Rng rng(99);
  for (std::size_t i = 0; i < 1'000'000; ++i) {
    const Point3f a{static_cast<float>(rng.uniform(0, 100)), static_cast<float>(rng.uniform(0, 100)),
                    static_cast<float>(rng.uniform(0, 100))};
    points.push_back(a);
    points.push_back({a.x + 1.0f, a.y, a.z});
    offsets.push_back(points.size());
  }
  const auto t = Tractogram::from_buffers(std::move(points), std::move(offsets));
  support::TempDir dir;
  io::write_tck(t, dir / "big.tck");
  const auto back = io::read_tck(dir / "big.tck");
  CHECK(back.size() == 1'000'000);
  CHECK(back == t);
  CHECK(*io::read_tck_header(dir / "big.tck").count == 1'000'000);
}

TEST_CASE("label files") {
  const auto labels = io::parse_labels("7,1\n9,0\n");
  REQUIRE(labels.size() == 2);
  CHECK(labels[0].streamline_id == 7);
  CHECK(labels[0].positive);
  CHECK(labels[1].streamline_id == 9);
  CHECK_FALSE(labels[1].positive);
  CHECK(io::format_labels(labels) == "7,1\n9,0\n");
  CHECK(io::parse_labels("7,1\n9,0").size() == 2);

  CHECK_THROWS_AS(io::parse_labels("7,1\n7,0\n"), FormatError);
  try {
    io::parse_labels("1,0\n2,1\nthree,1\n");
    FAIL("expected a FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 3);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  Rng rng(5);
  LabelFile big;
  for (std::size_t i = 0; i < 100'000; ++i) big.push_back({i * 3 + rng.below(3), rng.below(2) == 1});
  support::TempDir dir;
  io::write_labels(big, dir / "l.labels");
  const auto back = io::read_labels(dir / "l.labels");
  REQUIRE(back.size() == big.size());
  bool same = true;
  for (std::size_t i = 0; i < big.size(); ++i)
    same &= back[i].streamline_id == big[i].streamline_id && back[i].positive == big[i].positive;
  CHECK(same);
}

TEST_CASE("mask files") {
  VoxelGrid g;
  g.dims = {1, 1, 1};
  VoxelMask one(g);
  one.data[0] = 1;
  const auto bytes = io::encode_mask(one);
  CHECK(bytes.size() >= 1);
  CHECK(bytes.back() == '\x01');
  CHECK(bytes.substr(bytes.size() - 6) == "DATA\n\x01");
  CHECK(io::decode_mask(bytes) == one);

  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    VoxelGrid r;
    r.dims = {1 + rng.below(20), 1 + rng.below(20), 1 + rng.below(20)};
    r.voxel_size = {rng.uniform(0.1, 3), rng.uniform(0.1, 3), rng.uniform(0.1, 3)};
    r.origin = {rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(-100, 100)};
    VoxelMask m(r);
    for (auto& v : m.data) v = static_cast<std::uint8_t>(rng.below(2));
    const auto enc = io::encode_mask(m);
    const auto dec = io::decode_mask(enc);
    CHECK(dec == m);
    CHECK(io::encode_mask(dec) == enc);
  }

  VoxelGrid cube;
  cube.dims = {256, 256, 256};
  VoxelMask big(cube);
  for (std::size_t i = 0; i < big.data.size(); i += 7) big.data[i] = 1;
  support::TempDir dir;
  io::write_mask(big, dir / "m.bin");
  CHECK(io::read_mask(dir / "m.bin") == big);
  CHECK(std::filesystem::file_size(dir / "m.bin") == io::encode_mask(big).size());

  auto truncated = bytes.substr(0, bytes.size() - 1);
  CHECK_THROWS_AS(io::decode_mask(truncated), FormatError);
  CHECK_THROWS_AS(io::decode_mask(bytes + '\x00'), FormatError);
}

TEST_CASE("file errors") {
  support::TempDir dir;
  CHECK_THROWS_AS(io::read_tck(dir / "missing.tck"), IoError);
  CHECK_THROWS_AS(io::read_labels(dir / "missing.labels"), IoError);
  CHECK_THROWS_AS(io::write_tck(Tractogram{}, dir / "no" / "such" / "dir.tck"), IoError);
  try {
    io::read_tck(dir / "missing.tck");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("missing.tck") != std::string::npos);
  }
}

TEST_CASE("corrupted files are rejected with diagnostics") {
  const auto outcome = support::run_corruption_corpus(31337);
  for (auto c : outcome.accepted) MESSAGE("accepted corruption case " << c);
  CHECK(outcome.cases == 1000);
  CHECK(outcome.rejected == outcome.cases);

  Rng rng(4242);
  const std::string tck = io::encode_tck(support::random_tractogram(3, 12, 2, 8));
  // random byte flips must never crash: either a clean parse or a FormatError
  std::size_t clean = 0, errors = 0;
  for (int i = 0; i < 2000; ++i) {
    std::string v = tck;
    const std::size_t flips = 1 + rng.below(8);
    for (std::size_t f = 0; f < flips; ++f) v[rng.below(v.size())] = static_cast<char>(rng.below(256));
    try {
      io::decode_tck(v);
      ++clean;
    } catch (const FormatError&) {
      ++errors;
    }
  }
  CHECK(clean + errors == 2000);
}
