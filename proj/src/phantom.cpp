#include "tractloop/phantom.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include "tractloop/config.hpp"
#include "tractloop/error.hpp"
#include "tractloop/evaluation.hpp"
#include "tractloop/parallel.hpp"
#include "tractloop/rng.hpp"

namespace tractloop {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr std::size_t kClearanceSamples = 400;
constexpr std::size_t kValidationSamples = 2000;

// Reference direction used to build a normal frame that stays continuous along the centerline.
Vec3 frame_reference(const BundleSpec& b) {
  switch (b.family) {
    case CenterlineFamily::arc: return normalized(cross(b.axis_u, b.axis_v));
    case CenterlineFamily::helix: return normalized(b.axis);
    case CenterlineFamily::straight: break;
  }
  const Vec3 chord = b.end - b.start;
  const double ax = std::abs(chord.x), ay = std::abs(chord.y), az = std::abs(chord.z);
  if (ax <= ay && ax <= az) return {1, 0, 0};
  if (ay <= az) return {0, 1, 0};
  return {0, 0, 1};
}

struct Frame {
  Vec3 n1;
  Vec3 n2;
};

Frame frame_at(const BundleSpec& b, const Vec3& reference, double u) {
  const double h = 1e-4;
  const Vec3 tangent = normalized(b.centerline(std::min(1.0, u + h)) - b.centerline(std::max(0.0, u - h)));
  Vec3 n1 = cross(tangent, reference);
  if (norm(n1) < 1e-9) n1 = cross(tangent, Vec3{reference.y, reference.z, reference.x});
  n1 = normalized(n1);
  return {n1, cross(tangent, n1)};
}

double segment_distance(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 ab = b - a;
  const double len_sq = dot(ab, ab);
  const double t = len_sq > 0.0 ? std::clamp(dot(p - a, ab) / len_sq, 0.0, 1.0) : 0.0;
  return distance(p, a + ab * t);
}

std::vector<Vec3> sample_centerline(const BundleSpec& b, std::size_t n) {
  std::vector<Vec3> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = b.centerline(static_cast<double>(i) / static_cast<double>(n - 1));
  return pts;
}

std::size_t draw_point_count(Rng& rng, const PhantomSpec& spec, bool odd) {
  std::size_t n = spec.min_points + rng.below(spec.max_points - spec.min_points + 1);
  if (odd && n % 2 == 0) n = n + 1 <= spec.max_points ? n + 1 : n - 1;
  return n;
}

void bundle_streamline(const BundleSpec& b, const PhantomSpec& spec, Rng& rng, std::span<Point3f> out) {
  const Vec3 reference = frame_reference(b);
  const double r = b.tube_radius * std::sqrt(rng.uniform());
  const double alpha = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double freq = rng.uniform(0.5, 1.5);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const bool reversed = rng.below(2) == 1;
  const std::size_t n = out.size();
  (void)spec;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = static_cast<double>(k) / static_cast<double>(n - 1);
    const Frame f = frame_at(b, reference, u);
    const double g = 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * freq * u + phase));
    const Vec3 radial = r * (std::cos(alpha) * f.n1 + std::sin(alpha) * f.n2);
    const Vec3 wobble = b.jitter * g * (std::cos(psi) * f.n1 + std::sin(psi) * f.n2);
    out[reversed ? n - 1 - k : k] = (b.centerline(u) + radial + wobble).to_float();
  }
}

void background_streamline(const PhantomSpec& spec, Rng& rng, std::span<Point3f> out) {
  Vec3 c[4];
  for (auto& p : c)
    p = {rng.uniform(0.0, spec.extent), rng.uniform(0.0, spec.extent), rng.uniform(0.0, spec.extent)};
  const std::size_t n = out.size();
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / static_cast<double>(n - 1);
    const double s = 1.0 - t;
    const Vec3 p = (s * s * s) * c[0] + (3 * s * s * t) * c[1] + (3 * s * t * t) * c[2] + (t * t * t) * c[3];
    out[k] = p.to_float();
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string format_vec(const Vec3& v) { return format_double(v.x) + " " + format_double(v.y) + " " + format_double(v.z); }

const char* family_name(CenterlineFamily f) {
  switch (f) {
    case CenterlineFamily::straight: return "straight";
    case CenterlineFamily::arc: return "arc";
    case CenterlineFamily::helix: return "helix";
  }
  return "straight";
}

}  // namespace

Vec3 BundleSpec::centerline(double u) const {
  switch (family) {
    case CenterlineFamily::straight: return start + (end - start) * u;
    case CenterlineFamily::arc: {
      const double theta = (start_angle + (end_angle - start_angle) * u) * kDeg;
      return center + arc_radius * (std::cos(theta) * axis_u + std::sin(theta) * axis_v);
    }
    case CenterlineFamily::helix: {
      const Vec3 a = normalized(axis);
      const Vec3 helper = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
      const Vec3 e1 = normalized(cross(a, helper));
      const Vec3 e2 = cross(a, e1);
      const double phi = 2.0 * std::numbers::pi * turns * u;
      return center + helix_radius * (std::cos(phi) * e1 + std::sin(phi) * e2) + a * (pitch * turns * u);
    }
  }
  return start;
}

PhantomSpec PhantomSpec::standard(std::uint64_t seed) {
  PhantomSpec spec;
  spec.extent = 100.0;
  spec.background = 47000;
  spec.seed = seed;

  BundleSpec straight;
  straight.name = "straight";
  straight.family = CenterlineFamily::straight;
  straight.start = {20, 20, 10};
  straight.end = {20, 20, 90};

  BundleSpec arc;
  arc.name = "arc";
  arc.family = CenterlineFamily::arc;
  arc.center = {60, 40, 70};
  arc.arc_radius = 30;
  arc.start_angle = 0;
  arc.end_angle = 180;

  BundleSpec helix;
  helix.name = "helix";
  helix.family = CenterlineFamily::helix;
  helix.center = {75, 75, 10};
  helix.axis = {0, 0, 1};
  helix.helix_radius = 10;
  helix.pitch = 20;
  helix.turns = 2;

  for (auto* b : {&straight, &arc, &helix}) {
    b->tube_radius = 3.0;
    b->jitter = 1.0;
    b->count = 1000;
    spec.bundles.push_back(*b);
  }
  return spec;
}

PhantomSpec PhantomSpec::standard_with_total(std::size_t total, std::uint64_t seed) {
  PhantomSpec spec = standard(seed);
  std::size_t in_bundles = 0;
  for (const auto& b : spec.bundles) in_bundles += b.count;
  if (total <= in_bundles) throw InvalidArgument("total must exceed the bundle streamline count");
  spec.background = total - in_bundles;
  return spec;
}

double tube_clearance(const BundleSpec& a, const BundleSpec& b) {
  const auto pa = sample_centerline(a, kClearanceSamples);
  const auto pb = sample_centerline(b, kClearanceSamples);
  double best = std::numeric_limits<double>::max();
  for (const auto& p : pa)
    for (std::size_t i = 1; i < pb.size(); ++i) best = std::min(best, segment_distance(pb[i - 1], pb[i], p));
  return best - (a.tube_radius + a.jitter) - (b.tube_radius + b.jitter);
}

void check_spec(const PhantomSpec& spec) {
  if (!(spec.extent > 0.0)) throw InvalidArgument("phantom extent must be positive");
  if (spec.min_points < 2 || spec.max_points < spec.min_points)
    throw InvalidArgument("point count range must satisfy 2 <= min_points <= max_points");
  for (const auto& b : spec.bundles) {
    if (b.count == 0) throw InvalidArgument("bundle " + b.name + ": count must be positive");
    if (!(b.tube_radius > 0.0)) throw InvalidArgument("bundle " + b.name + ": tube radius must be positive");
    if (!(b.jitter >= 0.0)) throw InvalidArgument("bundle " + b.name + ": jitter must be non-negative");
    if (b.family == CenterlineFamily::arc && !(b.arc_radius > 0.0))
      throw InvalidArgument("bundle " + b.name + ": arc_radius must be positive");
    if (b.family == CenterlineFamily::helix && (!(b.helix_radius > 0.0) || !(b.turns > 0.0)))
      throw InvalidArgument("bundle " + b.name + ": helix_radius and turns must be positive");
    if (!(distance(b.centerline(0.0), b.centerline(1.0)) > 0.0) && b.family == CenterlineFamily::straight)
      throw InvalidArgument("bundle " + b.name + ": zero-length centerline");
  }
  for (std::size_t i = 0; i < spec.bundles.size(); ++i)
    for (std::size_t j = i + 1; j < spec.bundles.size(); ++j) {
      const auto& a = spec.bundles[i];
      const auto& b = spec.bundles[j];
      const double required = std::max(a.tube_radius, b.tube_radius);
      const double clearance = tube_clearance(a, b);
      if (clearance < required)
        throw InvalidArgument("bundles " + a.name + " and " + b.name + " overlap: clearance " +
                              format_double(clearance) + " mm, need " + format_double(required) + " mm");
    }
}

Phantom generate(const PhantomSpec& spec, const GenerateOptions& options) {
  if (options.check_separation) {
    check_spec(spec);
  } else {
    for (const auto& b : spec.bundles)
      if (b.count == 0 || !(b.tube_radius > 0.0)) throw InvalidArgument("bundle " + b.name + ": invalid count or radius");
  }

  // Source slots: bundle streamlines in bundle order, then background.
  std::vector<std::int32_t> source_bundle;
  std::size_t total = spec.background;
  for (const auto& b : spec.bundles) total += b.count;
  source_bundle.reserve(total);
  for (std::size_t bi = 0; bi < spec.bundles.size(); ++bi)
    source_bundle.insert(source_bundle.end(), spec.bundles[bi].count, static_cast<std::int32_t>(bi));
  source_bundle.insert(source_bundle.end(), spec.background, -1);

  // Output position -> source slot.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffler(derive_seed(spec.seed, ~std::uint64_t{0}));
  shuffle(std::span<std::size_t>(order), shuffler);

  std::vector<std::size_t> offsets(total + 1, 0);
  for (std::size_t pos = 0; pos < total; ++pos) {
    Rng rng(derive_seed(spec.seed, order[pos]));
    offsets[pos + 1] = offsets[pos] + draw_point_count(rng, spec, source_bundle[order[pos]] >= 0);
  }
  std::vector<Point3f> points(offsets.back());
  parallel_for(total, 1024, [&](std::size_t begin, std::size_t end) {
    for (std::size_t pos = begin; pos < end; ++pos) {
      const std::size_t slot = order[pos];
      Rng rng(derive_seed(spec.seed, slot));
      const bool in_bundle = source_bundle[slot] >= 0;
      draw_point_count(rng, spec, in_bundle);
      std::span<Point3f> out(points.data() + offsets[pos], offsets[pos + 1] - offsets[pos]);
      if (in_bundle)
        bundle_streamline(spec.bundles[static_cast<std::size_t>(source_bundle[slot])], spec, rng, out);
      else
        background_streamline(spec, rng, out);
    }
  });

  Phantom ph;
  ph.tractogram = Tractogram::from_buffers(std::move(points), std::move(offsets));
  for (std::size_t bi = 0; bi < spec.bundles.size(); ++bi) {
    BundleLabels bl;
    bl.name = spec.bundles[bi].name;
    bl.labels.reserve(total);
    for (std::size_t pos = 0; pos < total; ++pos)
      bl.labels.push_back({pos, source_bundle[order[pos]] == static_cast<std::int32_t>(bi)});
    ph.bundles.push_back(std::move(bl));
  }
  return ph;
}

ValidationReport validate(const PhantomSpec& spec, const Tractogram& t, std::span<const BundleLabels> labels) {
  ValidationReport report;
  for (std::size_t i = 0; i < spec.bundles.size(); ++i)
    for (std::size_t j = i + 1; j < spec.bundles.size(); ++j) {
      const auto& a = spec.bundles[i];
      const auto& b = spec.bundles[j];
      const double clearance = tube_clearance(a, b);
      if (clearance < std::max(a.tube_radius, b.tube_radius))
        report.violations.push_back("tube overlap between " + a.name + " and " + b.name + " (clearance " +
                                    format_double(clearance) + " mm)");
    }
  if (labels.size() != spec.bundles.size()) {
    report.violations.push_back("expected " + std::to_string(spec.bundles.size()) + " label sets, got " +
                                std::to_string(labels.size()));
    return report;
  }

  std::vector<std::vector<std::size_t>> members(labels.size());
  for (std::size_t bi = 0; bi < labels.size(); ++bi) {
    const auto& b = spec.bundles[bi];
    members[bi] = positive_ids(labels[bi].labels);
    if (members[bi].size() != b.count)
      report.violations.push_back("bundle " + b.name + ": " + std::to_string(members[bi].size()) +
                                  " labeled streamlines, spec says " + std::to_string(b.count));
    const auto centerline = sample_centerline(b, kValidationSamples);
    const double limit = b.tube_radius + b.jitter + 1e-3;
    std::vector<std::uint8_t> bad(members[bi].size(), 0);
    parallel_for(members[bi].size(), 16, [&](std::size_t begin, std::size_t end) {
      for (std::size_t k = begin; k < end; ++k) {
        for (const auto& p : t.points(members[bi][k])) {
          const Vec3 q(p);
          double best = std::numeric_limits<double>::max();
          for (std::size_t i = 1; i < centerline.size() && best > limit; ++i)
            best = std::min(best, segment_distance(centerline[i - 1], centerline[i], q));
          if (best > limit) {
            bad[k] = 1;
            break;
          }
        }
      }
    });
    for (std::size_t k = 0; k < bad.size(); ++k)
      if (bad[k])
        report.violations.push_back("bundle " + b.name + ": streamline " + std::to_string(members[bi][k]) +
                                    " leaves its tube");
  }

  if (!t.empty()) {
    const VoxelGrid grid = default_grid(t);
    std::vector<VoxelMask> masks;
    for (const auto& m : members) masks.push_back(voxelize(m, t, grid));
    for (std::size_t i = 0; i < masks.size(); ++i)
      for (std::size_t j = i + 1; j < masks.size(); ++j) {
        const double d = dice(masks[i], masks[j]);
        report.pairwise_dice.push_back(d);
        if (d >= 0.05)
          report.violations.push_back("bundle masks " + spec.bundles[i].name + " and " + spec.bundles[j].name +
                                      " overlap (dice " + format_double(d) + ")");
      }
  }
  return report;
}

// ---------------------------------------------------------------- text format

namespace {

double parse_double(const ConfigEntry& e) {
  double v = 0.0;
  const auto* last = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v))
    throw FormatError("line " + std::to_string(e.line) + ": " + e.key + " expects a number", e.line);
  return v;
}

std::size_t parse_count(const ConfigEntry& e) {
  std::size_t v = 0;
  const auto* last = e.value.data() + e.value.size();
  auto [ptr, ec] = std::from_chars(e.value.data(), last, v);
  if (ec != std::errc() || ptr != last)
    throw FormatError("line " + std::to_string(e.line) + ": " + e.key + " expects a non-negative integer", e.line);
  return v;
}

Vec3 parse_vec(const ConfigEntry& e) {
  double xyz[3];
  std::size_t pos = 0;
  for (int a = 0; a < 3; ++a) {
    while (pos < e.value.size() && e.value[pos] == ' ') ++pos;
    const auto* first = e.value.data() + pos;
    const auto* last = e.value.data() + e.value.size();
    auto [ptr, ec] = std::from_chars(first, last, xyz[a]);
    if (ec != std::errc() || !std::isfinite(xyz[a]))
      throw FormatError("line " + std::to_string(e.line) + ": " + e.key + " expects three numbers", e.line);
    pos = static_cast<std::size_t>(ptr - e.value.data());
  }
  while (pos < e.value.size() && e.value[pos] == ' ') ++pos;
  if (pos != e.value.size())
    throw FormatError("line " + std::to_string(e.line) + ": " + e.key + " expects three numbers", e.line);
  return {xyz[0], xyz[1], xyz[2]};
}

}  // namespace

PhantomSpec parse_phantom_spec(std::string_view text) {
  const auto sections = parse_config_text(text);
  PhantomSpec spec;
  for (const auto& e : sections.front().entries) {
    if (e.key == "extent") spec.extent = parse_double(e);
    else if (e.key == "background") spec.background = parse_count(e);
    else if (e.key == "seed") spec.seed = parse_count(e);
    else if (e.key == "min_points") spec.min_points = parse_count(e);
    else if (e.key == "max_points") spec.max_points = parse_count(e);
    else throw FormatError("line " + std::to_string(e.line) + ": unknown key \"" + e.key + "\"", e.line);
  }
  for (std::size_t s = 1; s < sections.size(); ++s) {
    const auto& sec = sections[s];
    if (sec.name != "bundle")
      throw FormatError("line " + std::to_string(sec.line) + ": unknown section [" + sec.name + "]", sec.line);
    BundleSpec b;
    b.name = "bundle" + std::to_string(s);
    bool have_family = false;
    for (const auto& e : sec.entries) {
      if (e.key == "name") b.name = e.value;
      else if (e.key == "family") {
        if (e.value == "straight") b.family = CenterlineFamily::straight;
        else if (e.value == "arc") b.family = CenterlineFamily::arc;
        else if (e.value == "helix") b.family = CenterlineFamily::helix;
        else throw FormatError("line " + std::to_string(e.line) + ": unknown family \"" + e.value + "\"", e.line);
        have_family = true;
      } else if (e.key == "start") b.start = parse_vec(e);
      else if (e.key == "end") b.end = parse_vec(e);
      else if (e.key == "center") b.center = parse_vec(e);
      else if (e.key == "axis_u") b.axis_u = parse_vec(e);
      else if (e.key == "axis_v") b.axis_v = parse_vec(e);
      else if (e.key == "axis") b.axis = parse_vec(e);
      else if (e.key == "arc_radius") b.arc_radius = parse_double(e);
      else if (e.key == "start_angle") b.start_angle = parse_double(e);
      else if (e.key == "end_angle") b.end_angle = parse_double(e);
      else if (e.key == "helix_radius") b.helix_radius = parse_double(e);
      else if (e.key == "pitch") b.pitch = parse_double(e);
      else if (e.key == "turns") b.turns = parse_double(e);
      else if (e.key == "tube_radius") b.tube_radius = parse_double(e);
      else if (e.key == "count") b.count = parse_count(e);
      else if (e.key == "jitter") b.jitter = parse_double(e);
      else throw FormatError("line " + std::to_string(e.line) + ": unknown key \"" + e.key + "\"", e.line);
    }
    if (!have_family)
      throw FormatError("line " + std::to_string(sec.line) + ": bundle section lacks a family", sec.line);
    if (b.count == 0)
      throw FormatError("line " + std::to_string(sec.line) + ": bundle " + b.name + " needs count > 0", sec.line);
    if (!(b.tube_radius > 0.0))
      throw FormatError("line " + std::to_string(sec.line) + ": bundle " + b.name + " needs tube_radius > 0", sec.line);
    spec.bundles.push_back(b);
  }
  return spec;
}

std::string format_phantom_spec(const PhantomSpec& spec) {
  std::string out;
  out += "extent = " + format_double(spec.extent) + "\n";
  out += "background = " + std::to_string(spec.background) + "\n";
  out += "seed = " + std::to_string(spec.seed) + "\n";
  out += "min_points = " + std::to_string(spec.min_points) + "\n";
  out += "max_points = " + std::to_string(spec.max_points) + "\n";
  for (const auto& b : spec.bundles) {
    out += "\n[bundle]\n";
    out += "name = " + b.name + "\n";
    out += std::string("family = ") + family_name(b.family) + "\n";
    switch (b.family) {
      case CenterlineFamily::straight:
        out += "start = " + format_vec(b.start) + "\n";
        out += "end = " + format_vec(b.end) + "\n";
        break;
      case CenterlineFamily::arc:
        out += "center = " + format_vec(b.center) + "\n";
        out += "axis_u = " + format_vec(b.axis_u) + "\n";
        out += "axis_v = " + format_vec(b.axis_v) + "\n";
        out += "arc_radius = " + format_double(b.arc_radius) + "\n";
        out += "start_angle = " + format_double(b.start_angle) + "\n";
        out += "end_angle = " + format_double(b.end_angle) + "\n";
        break;
      case CenterlineFamily::helix:
        out += "center = " + format_vec(b.center) + "\n";
        out += "axis = " + format_vec(b.axis) + "\n";
        out += "helix_radius = " + format_double(b.helix_radius) + "\n";
        out += "pitch = " + format_double(b.pitch) + "\n";
        out += "turns = " + format_double(b.turns) + "\n";
        break;
    }
    out += "tube_radius = " + format_double(b.tube_radius) + "\n";
    out += "jitter = " + format_double(b.jitter) + "\n";
    out += "count = " + std::to_string(b.count) + "\n";
  }
  return out;
}

}  // namespace tractloop
