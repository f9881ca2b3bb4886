#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tractloop/geometry.hpp"
#include "tractloop/label.hpp"

namespace tractloop {

enum class CenterlineFamily { straight, arc, helix };

/// Parameters of one synthetic bundle. Which fields are used depends on the family:
///   straight: start, end
///   arc:      center, arc_radius, start/end angle (degrees) in the plane spanned by axis_u, axis_v
///   helix:    center (axis start), axis (unit direction), helix_radius, pitch (mm per turn), turns
struct BundleSpec {
  std::string name;
  CenterlineFamily family = CenterlineFamily::straight;
  Vec3 start;
  Vec3 end;
  Vec3 center;
  Vec3 axis_u{1, 0, 0};
  Vec3 axis_v{0, 1, 0};
  Vec3 axis{0, 0, 1};
  double arc_radius = 0.0;
  double start_angle = 0.0;
  double end_angle = 0.0;
  double helix_radius = 0.0;
  double pitch = 0.0;
  double turns = 0.0;
  double tube_radius = 3.0;
  std::size_t count = 0;
  double jitter = 1.0;

  /// Centerline point at parameter u in [0,1].
  Vec3 centerline(double u) const;
};

struct PhantomSpec {
  double extent = 100.0;  // cube [0, extent]^3, mm
  std::vector<BundleSpec> bundles;
  std::size_t background = 0;
  std::size_t min_points = 20;
  std::size_t max_points = 60;
  std::uint64_t seed = 0;

  /// Three bundles (straight, arc, helix) of 1000 streamlines, 47,000
  /// background curves, 100 mm cube, tube radius 3 mm.
  static PhantomSpec standard(std::uint64_t seed = 1);
  /// `standard` rescaled to the given total streamline count by changing
  /// the background count only.
  static PhantomSpec standard_with_total(std::size_t total, std::uint64_t seed = 1);
};

/// Parses the `key = value` / `[bundle]` config format. Throws FormatError with line numbers.
PhantomSpec parse_phantom_spec(std::string_view text);
std::string format_phantom_spec(const PhantomSpec& spec);

struct BundleLabels {
  std::string name;
  LabelFile labels;  // every streamline id, positive iff in this bundle
};

struct Phantom {
  Tractogram tractogram;
  std::vector<BundleLabels> bundles;
};

/// Smallest clearance between two bundle tubes (centerline distance minus
/// both tube radii and jitters); negative when the tubes intersect.
double tube_clearance(const BundleSpec& a, const BundleSpec& b);

/// Throws InvalidArgument for non-positive counts/radii or overlapping tubes.
void check_spec(const PhantomSpec& spec);

struct GenerateOptions {
  bool check_separation = true;
};

Phantom generate(const PhantomSpec& spec, const GenerateOptions& options = {});

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<double> pairwise_dice;  // bundle mask dice, pairs (0,1), (0,2), ..., (1,2), ...
  bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate(const PhantomSpec& spec, const Tractogram& t, std::span<const BundleLabels> labels);

}  // namespace tractloop
