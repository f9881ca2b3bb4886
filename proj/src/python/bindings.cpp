#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tractloop/error.hpp"
#include "tractloop/evaluation.hpp"
#include "tractloop/features.hpp"
#include "tractloop/journal.hpp"
#include "tractloop/phantom.hpp"
#include "tractloop/tract_io.hpp"

namespace py = pybind11;
using namespace tractloop;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> to_points(const Array3& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw InvalidArgument("expected an (n, 3) array");
  auto r = a.unchecked<2>();
  std::vector<Vec3> pts(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
  return pts;
}

py::array_t<double> to_array(std::span<const Vec3> pts) {
  py::array_t<double> out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{3}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    w(static_cast<py::ssize_t>(i), 0) = pts[i].x;
    w(static_cast<py::ssize_t>(i), 1) = pts[i].y;
    w(static_cast<py::ssize_t>(i), 2) = pts[i].z;
  }
  return out;
}

ResampledStreamline as_resampled(const Array3& a) { return ResampledStreamline{to_points(a)}; }

}  // namespace

PYBIND11_MODULE(_tractloop, m) {
  m.doc() = "Active-learning tract segmentation core";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);

  py::class_<Tractogram>(m, "Tractogram")
      .def(py::init<>())
      .def("add", [](Tractogram& t, const Array3& pts) { return t.add(std::span<const Vec3>(to_points(pts))); })
      .def("__len__", &Tractogram::size)
      .def_property_readonly("total_points", &Tractogram::total_points)
      .def("points",
           [](const Tractogram& t, std::size_t id) {
             if (id >= t.size()) throw py::index_error("streamline id out of range");
             std::vector<Vec3> pts;
             for (const auto& p : t.points(id)) pts.emplace_back(p);
             return to_array(pts);
           })
      .def("subset", &Tractogram::subset)
      .def("__eq__", [](const Tractogram& a, const Tractogram& b) { return a == b; });

  m.def("read_tck", [](const std::filesystem::path& p) { return io::read_tck(p); });
  m.def("write_tck", [](const Tractogram& t, const std::filesystem::path& p) { io::write_tck(t, p); });
  m.def("read_labels", [](const std::filesystem::path& p) {
    std::vector<std::pair<std::size_t, bool>> out;
    for (const auto& l : io::read_labels(p)) out.emplace_back(l.streamline_id, l.positive);
    return out;
  });

  m.def("resample", [](const Array3& pts, std::size_t n) { return to_array(resample(std::span<const Vec3>(to_points(pts)), n).points); },
        py::arg("points"), py::arg("m") = 40);
  m.def("mdf_distance", [](const Array3& a, const Array3& b) { return mdf_distance(as_resampled(a), as_resampled(b)); });
  m.def("endpoint_distance",
        [](const Array3& a, const Array3& b) { return endpoint_distance(as_resampled(a), as_resampled(b)); });
  m.def("entropy", &entropy);
  m.def("top_k", [](const std::vector<double>& scores, const std::vector<std::size_t>& pool, std::size_t k) {
    return top_k(scores, pool, k);
  });

  m.def(
      "standard_phantom",
      [](std::uint64_t seed, std::optional<std::size_t> total) {
        const PhantomSpec spec = total ? PhantomSpec::standard_with_total(*total, seed) : PhantomSpec::standard(seed);
        Phantom ph = generate(spec);
        py::dict bundles;
        for (const auto& b : ph.bundles) bundles[py::str(b.name)] = positive_ids(b.labels);
        return py::make_tuple(std::move(ph.tractogram), bundles);
      },
      py::arg("seed") = 1, py::arg("total") = std::nullopt);

  m.def(
      "simulate",
      [](const Tractogram& t, const std::vector<std::size_t>& positives, const std::string& strategy,
         std::uint64_t seed, std::size_t iterations) {
        std::vector<Label> reference(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) reference[i] = {i, false};
        for (auto id : positives) {
          if (id >= t.size()) throw InvalidArgument("positive id out of range");
          reference[id].positive = true;
        }
        SessionConfig cfg;
        cfg.max_iterations = iterations;
        SimulationResult result;
        {
          py::gil_scoped_release release;
          auto data = Dataset::create("python", t, cfg.points_per_streamline);
          result = run_simulation_curve(data, reference, cfg, parse_strategy(strategy), seed, default_grid(t));
        }
        py::list curve;
        for (const auto& r : result.curve.records)
          curve.append(py::dict(py::arg("iteration") = r.iteration, py::arg("labeled") = r.labeled,
                                py::arg("dice") = r.dice, py::arg("tract_size") = r.tract_size));
        return py::dict(py::arg("curve") = curve, py::arg("tract") = result.final_tract,
                        py::arg("journal") = result.journal);
      },
      py::arg("tractogram"), py::arg("positives"), py::arg("strategy") = "entropy", py::arg("seed") = 0,
      py::arg("iterations") = 20);

  m.def("dice_of_tracts", [](const Tractogram& t, const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const VoxelGrid grid = default_grid(t);
    return dice(voxelize(a, t, grid), voxelize(b, t, grid));
  });

  m.def("replay", [](const std::string& journal_text, const Tractogram& t) {
    const auto data = Dataset::create("python", t, SessionConfig{}.points_per_streamline);
    const ReplayResult r = replay(Journal::parse(journal_text), data);
    return py::dict(py::arg("tract") = r.tract, py::arg("iterations") = r.iterations, py::arg("matches") = r.matches);
  });

  m.attr("__version__") = "0.1.0";
}
