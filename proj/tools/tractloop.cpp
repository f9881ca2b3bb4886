#include <pthread.h>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "tractloop/config.hpp"
#include "tractloop/error.hpp"
#include "tractloop/evaluation.hpp"
#include "tractloop/journal.hpp"
#include "tractloop/parallel.hpp"
#include "tractloop/phantom.hpp"
#include "tractloop/service.hpp"
#include "tractloop/tract_io.hpp"

namespace fs = std::filesystem;
using namespace tractloop;

namespace {

/// Input the user got wrong; reported with exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PhantomArgs {
  std::string spec;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> total;
  bool write_spec = false;
};

struct SimulateArgs {
  std::string tck;
  std::vector<std::string> labels;
  std::string config;
  std::string strategy = "both";
  std::size_t seeds = 5;
  std::uint64_t seed = 0;
  std::optional<std::size_t> iterations;
  std::string out_dir = "simulation";
  std::string out_csv;
  bool no_runs = false;
};

struct ServeArgs {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = ".";
  std::size_t preview_limit = 500;
};

struct ReplayArgs {
  std::string journal;
  std::string tck;
  std::string out_tck;
  std::string out_ids;
};

struct VoxelizeArgs {
  std::string tck;
  std::string labels;
  std::string out;
  double voxel_size = 1.0;
  std::size_t padding = 2;
};

struct SubsampleArgs {
  std::string tck;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  std::string out;
};

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

int cmd_phantom(const PhantomArgs& a) {
  PhantomSpec spec;
  if (a.spec.empty()) {
    spec = PhantomSpec::standard();
  } else {
    try {
      spec = parse_phantom_spec(io::read_file(a.spec));
    } catch (const FormatError& e) {
      throw UsageError(a.spec + ": " + e.what());
    }
  }
  if (a.seed) spec.seed = *a.seed;
  if (a.total) {
    std::size_t bundles = 0;
    for (const auto& b : spec.bundles) bundles += b.count;
    if (*a.total <= bundles) throw UsageError("--total must exceed the bundle streamline count");
    spec.background = *a.total - bundles;
  }
  Phantom ph;
  try {
    ph = generate(spec);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("invalid phantom spec: ") + e.what());
  }
  const fs::path out(a.out_dir);
  fs::create_directories(out);
  io::write_tck(ph.tractogram, out / "phantom.tck");
  for (const auto& b : ph.bundles) io::write_labels(b.labels, out / (b.name + ".labels"));
  if (a.write_spec || a.spec.empty()) io::write_file(out / "phantom.cfg", format_phantom_spec(spec));
  std::fprintf(stderr, "streamlines=%zu bundles=%zu seed=%llu out=%s\n", ph.tractogram.size(), ph.bundles.size(),
               static_cast<unsigned long long>(spec.seed), out.string().c_str());
  return 0;
}

int cmd_simulate(const SimulateArgs& a) {
  SessionConfig cfg;
  if (!a.config.empty()) {
    try {
      cfg = parse_session_config(io::read_file(a.config));
    } catch (const Error& e) {
      throw UsageError(a.config + ": " + e.what());
    }
  }
  if (a.iterations) cfg.max_iterations = *a.iterations;
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  std::vector<QueryStrategy> strategies;
  if (a.strategy == "both") strategies = {QueryStrategy::entropy, QueryStrategy::random};
  else strategies = {parse_strategy(a.strategy)};

  Tractogram t = io::read_tck(a.tck);
  const VoxelGrid grid = default_grid(t);
  auto data = Dataset::create(stem(a.tck), std::move(t), cfg.points_per_streamline);

  const fs::path out(a.out_dir);
  fs::create_directories(out);
  std::vector<LearningCurve> curves;
  for (const auto& label_path : a.labels) {
    const LabelFile reference = io::read_labels(label_path);
    const std::string tag = stem(label_path);
    std::vector<LearningCurve> bundle_curves;
    for (auto strategy : strategies) {
      for (std::size_t k = 0; k < a.seeds; ++k) {
        const std::uint64_t seed = a.seed + k;
        auto result = run_simulation_curve(data, reference, cfg, strategy, seed, grid, [&](const CurveRecord& r) {
          std::fprintf(stderr, "bundle=%s strategy=%s seed=%llu iteration=%zu labeled=%zu dice=%.6f tract=%zu\n",
                       tag.c_str(), to_string(strategy), static_cast<unsigned long long>(seed), r.iteration,
                       r.labeled, r.dice, r.tract_size);
        });
        result.curve.tag = tag;
        if (!a.no_runs) {
          const fs::path run = out / "runs" / (tag + "_" + to_string(strategy) + "_seed" + std::to_string(seed));
          fs::create_directories(run);
          io::write_tck(data->tractogram.subset(result.final_tract), run / "tract.tck");
          io::write_mask(result.final_mask, run / "mask.bin");
          io::write_file(run / "journal.txt", result.journal);
        }
        bundle_curves.push_back(result.curve);
        curves.push_back(std::move(result.curve));
      }
    }
    const auto rows = benchmark_report(bundle_curves);
    io::write_file(out / (tag + "_report.csv"), report_csv(rows));
  }
  const fs::path csv = a.out_csv.empty() ? out / "curves.csv" : fs::path(a.out_csv);
  io::write_file(csv, curves_csv(curves));
  io::write_file(out / "report.csv", report_csv(benchmark_report(curves)));
  std::fprintf(stderr, "curves=%zu csv=%s\n", curves.size(), csv.string().c_str());
  return 0;
}

int cmd_serve(const ServeArgs& a) {
  if (!fs::is_directory(a.data_dir)) throw UsageError("data directory does not exist: " + a.data_dir);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  SessionService service({a.data_dir, a.preview_limit});
  int port = 0;
  try {
    port = service.bind(a.host, a.port);
  } catch (const IoError& e) {
    throw UsageError(e.what());
  }
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    service.stop();
  });
  std::fprintf(stderr, "listening host=%s port=%d data_dir=%s\n", a.host.c_str(), port, a.data_dir.c_str());
  std::fflush(stderr);
  service.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  std::fprintf(stderr, "stopped port=%d\n", port);
  return 0;
}

int cmd_replay(const ReplayArgs& a) {
  Journal journal;
  try {
    journal = Journal::parse(io::read_file(a.journal));
  } catch (const FormatError& e) {
    throw UsageError(a.journal + ": " + e.what());
  }
  Tractogram t = io::read_tck(a.tck);
  auto data = Dataset::create(stem(a.tck), std::move(t), SessionConfig{}.points_per_streamline);
  const ReplayResult result = replay(journal, data);
  if (!a.out_tck.empty()) io::write_tck(data->tractogram.subset(result.tract), a.out_tck);
  if (!a.out_ids.empty()) {
    std::string ids;
    for (auto id : result.tract) ids += std::to_string(id) + "\n";
    io::write_file(a.out_ids, ids);
  }
  std::printf("iterations=%zu tract=%zu finalized=%s matches=%s\n", result.iterations, result.tract.size(),
              result.finalized_in_journal ? "true" : "false", result.matches ? "true" : "false");
  if (!result.matches) {
    std::fprintf(stderr, "replay diverged: %s\n", result.mismatch.c_str());
    return 1;
  }
  return 0;
}

int cmd_voxelize(const VoxelizeArgs& a) {
  const Tractogram t = io::read_tck(a.tck);
  std::vector<std::size_t> ids;
  if (a.labels.empty()) {
    ids.resize(t.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  } else {
    ids = positive_ids(io::read_labels(a.labels));
  }
  const VoxelMask mask = voxelize(ids, t, default_grid(t, a.voxel_size, a.padding));
  io::write_mask(mask, a.out);
  std::fprintf(stderr, "streamlines=%zu voxels=%zu\n", ids.size(), mask.count());
  return 0;
}

int cmd_subsample(const SubsampleArgs& a) {
  const Tractogram t = io::read_tck(a.tck);
  if (a.count == 0 || a.count > t.size())
    throw UsageError("--count must be between 1 and " + std::to_string(t.size()));
  const auto ids = random_subsample(t, a.count, a.seed);
  io::write_tck(t.subset(ids), a.out);
  std::fprintf(stderr, "streamlines=%zu of=%zu\n", ids.size(), t.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive and simulated active-learning tract segmentation"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all cores)");

  PhantomArgs pa;
  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic phantom tractogram with bundle labels");
  phantom->add_option("--spec", pa.spec, "Phantom spec file (default: built-in standard phantom)")
      ->check(CLI::ExistingFile);
  phantom->add_option("--out", pa.out_dir, "Output directory")->required();
  phantom->add_option("--seed", pa.seed, "Override the spec seed");
  phantom->add_option("--total", pa.total, "Total streamline count (changes the background count)");
  phantom->add_flag("--write-spec", pa.write_spec, "Also write the effective spec to phantom.cfg");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Run simulated active-learning sessions against reference labels");
  simulate->add_option("--tck", sa.tck, "Tractogram")->required()->check(CLI::ExistingFile);
  simulate->add_option("--labels", sa.labels, "Reference label file(s), one simulation set per file")
      ->required()
      ->check(CLI::ExistingFile);
  simulate->add_option("--config", sa.config, "Session config file")->check(CLI::ExistingFile);
  simulate->add_option("--strategy", sa.strategy, "entropy, random or both")
      ->check(CLI::IsMember({"entropy", "random", "both"}));
  simulate->add_option("--seeds", sa.seeds, "Seeds per strategy")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sa.seed, "First seed; run k uses seed + k");
  simulate->add_option("--iterations", sa.iterations, "Query iterations (overrides the config)");
  simulate->add_option("--out-dir", sa.out_dir, "Directory for reports and per-run outputs");
  simulate->add_option("--out-csv", sa.out_csv, "Learning-curve CSV (default: <out-dir>/curves.csv)");
  simulate->add_flag("--no-runs", sa.no_runs, "Skip writing per-run tract, mask and journal");

  ServeArgs va;
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--host", va.host, "Listen address");
  serve->add_option("--port", va.port, "Listen port (0 picks a free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--data-dir", va.data_dir, "Directory with .tck datasets");
  serve->add_option("--preview-limit", va.preview_limit, "Maximum preview polylines per response");

  ReplayArgs ra;
  auto* replay_cmd = app.add_subcommand("replay", "Re-run a session journal and check it reproduces");
  replay_cmd->add_option("--journal", ra.journal, "Journal file")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--tck", ra.tck, "Tractogram the journal was recorded on")
      ->required()
      ->check(CLI::ExistingFile);
  replay_cmd->add_option("--out-tck", ra.out_tck, "Write the replayed tract");
  replay_cmd->add_option("--out-ids", ra.out_ids, "Write the replayed tract ids, one per line");

  VoxelizeArgs xa;
  auto* voxelize_cmd = app.add_subcommand("voxelize", "Write the binary mask of a tractogram or labeled subset");
  voxelize_cmd->add_option("--tck", xa.tck, "Tractogram")->required()->check(CLI::ExistingFile);
  voxelize_cmd->add_option("--labels", xa.labels, "Use only positives of this label file")->check(CLI::ExistingFile);
  voxelize_cmd->add_option("--out", xa.out, "Mask output path")->required();
  voxelize_cmd->add_option("--voxel-size", xa.voxel_size, "Voxel edge length in mm")->check(CLI::PositiveNumber);
  voxelize_cmd->add_option("--padding", xa.padding, "Padding voxels around the bounding box");

  SubsampleArgs ua;
  auto* subsample = app.add_subcommand("subsample", "Write a uniform random subset of a tractogram");
  subsample->add_option("--tck", ua.tck, "Tractogram")->required()->check(CLI::ExistingFile);
  subsample->add_option("--count", ua.count, "Streamlines to keep")->required();
  subsample->add_option("--seed", ua.seed, "Sampling seed");
  subsample->add_option("--out", ua.out, "Output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  set_thread_count(threads);
  try {
    if (*phantom) return cmd_phantom(pa);
    if (*simulate) return cmd_simulate(sa);
    if (*serve) return cmd_serve(va);
    if (*replay_cmd) return cmd_replay(ra);
    if (*voxelize_cmd) return cmd_voxelize(xa);
    if (*subsample) return cmd_subsample(ua);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
