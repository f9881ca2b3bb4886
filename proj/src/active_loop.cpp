#include "tractloop/active_loop.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "tractloop/config.hpp"
#include "tractloop/error.hpp"
#include "tractloop/journal.hpp"
#include "tractloop/rng.hpp"

namespace tractloop {

using nlohmann::json;

namespace {

// Seed streams derived from the master seed.
enum SeedStream : std::uint64_t {
  kPrototypeStream = 1,
  kInitialDrawStream = 2,
  kPositiveSeedStream = 3,
  kForestStream = 4,
  kRandomQueryStream = 5,
};

std::uint64_t stream_seed(std::uint64_t master, SeedStream stream, std::uint64_t index = 0) {
  return derive_seed(derive_seed(master, stream), index);
}

json labels_json(std::span<const Label> labels) {
  json arr = json::array();
  for (const auto& l : labels) arr.push_back({l.streamline_id, l.positive ? 1 : 0});
  return arr;
}

json roi_json(const RoiSphere& roi) {
  return {{"center", {roi.center.x, roi.center.y, roi.center.z}}, {"radius", roi.radius}};
}

json config_json(const SessionConfig& cfg) {
  json obj = json::object();
  for (const auto& [k, v] : session_config_entries(cfg)) obj[k] = v;
  return obj;
}

}  // namespace

const char* to_string(QueryStrategy s) { return s == QueryStrategy::entropy ? "entropy" : "random"; }

QueryStrategy parse_strategy(std::string_view name) {
  if (name == "entropy") return QueryStrategy::entropy;
  if (name == "random") return QueryStrategy::random;
  throw InvalidArgument("unknown strategy \"" + std::string(name) + "\" (expected entropy or random)");
}

const char* to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::awaiting_labels: return "awaiting_labels";
    case SessionStatus::ready: return "ready";
    case SessionStatus::finalized: return "finalized";
  }
  return "unknown";
}

void SessionConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw InvalidArgument(std::string(name) + " must be positive");
  };
  if (points_per_streamline < 2) throw InvalidArgument("points_per_streamline must be at least 2");
  positive(initial_prototypes, "initial_prototypes");
  positive(init_random_count, "init_random_count");
  positive(queries_per_iteration, "queries_per_iteration");
  positive(max_iterations, "max_iterations");
  positive(forest.trees, "forest.trees");
  positive(forest.min_samples_leaf, "forest.min_samples_leaf");
}

std::shared_ptr<const Dataset> Dataset::create(std::string name, Tractogram t, std::size_t m) {
  auto d = std::make_shared<Dataset>();
  d->name = std::move(name);
  d->tractogram = std::move(t);
  d->resampled = ResampledCache(d->tractogram, m);
  return d;
}

double entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("entropy: probability outside [0,1]");
  auto term = [](double q) { return q > 0.0 ? q * std::log(q) : 0.0; };
  return -(term(p) + term(1.0 - p));
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::size_t> pool, std::size_t k) {
  std::vector<std::size_t> ids(pool.begin(), pool.end());
  k = std::min(k, ids.size());
  auto before = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), before);
  ids.resize(k);
  return ids;
}

OracleAnnotator::OracleAnnotator(std::span<const Label> reference, std::size_t streamline_count)
    : truth_(streamline_count, 0) {
  for (const auto& l : reference) {
    if (l.streamline_id >= streamline_count)
      throw InvalidArgument("reference label for streamline " + std::to_string(l.streamline_id) +
                            " outside the tractogram");
    truth_[l.streamline_id] = l.positive ? 1 : 0;
  }
}

std::vector<Label> OracleAnnotator::annotate(std::span<const std::size_t> ids) {
  std::vector<Label> out;
  out.reserve(ids.size());
  for (auto id : ids) out.push_back({id, positive(id)});
  return out;
}

// ---------------------------------------------------------------- session

struct Session::State {
  std::shared_ptr<const Dataset> data;
  SessionConfig cfg;
  bool interactive = false;
  std::optional<RoiSphere> roi;

  PrototypeSet prototypes;
  FeatureMatrix features;
  bool features_ready = false;

  std::vector<std::int8_t> label_of;  // -1 unlabeled, else 0/1
  std::vector<Label> labeled;
  std::size_t positives = 0;

  std::vector<std::size_t> candidates;
  bool candidates_are_queries = false;
  std::vector<std::size_t> pending_prototypes;

  forest::Prediction prediction;
  std::vector<double> entropies;

  std::size_t iteration = 0;
  std::size_t rounds = 0;
  std::size_t resamples = 0;
  SessionStatus status = SessionStatus::ready;
  std::string notice;
  Journal journal;

  std::size_t size() const { return data->tractogram.size(); }

  void merge(const Label& l) {
    label_of[l.streamline_id] = l.positive ? 1 : 0;
    labeled.push_back(l);
    positives += l.positive ? 1 : 0;
  }

  bool single_class() const { return positives == 0 || positives == labeled.size(); }

  void write_header() {
    json h = {{"event", "session"},
              {"version", 1},
              {"mode", interactive ? "interactive" : "simulation"},
              {"dataset", data->name},
              {"streamlines", size()},
              {"config", config_json(cfg)}};
    if (roi) h["roi"] = roi_json(*roi);
    journal.append(h.dump());
  }

  void draw_initial_batch() {
    std::vector<std::size_t> pool;
    for (auto id : streamlines_through(data->tractogram, *roi))
      if (label_of[id] < 0) pool.push_back(id);
    if (pool.size() < cfg.init_random_count) throw TooFewRoiStreamlines(pool.size(), cfg.init_random_count);
    Rng rng(stream_seed(cfg.seed, kInitialDrawStream, resamples));
    candidates.clear();
    for (auto i : sample_without_replacement(pool.size(), cfg.init_random_count, rng)) candidates.push_back(pool[i]);
    candidates_are_queries = false;
    status = SessionStatus::awaiting_labels;
  }
};

Session::Session(std::unique_ptr<State> state) : s_(std::move(state)) {}
Session::Session(Session&&) noexcept = default;
Session& Session::operator=(Session&&) noexcept = default;
Session::~Session() = default;

Session Session::with_initial_labels(std::shared_ptr<const Dataset> data, std::vector<Label> initial,
                                     const SessionConfig& cfg) {
  cfg.validate();
  if (data->resampled.points_per_streamline() != cfg.points_per_streamline)
    throw InvalidArgument("dataset was resampled with a different point count than the session config");
  auto st = std::make_unique<State>();
  st->data = std::move(data);
  st->cfg = cfg;
  st->label_of.assign(st->size(), -1);
  for (const auto& l : initial) {
    if (l.streamline_id >= st->size())
      throw InvalidArgument("initial label for streamline " + std::to_string(l.streamline_id) + " out of range");
    if (st->label_of[l.streamline_id] >= 0)
      throw InvalidArgument("duplicate initial label for streamline " + std::to_string(l.streamline_id));
    st->merge(l);
  }
  forest::require_both_classes(st->labeled);
  st->status = SessionStatus::ready;
  st->write_header();
  st->journal.append(json{{"event", "initial_labels"}, {"labels", labels_json(st->labeled)}}.dump());
  return Session(std::move(st));
}

Session Session::simulation(std::shared_ptr<const Dataset> data, std::span<const Label> reference,
                            const SessionConfig& cfg) {
  cfg.validate();
  const std::size_t n = data->tractogram.size();
  OracleAnnotator oracle(reference, n);
  if (cfg.init_random_count > n)
    throw InvalidArgument("tractogram has fewer streamlines than init_random_count");

  std::vector<std::size_t> initial = random_subsample(n, cfg.init_random_count, stream_seed(cfg.seed, kInitialDrawStream));
  std::vector<std::uint8_t> taken(n, 0);
  for (auto id : initial) taken[id] = 1;

  if (cfg.init_positive_seed_count > 0) {
    std::vector<std::size_t> positives;
    for (std::size_t id = 0; id < n; ++id)
      if (oracle.positive(id) && !taken[id]) positives.push_back(id);
    if (positives.size() < cfg.init_positive_seed_count)
      throw InvalidArgument("reference holds " + std::to_string(positives.size()) +
                            " available positives, init_positive_seed_count is " +
                            std::to_string(cfg.init_positive_seed_count));
    Rng rng(stream_seed(cfg.seed, kPositiveSeedStream));
    for (auto i : sample_without_replacement(positives.size(), cfg.init_positive_seed_count, rng))
      initial.push_back(positives[i]);
  }
  return with_initial_labels(std::move(data), oracle.annotate(initial), cfg);
}

Session Session::interactive(std::shared_ptr<const Dataset> data, const RoiSphere& roi, const SessionConfig& cfg) {
  cfg.validate();
  if (!(roi.radius > 0.0)) throw InvalidArgument("ROI radius must be positive");
  if (data->resampled.points_per_streamline() != cfg.points_per_streamline)
    throw InvalidArgument("dataset was resampled with a different point count than the session config");
  auto st = std::make_unique<State>();
  st->data = std::move(data);
  st->cfg = cfg;
  st->interactive = true;
  st->roi = roi;
  st->label_of.assign(st->size(), -1);
  st->draw_initial_batch();
  st->write_header();
  st->journal.append(json{{"event", "candidates"}, {"round", 0}, {"ids", st->candidates}}.dump());
  return Session(std::move(st));
}

void Session::resample_initial(const std::optional<RoiSphere>& roi) {
  if (!s_->interactive) throw StateError("resample is only available in interactive sessions");
  if (s_->rounds > 0 || s_->status != SessionStatus::awaiting_labels)
    throw StateError("the initial batch can only be redrawn before the first training round");
  if (roi) {
    if (!(roi->radius > 0.0)) throw InvalidArgument("ROI radius must be positive");
    s_->roi = *roi;
  }
  ++s_->resamples;
  s_->draw_initial_batch();
  s_->notice.clear();
  s_->journal.append(
      json{{"event", "resample"}, {"roi", roi_json(*s_->roi)}, {"ids", s_->candidates}}.dump());
}

SubmitOutcome Session::submit_labels(std::span<const Label> labels) {
  State& s = *s_;
  if (s.status != SessionStatus::awaiting_labels || s.candidates.empty())
    throw StateError(std::string("session is ") + to_string(s.status) + " with no outstanding candidates");

  std::vector<std::int8_t> given(s.candidates.size(), -1);
  std::vector<std::size_t> missing;
  std::vector<std::size_t> unexpected;
  std::vector<std::size_t> duplicated;
  for (const auto& l : labels) {
    const auto it = std::find(s.candidates.begin(), s.candidates.end(), l.streamline_id);
    if (it == s.candidates.end()) {
      unexpected.push_back(l.streamline_id);
      continue;
    }
    auto& slot = given[static_cast<std::size_t>(it - s.candidates.begin())];
    if (slot >= 0) duplicated.push_back(l.streamline_id);
    slot = l.positive ? 1 : 0;
  }
  for (std::size_t i = 0; i < s.candidates.size(); ++i)
    if (given[i] < 0) missing.push_back(s.candidates[i]);
  if (!missing.empty() || !unexpected.empty() || !duplicated.empty())
    throw LabelMismatch(std::move(missing), std::move(unexpected), std::move(duplicated));

  std::vector<Label> batch;
  batch.reserve(s.candidates.size());
  for (std::size_t i = 0; i < s.candidates.size(); ++i) batch.push_back({s.candidates[i], given[i] == 1});
  for (const auto& l : batch) s.merge(l);
  s.journal.append(json{{"event", "labels"}, {"labels", labels_json(batch)}}.dump());

  if (s.candidates_are_queries) s.pending_prototypes = s.candidates;
  s.candidates.clear();

  if (s.single_class()) {
    s.notice = NeedBothClasses().what();
    s.status = SessionStatus::awaiting_labels;
    return {false, s.notice};
  }
  ++s.iteration;
  step();
  return {true, {}};
}

void Session::step() {
  State& s = *s_;
  if (s.status == SessionStatus::finalized) throw StateError("session is finalized");
  forest::require_both_classes(s.labeled);
  const auto& cache = s.data->resampled;
  const std::size_t n = s.size();

  if (!s.features_ready) {
    s.prototypes = select_prototypes(cache, s.cfg.initial_prototypes, stream_seed(s.cfg.seed, kPrototypeStream),
                                     s.cfg.adaptive_prototype_cap);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    s.features = compute_features(all, cache, s.prototypes);
    s.features_ready = true;
  }
  if (!s.pending_prototypes.empty()) {
    const auto added = s.prototypes.add_adaptive(s.pending_prototypes, cache);
    append_prototype_columns(s.features, added, cache);
    s.pending_prototypes.clear();
  }

  std::vector<Label> training(s.labeled);
  std::sort(training.begin(), training.end(),
            [](const Label& a, const Label& b) { return a.streamline_id < b.streamline_id; });
  std::vector<std::size_t> rows;
  rows.reserve(training.size());
  for (const auto& l : training) rows.push_back(l.streamline_id);
  const auto model = forest::ForestModel::fit(s.features.gather_rows(rows), training, s.cfg.forest,
                                              stream_seed(s.cfg.seed, kForestStream, s.rounds));
  s.prediction = model.predict_proba(s.features);

  s.entropies.assign(n, -1.0);
  std::vector<std::size_t> pool;
  pool.reserve(n - s.labeled.size());
  for (std::size_t id = 0; id < n; ++id) {
    if (s.label_of[id] >= 0) continue;
    s.entropies[id] = entropy(s.prediction.probability[id]);
    pool.push_back(id);
  }

  const std::size_t k = std::min(s.cfg.queries_per_iteration, pool.size());
  if (s.cfg.strategy == QueryStrategy::entropy) {
    s.candidates = top_k(s.entropies, pool, k);
  } else {
    Rng rng(stream_seed(s.cfg.seed, kRandomQueryStream, s.rounds));
    s.candidates.clear();
    for (auto i : sample_without_replacement(pool.size(), k, rng)) s.candidates.push_back(pool[i]);
  }
  s.candidates_are_queries = true;
  ++s.rounds;
  s.notice.clear();
  s.status = s.candidates.empty() ? SessionStatus::ready : SessionStatus::awaiting_labels;
  s.journal.append(json{{"event", "candidates"}, {"round", s.rounds}, {"ids", s.candidates}}.dump());
}

std::vector<std::size_t> Session::current_tract() const {
  if (s_->rounds == 0) throw StateError("no training round has completed");
  std::vector<std::size_t> tract;
  for (std::size_t id = 0; id < s_->size(); ++id) {
    const auto l = s_->label_of[id];
    if (l == 1 || (l < 0 && s_->prediction.positive(id))) tract.push_back(id);
  }
  return tract;
}

std::vector<std::size_t> Session::raw_prediction() const {
  if (s_->rounds == 0) throw StateError("no training round has completed");
  std::vector<std::size_t> ids;
  for (std::size_t id = 0; id < s_->size(); ++id)
    if (s_->prediction.positive(id)) ids.push_back(id);
  return ids;
}

std::vector<std::size_t> Session::finalize() {
  if (s_->rounds == 0) throw StateError("cannot finalize before the first training round");
  auto tract = current_tract();
  if (s_->status != SessionStatus::finalized) {
    s_->status = SessionStatus::finalized;
    s_->candidates.clear();
    s_->journal.append(json{{"event", "final"}, {"tract", tract}}.dump());
  }
  return tract;
}

SessionStatus Session::status() const noexcept { return s_->status; }
std::size_t Session::iteration() const noexcept { return s_->iteration; }
std::size_t Session::rounds_completed() const noexcept { return s_->rounds; }
bool Session::interactive_mode() const noexcept { return s_->interactive; }
const SessionConfig& Session::config() const noexcept { return s_->cfg; }
const Dataset& Session::dataset() const noexcept { return *s_->data; }
std::span<const std::size_t> Session::candidates() const noexcept { return s_->candidates; }
std::span<const Label> Session::labeled() const noexcept { return s_->labeled; }
std::size_t Session::labeled_count(bool positive) const noexcept {
  return positive ? s_->positives : s_->labeled.size() - s_->positives;
}
bool Session::is_labeled(std::size_t id) const { return id < s_->label_of.size() && s_->label_of[id] >= 0; }
const PrototypeSet& Session::prototypes() const noexcept { return s_->prototypes; }
const FeatureMatrix& Session::features() const noexcept { return s_->features; }
const forest::Prediction& Session::prediction() const noexcept { return s_->prediction; }
std::span<const double> Session::entropies() const noexcept { return s_->entropies; }
const std::optional<RoiSphere>& Session::roi() const noexcept { return s_->roi; }
const std::string& Session::notice() const noexcept { return s_->notice; }
const Journal& Session::journal() const noexcept { return s_->journal; }

void run_simulation(Session& session, Annotator& annotator, std::size_t iterations,
                    const std::function<void(const Session&)>& on_round) {
  if (session.rounds_completed() == 0) {
    session.step();
    if (on_round) on_round(session);
  }
  while (session.iteration() < iterations && !session.candidates().empty()) {
    const std::vector<std::size_t> batch(session.candidates().begin(), session.candidates().end());
    const auto labels = annotator.annotate(batch);
    session.submit_labels(labels);
    if (on_round) on_round(session);
  }
}

}  // namespace tractloop
