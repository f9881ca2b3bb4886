#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tractloop/features.hpp"
#include "tractloop/forest.hpp"
#include "tractloop/geometry.hpp"
#include "tractloop/label.hpp"

namespace tractloop {

enum class QueryStrategy { entropy, random };
const char* to_string(QueryStrategy s);
QueryStrategy parse_strategy(std::string_view name);

struct SessionConfig {
  std::size_t points_per_streamline = 40;
  std::size_t initial_prototypes = 100;
  std::size_t adaptive_prototype_cap = 100;
  std::size_t init_random_count = 20;
  std::size_t init_positive_seed_count = 2;
  std::size_t queries_per_iteration = 10;
  std::size_t max_iterations = 20;
  QueryStrategy strategy = QueryStrategy::entropy;
  forest::ForestParams forest;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument if a count that must be positive is zero.
  void validate() const;

  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

/// Tractogram plus its per-session resampling, shared read-only between sessions.
struct Dataset {
  std::string name;
  Tractogram tractogram;
  ResampledCache resampled;

  static std::shared_ptr<const Dataset> create(std::string name, Tractogram t, std::size_t m);
};

/// Binary entropy in nats, 0 ln 0 := 0. Throws InvalidArgument outside [0,1].
double entropy(double p);

/// The k pool entries with the highest score, ties broken by lower id.
/// `scores` is indexed by id; ids not in `pool` are ignored.
std::vector<std::size_t> top_k(std::span<const double> scores, std::span<const std::size_t> pool,
                               std::size_t k);

class Annotator {
 public:
  virtual ~Annotator() = default;
  virtual std::vector<Label> annotate(std::span<const std::size_t> ids) = 0;
};

/// Replays reference labels; ids missing from the reference are negatives.
class OracleAnnotator final : public Annotator {
 public:
  OracleAnnotator(std::span<const Label> reference, std::size_t streamline_count);
  std::vector<Label> annotate(std::span<const std::size_t> ids) override;
  bool positive(std::size_t id) const { return id < truth_.size() && truth_[id] != 0; }

 private:
  std::vector<std::uint8_t> truth_;
};

enum class SessionStatus { awaiting_labels, ready, finalized };
const char* to_string(SessionStatus s);

struct SubmitOutcome {
  bool trained = false;
  std::string notice;  // "need both classes" when training was skipped
};

class Journal;

/// One active-learning session: labeled set, prototypes, features, model,
/// candidates. Methods are not thread-safe; callers serialize access.
class Session {
 public:
  /// Simulation mode: init_random_count uniform-random ids labeled by the
  /// oracle plus init_positive_seed_count random reference positives.
  static Session simulation(std::shared_ptr<const Dataset> data, std::span<const Label> reference,
                            const SessionConfig& cfg);

  /// Simulation mode with an explicit initial labeled set (journal replay).
  static Session with_initial_labels(std::shared_ptr<const Dataset> data, std::vector<Label> initial,
                                     const SessionConfig& cfg);

  /// Interactive mode: the initial batch is sampled from ROI-passing streamlines.
  static Session interactive(std::shared_ptr<const Dataset> data, const RoiSphere& roi,
                             const SessionConfig& cfg);

  Session(Session&&) noexcept;
  Session& operator=(Session&&) noexcept;
  ~Session();

  /// Merges labels for exactly the outstanding candidates, then trains.
  SubmitOutcome submit_labels(std::span<const Label> labels);

  /// Appends pending adaptive prototypes, retrains, predicts, scores entropy
  /// and selects the next query batch.
  void step();

  /// Draws a fresh initial batch (interactive mode, before the first round).
  void resample_initial(const std::optional<RoiSphere>& roi = std::nullopt);

  /// Positive set: predicted positives among unlabeled plus labeled positives.
  std::vector<std::size_t> current_tract() const;
  std::vector<std::size_t> finalize();

  /// Ids the model alone predicts positive, labels ignored.
  std::vector<std::size_t> raw_prediction() const;

  SessionStatus status() const noexcept;
  std::size_t iteration() const noexcept;
  std::size_t rounds_completed() const noexcept;
  bool interactive_mode() const noexcept;
  const SessionConfig& config() const noexcept;
  const Dataset& dataset() const noexcept;
  std::span<const std::size_t> candidates() const noexcept;
  std::span<const Label> labeled() const noexcept;
  std::size_t labeled_count(bool positive) const noexcept;
  bool is_labeled(std::size_t id) const;
  const PrototypeSet& prototypes() const noexcept;
  const FeatureMatrix& features() const noexcept;
  const forest::Prediction& prediction() const noexcept;
  std::span<const double> entropies() const noexcept;
  const std::optional<RoiSphere>& roi() const noexcept;
  const std::string& notice() const noexcept;
  const Journal& journal() const noexcept;

 private:
  struct State;
  explicit Session(std::unique_ptr<State> state);
  std::unique_ptr<State> s_;
};

/// Drives a simulation session: trains on the initial labels, then labels each
/// query batch with the annotator until `iterations` batches were incorporated.
/// `on_round` is called after every training round (iteration 0 included).
void run_simulation(Session& session, Annotator& annotator, std::size_t iterations,
                    const std::function<void(const Session&)>& on_round = {});

}  // namespace tractloop
