#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "phantom_fixture.hpp"
#include "support.hpp"
#include "tractloop/active_loop.hpp"
#include "tractloop/error.hpp"
#include "tractloop/journal.hpp"

using namespace tractloop;

namespace {

std::vector<std::size_t> sort_oracle(std::span<const double> scores, std::span<const std::size_t> pool, std::size_t k) {
  std::vector<std::size_t> ids(pool.begin(), pool.end());
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  ids.resize(std::min(k, ids.size()));
  return ids;
}

std::vector<Label> truth_for(std::span<const std::size_t> ids, const LabelFile& reference) {
  OracleAnnotator oracle(reference, reference.size());
  return oracle.annotate(ids);
}

}  // namespace

TEST_CASE("entropy values") {
  CHECK(entropy(0.5) == doctest::Approx(std::numbers::ln2).epsilon(1e-15));
  CHECK(entropy(0.0) == 0.0);
  CHECK(entropy(1.0) == 0.0);
  CHECK(entropy(0.9) == doctest::Approx(0.3251).epsilon(5e-5));
  CHECK(entropy(0.9) == doctest::Approx(-(0.9 * std::log(0.9) + 0.1 * std::log(0.1))).epsilon(1e-15));
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double p = rng.uniform();
    CHECK(entropy(p) == doctest::Approx(entropy(1.0 - p)).epsilon(1e-12));
    CHECK(entropy(p) <= entropy(0.5));
    CHECK(entropy(p) >= 0.0);
  }
  CHECK(entropy(1e-300) > 0.0);
  CHECK_THROWS_AS(entropy(-0.01), InvalidArgument);
  CHECK_THROWS_AS(entropy(1.01), InvalidArgument);
  CHECK_THROWS_AS(entropy(std::nan("")), InvalidArgument);
}

TEST_CASE("top_k equals the full-sort oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(3000);
    std::vector<double> scores(n);
    // coarse values force many ties
    for (auto& s : scores) s = trial % 2 ? std::floor(rng.uniform() * 8) / 8 : rng.uniform();
    std::vector<std::size_t> pool;
    for (std::size_t id = 0; id < n; ++id)
      if (rng.below(4) != 0) pool.push_back(id);
    const std::size_t k = rng.below(40);
    CHECK(top_k(scores, pool, k) == sort_oracle(scores, pool, k));
  }
  const std::vector<double> scores{0.1, 0.9, 0.9, 0.5};
  const std::vector<std::size_t> pool{0, 2, 3};
  CHECK(top_k(scores, pool, 2) == std::vector<std::size_t>{2, 3});
  CHECK(top_k(scores, pool, 10).size() == 3);
}

TEST_CASE("simulation bookkeeping with defaults") {
  const auto& ph = support::SmallPhantom::get();
  SessionConfig cfg;
  cfg.seed = 4;
  Session s = Session::simulation(ph.data, ph.labels(1), cfg);
  CHECK(s.labeled().size() == 22);
  CHECK(s.labeled_count(true) >= 2);
  CHECK(s.status() == SessionStatus::ready);
  CHECK(s.iteration() == 0);

  OracleAnnotator oracle(ph.labels(1), ph.data->tractogram.size());
  std::set<std::size_t> queried;
  std::set<std::size_t> initial;
  for (const auto& l : s.labeled()) initial.insert(l.streamline_id);
  std::vector<std::size_t> query_order;
  std::vector<std::size_t> sizes;
  bool disjoint = true, unlabeled = true, oracle_match = true;
  run_simulation(s, oracle, 20, [&](const Session& st) {
    sizes.push_back(st.labeled().size());
    CHECK(st.labeled().size() == 22 + 10 * st.iteration());
    // candidates are the top of the unlabeled entropy ranking
    std::vector<std::size_t> pool;
    for (std::size_t id = 0; id < ph.data->tractogram.size(); ++id)
      if (!st.is_labeled(id)) pool.push_back(id);
    oracle_match &= std::vector<std::size_t>(st.candidates().begin(), st.candidates().end()) ==
                    sort_oracle(st.entropies(), pool, 10);
    for (auto id : st.candidates()) {
      disjoint &= queried.insert(id).second;
      unlabeled &= !st.is_labeled(id);
      query_order.push_back(id);
    }
    CHECK(st.prototypes().adaptive().size() == std::min<std::size_t>(10 * st.iteration(), 100));
    if (st.iteration() == 10) {
      CHECK(st.prototypes().adaptive().size() == 100);
      CHECK(st.features().cols() == 400);
    }
  });
  CHECK(oracle_match);
  CHECK(disjoint);
  CHECK(unlabeled);
  CHECK(s.iteration() == 20);
  CHECK(s.labeled().size() == 222);
  REQUIRE(sizes.size() == 21);
  for (std::size_t k = 0; k < sizes.size(); ++k) CHECK(sizes[k] == 22 + 10 * k);
  CHECK(s.prototypes().size() == 200);
  CHECK(s.prototypes().initial().size() == 100);
  CHECK(s.features().cols() == 400);
  CHECK(s.features().rows() == ph.data->tractogram.size());

  // adaptive prototypes are the first hundred queried ids, in order; the initial batch never is one
  const auto adaptive = s.prototypes().adaptive();
  for (std::size_t i = 0; i < adaptive.size(); ++i) CHECK(adaptive[i].streamline_id == query_order[i]);
  for (const auto& p : adaptive) CHECK(initial.count(p.streamline_id) == 0);
}

TEST_CASE("prototype streamlines are classified too") {
  const auto& ph = support::SmallPhantom::get();
  SessionConfig cfg;
  Session s = Session::simulation(ph.data, ph.labels(0), cfg);
  s.step();
  CHECK(s.prediction().size() == ph.data->tractogram.size());
  const auto& proto = s.prototypes().initial()[0];
  CHECK(s.features()(proto.streamline_id, 0) == 0.0f);
}

TEST_CASE("sessions replay identically") {
  const auto& ph = support::SmallPhantom::get();
  SessionConfig cfg;
  cfg.seed = 12;
  cfg.max_iterations = 6;
  auto run = [&] {
    Session s = Session::simulation(ph.data, ph.labels(2), cfg);
    OracleAnnotator oracle(ph.labels(2), ph.data->tractogram.size());
    run_simulation(s, oracle, cfg.max_iterations);
    auto probs = s.prediction().probability;
    auto tract = s.finalize();
    return std::make_tuple(s.journal().text(), probs, tract);
  };
  const auto a = run();
  const auto b = run();
  CHECK(std::get<0>(a) == std::get<0>(b));
  CHECK(std::get<1>(a) == std::get<1>(b));
  CHECK(std::get<2>(a) == std::get<2>(b));

  SessionConfig other = cfg;
  other.seed = 13;
  Session s = Session::simulation(ph.data, ph.labels(2), other);
  CHECK(s.journal().text() != std::get<0>(a).substr(0, s.journal().text().size()));
}

TEST_CASE("initialization guards") {
  const auto& ph = support::SmallPhantom::get();
  SessionConfig cfg;
  cfg.init_positive_seed_count = 0;
  // only one positive, which the random draw for this seed misses
  LabelFile lonely;
  for (std::size_t id = 0; id < ph.data->tractogram.size(); ++id) lonely.push_back({id, false});
  lonely[ph.data->tractogram.size() - 1].positive = true;
  cfg.seed = 0;
  bool threw = false;
  try {
    Session::simulation(ph.data, lonely, cfg);
  } catch (const NeedBothClasses& e) {
    threw = std::string(e.what()) == "need both classes";
  }
  CHECK(threw);

  SessionConfig two;
  LabelFile one_positive = lonely;
  CHECK_THROWS_AS(Session::simulation(ph.data, one_positive, two), InvalidArgument);

  SessionConfig zero;
  zero.queries_per_iteration = 0;
  CHECK_THROWS_AS(Session::simulation(ph.data, ph.labels(0), zero), InvalidArgument);

  SessionConfig a, b;
  a.seed = b.seed = 77;
  const Session s1 = Session::simulation(ph.data, ph.labels(0), a);
  const Session s2 = Session::simulation(ph.data, ph.labels(0), b);
  CHECK(std::equal(s1.labeled().begin(), s1.labeled().end(), s2.labeled().begin(), s2.labeled().end(),
                   [](const Label& x, const Label& y) {
                     return x.streamline_id == y.streamline_id && x.positive == y.positive;
                   }));
}

TEST_CASE("interactive initialization from an ROI") {
  const auto& ph = support::SmallPhantom::get();
  const auto& arc = ph.spec.bundles[1];
  const RoiSphere roi{arc.centerline(0.5), arc.tube_radius + arc.jitter};
  SessionConfig cfg;
  cfg.seed = 3;
  Session s = Session::interactive(ph.data, roi, cfg);
  CHECK(s.status() == SessionStatus::awaiting_labels);
  CHECK(s.interactive_mode());
  REQUIRE(s.candidates().size() == 20);
  for (auto id : s.candidates()) CHECK(passes_through(ph.data->tractogram.points(id), roi));
  const Session again = Session::interactive(ph.data, roi, cfg);
  CHECK(std::equal(s.candidates().begin(), s.candidates().end(), again.candidates().begin(), again.candidates().end()));

  try {
    Session::interactive(ph.data, {{-500, -500, -500}, 2.0}, cfg);
    FAIL("expected TooFewRoiStreamlines");
  } catch (const TooFewRoiStreamlines& e) {
    CHECK(e.found() == 0);
    CHECK(e.required() == 20);
    CHECK(std::string(e.what()).find('0') != std::string::npos);
  }
  CHECK_THROWS_AS(s.finalize(), StateError);
  CHECK_THROWS_AS(s.current_tract(), StateError);
}

TEST_CASE("interactive submission") {
  const auto& ph = support::SmallPhantom::get();
  const auto& reference = ph.labels(0);
  const auto& straight = ph.spec.bundles[0];
  SessionConfig cfg;
  cfg.seed = 8;
  Session s = Session::interactive(ph.data, {straight.centerline(0.5), straight.tube_radius + straight.jitter}, cfg);
  const std::vector<std::size_t> batch(s.candidates().begin(), s.candidates().end());
  auto labels = truth_for(batch, reference);

  // partial set
  auto partial = labels;
  partial.pop_back();
  try {
    s.submit_labels(partial);
    FAIL("expected LabelMismatch");
  } catch (const LabelMismatch& e) {
    CHECK(e.missing() == std::vector<std::size_t>{batch.back()});
    CHECK(e.unexpected().empty());
  }
  // foreign id
  auto foreign = labels;
  std::size_t outsider = 0;
  while (std::find(batch.begin(), batch.end(), outsider) != batch.end()) ++outsider;
  foreign.push_back({outsider, false});
  try {
    s.submit_labels(foreign);
    FAIL("expected LabelMismatch");
  } catch (const LabelMismatch& e) {
    CHECK(e.unexpected() == std::vector<std::size_t>{outsider});
  }
  CHECK(s.labeled().empty());

  // ROI candidates on a bundle include negatives from crossing background only rarely;
  // make sure the batch has both classes by flipping one label if needed
  const bool has_pos = std::any_of(labels.begin(), labels.end(), [](const Label& l) { return l.positive; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(), [](const Label& l) { return !l.positive; });
  if (!has_neg) labels.back().positive = false;
  if (!has_pos) labels.front().positive = true;

  const auto outcome = s.submit_labels(labels);
  CHECK(outcome.trained);
  CHECK(s.iteration() == 1);
  CHECK(s.rounds_completed() == 1);
  CHECK(s.labeled().size() == 20);
  CHECK(s.candidates().size() == 10);
  CHECK(s.status() == SessionStatus::awaiting_labels);
  CHECK_THROWS_AS(s.resample_initial(), StateError);
  CHECK_THROWS_AS(s.submit_labels(labels), LabelMismatch);

  // second batch: iteration counter keeps going
  const std::vector<std::size_t> next(s.candidates().begin(), s.candidates().end());
  s.submit_labels(truth_for(next, reference));
  CHECK(s.iteration() == 2);
  CHECK(s.labeled().size() == 30);
  // the initial ROI batch is not a query batch, so only the first query batch became prototypes
  CHECK(s.prototypes().adaptive().size() == 10);
  const std::vector<std::size_t> third(s.candidates().begin(), s.candidates().end());
  s.submit_labels(truth_for(third, reference));
  CHECK(s.prototypes().adaptive().size() == 20);

  const auto tract = s.finalize();
  CHECK(s.status() == SessionStatus::finalized);
  CHECK(s.finalize() == tract);
  CHECK_THROWS_AS(s.step(), StateError);
}

TEST_CASE("single-class batch is kept with a notice") {
  const auto& ph = support::SmallPhantom::get();
  const auto& helix = ph.spec.bundles[2];
  SessionConfig cfg;
  Session s = Session::interactive(ph.data, {helix.centerline(0.5), helix.tube_radius}, cfg);
  const std::vector<std::size_t> batch(s.candidates().begin(), s.candidates().end());
  std::vector<Label> all_negative;
  for (auto id : batch) all_negative.push_back({id, false});
  const auto outcome = s.submit_labels(all_negative);
  CHECK_FALSE(outcome.trained);
  CHECK(outcome.notice == "need both classes");
  CHECK(s.notice() == "need both classes");
  CHECK(s.rounds_completed() == 0);
  CHECK(s.iteration() == 0);
  CHECK(s.labeled().size() == 20);
  CHECK(s.candidates().empty());
  CHECK(s.status() == SessionStatus::awaiting_labels);
  CHECK_THROWS_AS(s.submit_labels(all_negative), StateError);

  s.resample_initial();
  REQUIRE(s.candidates().size() == 20);
  for (auto id : s.candidates()) CHECK_FALSE(s.is_labeled(id));
  CHECK(s.notice().empty());
  std::vector<Label> mixed;
  for (auto id : s.candidates()) mixed.push_back({id, ph.labels(2)[id].positive});
  mixed.front().positive = true;
  CHECK(s.submit_labels(mixed).trained);
  CHECK(s.iteration() == 1);
}

TEST_CASE("final tract honours expert labels") {
  // Two clusters of identical geometry: a lone positive among many copies
  // labeled negative, and a lone negative among many copies labeled positive.
  Tractogram t;
  auto add_line = [&](double y, double z) {
    const std::vector<Vec3> pts{{0, y, z}, {20, y, z}};
    return t.add(std::span<const Vec3>(pts));
  };
  std::vector<Label> initial;
  const std::size_t lone_positive = add_line(0, 0);
  initial.push_back({lone_positive, true});
  for (int i = 0; i < 20; ++i) initial.push_back({add_line(0, 0), false});
  const std::size_t lone_negative = add_line(30, 0);
  initial.push_back({lone_negative, false});
  for (int i = 0; i < 20; ++i) initial.push_back({add_line(30, 0), true});
  for (int i = 0; i < 30; ++i) add_line(60 + i, 5);  // unlabeled, far from both
  auto data = Dataset::create("overrides", t, 40);

  SessionConfig cfg;
  cfg.initial_prototypes = 10;
  cfg.forest.balanced_class_weights = false;
  Session s = Session::with_initial_labels(data, initial, cfg);
  s.step();
  CHECK(s.prediction().probability[lone_positive] < 0.5);
  CHECK(s.prediction().probability[lone_negative] > 0.9);
  const auto tract = s.finalize();
  CHECK(std::find(tract.begin(), tract.end(), lone_positive) != tract.end());
  CHECK(std::find(tract.begin(), tract.end(), lone_negative) == tract.end());
  const auto raw = s.raw_prediction();
  CHECK(std::find(raw.begin(), raw.end(), lone_negative) != raw.end());
}

TEST_CASE("model negative everywhere leaves the labeled positives") {
  Tractogram t;
  auto add_line = [&](double y) {
    const std::vector<Vec3> pts{{0, y, 0}, {20, y, 0}};
    return t.add(std::span<const Vec3>(pts));
  };
  std::vector<Label> initial;
  const std::size_t p1 = add_line(0), p2 = add_line(40);
  initial.push_back({p1, true});
  initial.push_back({p2, true});
  for (int i = 0; i < 20; ++i) initial.push_back({add_line(0), false});
  for (int i = 0; i < 20; ++i) initial.push_back({add_line(40), false});
  for (int i = 0; i < 20; ++i) initial.push_back({add_line(80 + i), false});
  for (int i = 0; i < 10; ++i) add_line(0);  // unlabeled copies of the positives' geometry
  auto data = Dataset::create("negative", t, 40);
  SessionConfig cfg;
  cfg.initial_prototypes = 10;
  cfg.forest.balanced_class_weights = false;
  Session s = Session::with_initial_labels(data, initial, cfg);
  s.step();
  CHECK(s.raw_prediction().empty());
  CHECK(s.finalize() == std::vector<std::size_t>{p1, p2});
}

TEST_CASE("labels outside the reference are negatives") {
  const LabelFile sparse{{3, true}, {5, false}};
  OracleAnnotator oracle(sparse, 10);
  const std::vector<std::size_t> ids{3, 4, 5, 9};
  const auto labels = oracle.annotate(ids);
  REQUIRE(labels.size() == 4);
  CHECK(labels[0].positive);
  CHECK_FALSE(labels[1].positive);
  CHECK_FALSE(labels[2].positive);
  CHECK_FALSE(labels[3].positive);
}

TEST_CASE("config validation and strategy names") {
  CHECK(std::string(to_string(QueryStrategy::entropy)) == "entropy");
  CHECK(parse_strategy("random") == QueryStrategy::random);
  CHECK_THROWS_AS(parse_strategy("greedy"), InvalidArgument);
  SessionConfig cfg;
  CHECK(cfg.points_per_streamline == 40);
  CHECK(cfg.initial_prototypes == 100);
  CHECK(cfg.adaptive_prototype_cap == 100);
  CHECK(cfg.init_random_count == 20);
  CHECK(cfg.init_positive_seed_count == 2);
  CHECK(cfg.queries_per_iteration == 10);
  CHECK(cfg.max_iterations == 20);
  CHECK_NOTHROW(cfg.validate());
  cfg.points_per_streamline = 1;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
