#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "scenario_rag/error.hpp"
#include "scenario_rag/graph_distance.hpp"
#include "scenario_rag/synth.hpp"
#include "dtw_oracle.hpp"
#include "test_support.hpp"

using namespace scenario_rag;
using namespace scenario_rag::testing;

namespace {

SemanticGraph with_edges(std::vector<RelationEdge> edges) {
  SemanticGraph g;
  g.nodes = {ego(), vehicle(1, 10.0, 0.0), lane(2, 0.0)};
  g.edges = std::move(edges);
  return canonicalize(g);
}

}  // namespace

TEST_CASE("frame_distance: identity") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const SemanticGraph g = build_graph(random_record(rng, 0));
    CHECK(frame_distance(g, g) == 0.0);
  }
}

TEST_CASE("frame_distance: edge term alone") {
  const SemanticGraph one = with_edges({{kEgoId, 2, RelationKind::kOn}});
  const SemanticGraph two = with_edges({{kEgoId, 2, RelationKind::kOn}, {kEgoId, 1, RelationKind::kLead}});
  CHECK(frame_distance(one, two) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("frame_distance: empty edge sets contribute nothing") {
  SemanticGraph a;
  a.nodes = {ego()};
  CHECK(frame_distance(a, a) == 0.0);
}

TEST_CASE("frame_distance: rejects non-canonical input") {
  SemanticGraph g;
  g.nodes = {lane(2, 0.0), ego()};
  try {
    frame_distance(g, g);
    FAIL("expected NonCanonicalInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonCanonicalInput);
  }
}

TEST_CASE("frame_distance: matches the scalar oracle, symmetric, non-negative") {
  Rng rng(2);
  const FrameDistanceWeights weights[] = {{}, {0.3, 2.0, 1.0}, {0.0, 0.0, 1.0}};
  for (int i = 0; i < 500; ++i) {
    const SemanticGraph a = build_graph(random_record(rng, 0));
    const SemanticGraph b = build_graph(random_record(rng, 0));
    for (const auto& w : weights) {
      const double d = frame_distance(a, b, w);
      CHECK(d >= 0.0);
      CHECK(d == doctest::Approx(oracle_frame_distance(a, b, w)).epsilon(1e-12));
      CHECK(d == frame_distance(b, a, w));
    }
  }
}

TEST_CASE("graph_dtw: base cases") {
  Rng rng(3);
  const ScenarioPrimitive s = random_scenario(rng, 4);
  CHECK(graph_dtw(s, s) == 0.0);
  const ScenarioPrimitive a = random_scenario(rng, 1, "a");
  const ScenarioPrimitive b = random_scenario(rng, 1, "b");
  CHECK(graph_dtw(a, b) == frame_distance(a.frames[0], b.frames[0]));
  const ScenarioPrimitive c = random_scenario(rng, 2, "c");
  const double two_step = (frame_distance(c.frames[0], a.frames[0]) + frame_distance(c.frames[1], a.frames[0])) / 2;
  CHECK(graph_dtw(c, a) == doctest::Approx(two_step).epsilon(1e-15));
  CHECK(dtw_brute_force(c, a) == doctest::Approx(two_step).epsilon(1e-15));
  ScenarioPrimitive empty;
  CHECK_THROWS_AS(graph_dtw(empty, a), Error);
}

TEST_CASE("graph_dtw: equals enumeration oracles, symmetric") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const ScenarioPrimitive a = random_scenario(rng, static_cast<int>(rng.uniform_int(1, 5)), "a");
    const ScenarioPrimitive b = random_scenario(rng, static_cast<int>(rng.uniform_int(1, 5)), "b");
    const double d = graph_dtw(a, b);
    CHECK(std::abs(d - dtw_brute_force(a, b)) <= 1e-9);
    CHECK(std::abs(d - oracle_dtw(a, b, {})) <= 1e-9);
    CHECK(std::abs(d - graph_dtw(b, a)) <= 1e-12);
  }
}

TEST_CASE("graph_dtw: appending a shared frame is bounded by the largest frame cost") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    ScenarioPrimitive a = random_scenario(rng, 3, "a");
    ScenarioPrimitive b = random_scenario(rng, 3, "b");
    double max_cost = 0;
    for (const auto& fa : a.frames)
      for (const auto& fb : b.frames) max_cost = std::max(max_cost, frame_distance(fa, fb));
    const double before = graph_dtw(a, b);
    SemanticGraph extra = build_graph(random_record(rng, 10));
    a.frames.push_back(extra);
    b.frames.push_back(extra);
    CHECK(graph_dtw(a, b) <= before + max_cost + 1e-12);
  }
}

TEST_CASE("dtw_brute_force: size limit") {
  Rng rng(6);
  const ScenarioPrimitive a = random_scenario(rng, 7, "a");
  const ScenarioPrimitive b = random_scenario(rng, 6, "b");
  try {
    dtw_brute_force(a, b);
    FAIL("expected TooLarge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTooLarge);
  }
  CHECK(dtw_brute_force(b, b) == 0.0);
}

TEST_CASE("distance_matrix: small cases") {
  Rng rng(7);
  const ScenarioPrimitive s = random_scenario(rng, 3, "only");
  const DistanceMatrix one = distance_matrix({s});
  CHECK(one.size() == 1);
  CHECK(one.at(0, 0) == 0.0);

  ScenarioPrimitive s2 = s, s3 = s;
  s2.scenario_id = "b";
  s3.scenario_id = "c";
  const DistanceMatrix three = distance_matrix({s, s2, s3});
  for (double v : three.values) CHECK(v == 0.0);
}

TEST_CASE("distance_matrix: entries equal graph_dtw, any thread count") {
  Rng rng(8);
  std::vector<ScenarioPrimitive> ds;
  for (int i = 0; i < 10; ++i) ds.push_back(random_scenario(rng, static_cast<int>(rng.uniform_int(1, 6)), "s" + std::to_string(i)));
  const DistanceMatrix m = distance_matrix(ds, {}, 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(m.ids[i] == ds[i].scenario_id);
    for (std::size_t j = 0; j < ds.size(); ++j) {
      CHECK(m.at(i, j) == graph_dtw(ds[i], ds[j]));
      CHECK(m.at(i, j) == m.at(j, i));
    }
  }
  CHECK(distance_matrix(ds, {}, 4).values == m.values);
}

TEST_CASE("distance csv round-trip is exact") {
  TempDir dir("dm");
  GeneratorConfig cfg = default_generator_config(2);
  cfg.scenarios_per_cluster = 5;
  const auto ds = generate_dataset(cfg);
  const DistanceMatrix m = distance_matrix(ds.scenarios);
  write_distance_csv(m, dir / "d.csv");
  const DistanceMatrix back = read_distance_csv(dir / "d.csv");
  CHECK(back.ids == m.ids);
  CHECK(back.values == m.values);
}

TEST_CASE("upper_percentile uses nearest rank over the upper triangle") {
  DistanceMatrix m;
  m.ids = {"a", "b", "c"};
  m.values = {0, 1, 3, 1, 0, 2, 3, 2, 0};
  CHECK(upper_percentile(m, 100) == 3.0);
  CHECK(upper_percentile(m, 50) == 2.0);
  CHECK(upper_percentile(m, 10) == 1.0);
}

TEST_CASE("weights validation") {
  CHECK_THROWS_AS(check_weights({0, 0, 0}), Error);
  CHECK_THROWS_AS(check_weights({-1, 1, 1}), Error);
  CHECK_NOTHROW(check_weights({}));
}
