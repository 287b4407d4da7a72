#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>
#include <tuple>

#include "scenario_rag/error.hpp"
#include "scenario_rag/scenario.hpp"
#include "scenario_rag/scenario_io.hpp"
#include "scenario_rag/synth.hpp"
#include "test_support.hpp"

using namespace scenario_rag;
using namespace scenario_rag::testing;

namespace {

using EdgeTriple = std::tuple<EntityId, EntityId, RelationKind>;

std::set<EdgeTriple> edge_set(const SemanticGraph& g) {
  std::set<EdgeTriple> out;
  for (const auto& e : g.edges) out.emplace(e.src, e.dst, e.kind);
  return out;
}

// Distance from p to a straight lane polyline y = const over x in [-30, 60].
double lane_distance(double lane_y, Point2 p) {
  const double cx = std::clamp(p.x, -30.0, 60.0);
  return std::hypot(p.x - cx, p.y - lane_y);
}

// Edge rules written out again for the straight-lane frames of random_record.
std::set<EdgeTriple> expected_edges(const FrameRecord& r) {
  std::set<EdgeTriple> out;
  const EntityNode* ego_lane = nullptr;
  auto nearest_lane = [&](Point2 p) {
    const EntityNode* best = nullptr;
    double best_d = 1e300;
    for (const auto& n : r.entities) {
      if (n.kind != EntityKind::kLane) continue;
      const double d = lane_distance(std::get<LaneState>(n.state).centerline[0].y, p);
      if (d < best_d || (d == best_d && n.entity_id < best->entity_id)) {
        best = &n;
        best_d = d;
      }
    }
    return best;
  };
  ego_lane = nearest_lane({0.0, 0.0});
  const double half = 0.5 * (ego_lane ? std::get<LaneState>(ego_lane->state).width : 3.5);
  if (ego_lane) out.emplace(kEgoId, ego_lane->entity_id, RelationKind::kOn);
  const EntityNode* lead = nullptr;
  double lead_d = 1e300;
  for (const auto& n : r.entities) {
    if (n.kind == EntityKind::kAdjacentVehicle) {
      const Point2 p = std::get<VehicleState>(n.state).position;
      if (const auto* l = nearest_lane(p)) out.emplace(n.entity_id, l->entity_id, RelationKind::kOn);
      const double d = std::hypot(p.x, p.y);
      if (p.x > 0 && std::abs(p.y) < half && (d < lead_d || (d == lead_d && n.entity_id < lead->entity_id))) {
        lead = &n;
        lead_d = d;
      }
    }
    if (n.kind == EntityKind::kTrafficSign || n.kind == EntityKind::kTrafficSignal) {
      const Point2 p = n.kind == EntityKind::kTrafficSign ? std::get<SignState>(n.state).position
                                                          : std::get<SignalState>(n.state).position;
      if (std::hypot(p.x, p.y) > 50.0) continue;
      const double lateral =
          ego_lane ? lane_distance(std::get<LaneState>(ego_lane->state).centerline[0].y, p) : std::abs(p.y);
      const bool governs = p.x > 0 && lateral <= half + 2.5;
      out.emplace(n.entity_id, kEgoId, governs ? RelationKind::kActive : RelationKind::kInert);
    }
  }
  if (lead) out.emplace(kEgoId, lead->entity_id, RelationKind::kLead);
  return out;
}

bool has_violation(const std::vector<Violation>& v, ViolationKind kind) {
  return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == kind; });
}

}  // namespace

TEST_CASE("build_graph: ego only gives a single node") {
  const SemanticGraph g = build_graph({0, {ego(5.0)}});
  CHECK(g.nodes.size() == 1);
  CHECK(g.edges.empty());
}

TEST_CASE("build_graph: ego on a lane gets one On edge") {
  const SemanticGraph g = build_graph({0, {ego(), lane(1, 0.0)}});
  CHECK(g.nodes.size() == 2);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == RelationEdge{kEgoId, 1, RelationKind::kOn});
}

TEST_CASE("build_graph: lead vehicle ahead in lane") {
  const SemanticGraph g = build_graph({0, {ego(), vehicle(1, 10.0, 0.0), lane(2, 0.0)}});
  const std::set<EdgeTriple> want = {{kEgoId, 1, RelationKind::kLead},
                                     {kEgoId, 2, RelationKind::kOn},
                                     {1, 2, RelationKind::kOn}};
  CHECK(edge_set(g) == want);
}

TEST_CASE("build_graph: signs split into active and inert") {
  const SemanticGraph g =
      build_graph({0, {ego(), lane(1, 0.0), sign(2, 20.0, 2.0), sign(3, -10.0, 2.0), signal(4, 30.0, 40.0)}});
  const auto edges = edge_set(g);
  CHECK(edges.count({2, kEgoId, RelationKind::kActive}) == 1);
  CHECK(edges.count({3, kEgoId, RelationKind::kInert}) == 1);
  // 50 m away exactly is outside (hypot(30, 40) = 50 is on the boundary and kept).
  CHECK(edges.count({4, kEgoId, RelationKind::kInert}) == 1);
  const SemanticGraph far = build_graph({0, {ego(), signal(4, 40.0, 40.0)}});
  CHECK(far.edges.empty());
}

TEST_CASE("build_graph: errors") {
  CHECK_THROWS_AS(build_graph({0, {vehicle(1, 5, 0)}}), Error);
  try {
    build_graph({0, {ego(), ego()}});
    FAIL("expected DuplicateEgo");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDuplicateEgo);
  }
  try {
    build_graph({0, {ego(-1.0)}});
    FAIL("expected InvalidState");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kInvalidState);
  }
  try {
    build_graph({0, {vehicle(1, 5, 0)}});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kMissingEgo);
  }
}

TEST_CASE("build_graph matches the edge rules on random frames") {
  Rng rng(11);
  for (int i = 0; i < 500; ++i) {
    const FrameRecord r = random_record(rng, i);
    const SemanticGraph g = build_graph(r);
    CHECK(edge_set(g) == expected_edges(r));
    CHECK(validate(g).empty());
    CHECK(is_canonical(g));
    CHECK(build_graph(r) == g);
  }
}

TEST_CASE("canonicalize: idempotent and order independent") {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const SemanticGraph g = build_graph(random_record(rng, 0));
    CHECK(canonicalize(g) == g);
    SemanticGraph shuffled = g;
    std::reverse(shuffled.nodes.begin(), shuffled.nodes.end());
    for (std::size_t k = shuffled.edges.size(); k > 1; --k)
      std::swap(shuffled.edges[k - 1], shuffled.edges[static_cast<std::size_t>(rng.uniform_int(0, k - 1))]);
    CHECK(canonicalize(shuffled) == g);
  }
}

TEST_CASE("canonicalize: ties in distance go to the smaller id") {
  SemanticGraph g;
  g.nodes = {ego(), vehicle(7, 10.0, 0.0), vehicle(3, 0.0, 10.0)};
  const SemanticGraph c = canonicalize(g);
  CHECK(c.nodes[0].entity_id == kEgoId);
  CHECK(c.nodes[1].entity_id == 3);
  CHECK(c.nodes[2].entity_id == 7);
}

TEST_CASE("canonicalize: kind rank orders nodes") {
  SemanticGraph g;
  g.nodes = {lane(4, 0.0), sign(3, 1.0, 0.0), signal(2, 1.0, 0.0), vehicle(1, 100.0, 0.0), ego()};
  const SemanticGraph c = canonicalize(g);
  std::vector<EntityKind> kinds;
  for (const auto& n : c.nodes) kinds.push_back(n.kind);
  CHECK(kinds == std::vector<EntityKind>{EntityKind::kEgo, EntityKind::kAdjacentVehicle, EntityKind::kTrafficSignal,
                                         EntityKind::kTrafficSign, EntityKind::kLane});
}

TEST_CASE("validate: violations") {
  SemanticGraph ok = build_graph({0, {ego(), lane(1, 0.0)}});
  CHECK(validate(ok).empty());

  SemanticGraph dangling = ok;
  dangling.edges.push_back({kEgoId, 9, RelationKind::kLead});
  const auto v = validate(dangling);
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == ViolationKind::kDanglingEdge);
  CHECK(v[0].entity == std::optional<EntityId>(9));

  SemanticGraph two_egos = ok;
  EntityNode second = ego();
  second.entity_id = 5;
  two_egos.nodes.push_back(second);
  CHECK(has_violation(validate(two_egos), ViolationKind::kDuplicateEgo));

  SemanticGraph no_ego;
  no_ego.nodes = {lane(1, 0.0)};
  CHECK(has_violation(validate(no_ego), ViolationKind::kMissingEgo));

  SemanticGraph loop = ok;
  loop.edges.push_back({1, 1, RelationKind::kOn});
  CHECK(has_violation(validate(loop), ViolationKind::kSelfLoop));

  SemanticGraph dup = ok;
  dup.edges.push_back(dup.edges[0]);
  CHECK(has_violation(validate(dup), ViolationKind::kDuplicateEdge));

  SemanticGraph mismatch = ok;
  mismatch.nodes[1].kind = EntityKind::kAdjacentVehicle;
  CHECK(has_violation(validate(mismatch), ViolationKind::kStateKindMismatch));
}

TEST_CASE("validate: scenario invariants") {
  ScenarioPrimitive s;
  s.scenario_id = "x";
  CHECK(has_violation(validate(s), ViolationKind::kEmptyScenario));
  s.frames = {build_graph({3, {ego()}}), build_graph({3, {ego()}})};
  CHECK(has_violation(validate(s), ViolationKind::kNonIncreasingTimestamp));
  s.frames[1] = build_graph({4, {ego(), lane(1, 0.0)}});
  CHECK(validate(s).empty());
  s.frames[1].nodes[1] = vehicle(1, 3.0, 0.0);
  s.frames[0].nodes.push_back(lane(1, 0.0));
  CHECK(has_violation(validate(s), ViolationKind::kInconsistentEntityKind));
}

TEST_CASE("jsonl: empty dataset round-trips through an empty stream") {
  std::stringstream ss;
  write_jsonl({}, ss);
  CHECK(ss.str().empty());
  CHECK(read_jsonl(ss).empty());
}

TEST_CASE("jsonl: round-trip is the identity on random scenarios") {
  Rng rng(99);
  std::vector<ScenarioPrimitive> data;
  for (int i = 0; i < 1000; ++i) {
    ScenarioPrimitive s = random_scenario(rng, static_cast<int>(rng.uniform_int(1, 4)), "r" + std::to_string(i));
    s.metadata["index"] = std::to_string(i);
    data.push_back(std::move(s));
  }
  std::stringstream ss;
  write_jsonl(data, ss);
  const auto back = read_jsonl(ss);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) CHECK(back[i] == canonicalize(data[i]));
}

TEST_CASE("jsonl: generated dataset survives a file round-trip") {
  TempDir dir("jsonl");
  GeneratorConfig cfg = default_generator_config(3);
  cfg.scenarios_per_cluster = 5;
  const auto ds = generate_dataset(cfg);
  write_jsonl(ds.scenarios, dir / "d.jsonl");
  CHECK(read_jsonl(dir / "d.jsonl") == ds.scenarios);
}

TEST_CASE("jsonl: schema violations are parse errors naming the line") {
  const ScenarioPrimitive s{"a", {build_graph({0, {ego(), vehicle(1, 10, 0), lane(2, 0)}})}, {}};
  const std::string good = to_json_line(s);
  std::string bad = good;
  const auto at = bad.find("\"lead\"");
  REQUIRE(at != std::string::npos);
  bad.replace(at, 6, "\"LEADS\"");
  std::stringstream ss(good + "\n" + bad + "\n");
  try {
    read_jsonl(ss);
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("kind") != std::string::npos);
  }

  std::string extra = good;
  extra.insert(1, "\"colour\":\"red\",");
  std::stringstream ss2(extra + "\n");
  CHECK_THROWS_AS(read_jsonl(ss2), Error);

  std::stringstream ss3("{not json\n");
  CHECK_THROWS_AS(read_jsonl(ss3), Error);
}

TEST_CASE("jsonl: missing file is an I/O error") {
  try {
    read_jsonl(std::filesystem::path("/nonexistent/definitely/missing.jsonl"));
    FAIL("expected IoError");
  } catch (const Error& e) {
    CHECK(e.is_io());
  }
}
