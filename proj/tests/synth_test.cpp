#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <fstream>

#include "scenario_rag/error.hpp"
#include "scenario_rag/graph_distance.hpp"
#include "scenario_rag/scenario_io.hpp"
#include "scenario_rag/synth.hpp"
#include "test_support.hpp"

using namespace scenario_rag;
using namespace scenario_rag::testing;

namespace {

using KindEdge = std::tuple<EntityKind, EntityKind, RelationKind>;

std::vector<KindEdge> kind_edges(const SemanticGraph& g) {
  std::map<EntityId, EntityKind> kinds;
  for (const auto& n : g.nodes) kinds[n.entity_id] = n.kind;
  std::vector<KindEdge> out;
  for (const auto& e : g.edges) out.emplace_back(kinds.at(e.src), kinds.at(e.dst), e.kind);
  std::sort(out.begin(), out.end());
  return out;
}

std::string serialize(const ScenarioPrimitive& s) { return to_json_line(s); }

ClusterSpec spec_for(Template t, int frames = 8) {
  ClusterSpec c;
  c.templ = t;
  c.min_frames = frames;
  c.max_frames = frames;
  return c;
}

}  // namespace

TEST_CASE("generate_scenario is deterministic") {
  for (Template t : {Template::kCarFollowing, Template::kSignalledIntersection, Template::kLaneChange,
                     Template::kStopSign, Template::kMerge}) {
    ClusterSpec c;
    c.templ = t;
    CHECK(serialize(generate_scenario(c, 1, 42)) == serialize(generate_scenario(c, 1, 42)));
  }
}

TEST_CASE("car following has exactly one lead edge per frame") {
  ClusterSpec c;
  c.templ = Template::kCarFollowing;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ScenarioPrimitive s = generate_scenario(c, static_cast<std::int64_t>(seed % 4), seed);
    for (const auto& g : s.frames) {
      const auto leads = std::count_if(g.edges.begin(), g.edges.end(),
                                       [](const RelationEdge& e) { return e.kind == RelationKind::kLead; });
      CHECK(leads == 1);
    }
  }
}

TEST_CASE("seeds change attributes but not topology") {
  for (Template t : {Template::kCarFollowing, Template::kSignalledIntersection, Template::kLaneChange,
                     Template::kStopSign, Template::kMerge}) {
    const ClusterSpec c = spec_for(t);
    const ScenarioPrimitive a = generate_scenario(c, 2, 1);
    const ScenarioPrimitive b = generate_scenario(c, 2, 2);
    REQUIRE(a.frames.size() == b.frames.size());
    bool any_attr_diff = false;
    for (std::size_t f = 0; f < a.frames.size(); ++f) {
      CHECK(kind_edges(a.frames[f]) == kind_edges(b.frames[f]));
      any_attr_diff = any_attr_diff || a.frames[f].nodes != b.frames[f].nodes;
    }
    CHECK(any_attr_diff);
  }
}

TEST_CASE("style never changes topology") {
  for (Template t : {Template::kCarFollowing, Template::kSignalledIntersection, Template::kLaneChange,
                     Template::kStopSign, Template::kMerge}) {
    const ClusterSpec c = spec_for(t);
    const ScenarioPrimitive base = generate_scenario(c, 0, 9);
    for (std::int64_t style = 1; style < 4; ++style) {
      const ScenarioPrimitive other = generate_scenario(c, style, 9);
      REQUIRE(base.frames.size() == other.frames.size());
      for (std::size_t f = 0; f < base.frames.size(); ++f)
        CHECK(kind_edges(base.frames[f]) == kind_edges(other.frames[f]));
    }
  }
}

TEST_CASE("generated scenarios are valid and frame counts stay in range") {
  GeneratorConfig cfg = default_generator_config(4);
  cfg.clusters.push_back({3, Template::kStopSign, 3, 5, {}});
  cfg.clusters.push_back({4, Template::kMerge, 6, 12, {}});
  cfg.scenarios_per_cluster = 20;
  const auto ds = generate_dataset(cfg);
  std::map<std::int64_t, const ClusterSpec*> specs;
  for (const auto& c : cfg.clusters) specs[c.cluster_id] = &c;
  for (const auto& s : ds.scenarios) {
    CHECK(validate(s).empty());
    const auto* spec = specs.at(ds.labels.at(s.scenario_id));
    CHECK(static_cast<int>(s.frames.size()) >= spec->min_frames);
    CHECK(static_cast<int>(s.frames.size()) <= spec->max_frames);
  }
}

TEST_CASE("generate_dataset: counts, balance and style independence") {
  const auto ds = generate_dataset(default_generator_config(1));
  CHECK(ds.scenarios.size() == 300);
  CHECK(ds.labels.size() == 300);
  CHECK(ds.styles.size() == 300);
  std::map<std::int64_t, int> per_cluster;
  std::map<std::pair<std::int64_t, std::int64_t>, int> joint;
  for (const auto& s : ds.scenarios) {
    ++per_cluster[ds.labels.at(s.scenario_id)];
    ++joint[{ds.labels.at(s.scenario_id), ds.styles.at(s.scenario_id)}];
  }
  CHECK(per_cluster == std::map<std::int64_t, int>{{0, 100}, {1, 100}, {2, 100}});
  // Zero mutual information: every (cluster, style) cell holds the same count.
  CHECK(joint.size() == 12);
  for (const auto& [cell, n] : joint) CHECK(n == 25);
}

TEST_CASE("generate_dataset is a pure function of its config") {
  GeneratorConfig cfg = default_generator_config(1);
  cfg.scenarios_per_cluster = 10;
  const auto a = generate_dataset(cfg);
  const auto b = generate_dataset(cfg);
  CHECK(a.scenarios == b.scenarios);
  CHECK(a.labels == b.labels);
  CHECK(a.styles == b.styles);
  cfg.seed = 2;
  CHECK(generate_dataset(cfg).scenarios != a.scenarios);
}

TEST_CASE("intra-cluster DTW is smaller than inter-cluster DTW") {
  GeneratorConfig cfg = default_generator_config(1);
  cfg.scenarios_per_cluster = 15;
  const auto ds = generate_dataset(cfg);
  const DistanceMatrix dm = distance_matrix(ds.scenarios);
  double intra = 0, inter = 0;
  int n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < dm.size(); ++i) {
    for (std::size_t j = i + 1; j < dm.size(); ++j) {
      if (ds.labels.at(dm.ids[i]) == ds.labels.at(dm.ids[j])) {
        intra += dm.at(i, j);
        ++n_intra;
      } else {
        inter += dm.at(i, j);
        ++n_inter;
      }
    }
  }
  CHECK(intra / n_intra < inter / n_inter);
}

TEST_CASE("visual_feature: deterministic unit vectors dominated by style") {
  const auto ds = generate_dataset(default_generator_config(1));
  const ScenarioPrimitive& first = ds.scenarios.front();
  const auto v = visual_feature(first);
  CHECK(v.size() == kVisualFeatureDim);
  CHECK(v == visual_feature(first));
  double norm = 0;
  for (double x : v) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));

  // Pairs across all clusters: same style / different cluster vs same cluster / different style.
  double worst_same_style = 1.0;
  for (std::size_t i = 0; i < ds.scenarios.size(); i += 7) {
    const auto& a = ds.scenarios[i];
    for (std::size_t j = i + 1; j < ds.scenarios.size(); j += 11) {
      const auto& b = ds.scenarios[j];
      const bool same_style = ds.styles.at(a.scenario_id) == ds.styles.at(b.scenario_id);
      const bool same_cluster = ds.labels.at(a.scenario_id) == ds.labels.at(b.scenario_id);
      if (same_style && !same_cluster) {
        const double c = cosine_similarity(visual_feature(a), visual_feature(b));
        CHECK(c > 0.9);
        worst_same_style = std::min(worst_same_style, c);
      }
    }
  }
  for (std::size_t i = 0; i < ds.scenarios.size(); i += 7) {
    const auto& a = ds.scenarios[i];
    for (std::size_t j = i + 1; j < ds.scenarios.size(); j += 11) {
      const auto& b = ds.scenarios[j];
      if (ds.styles.at(a.scenario_id) != ds.styles.at(b.scenario_id) &&
          ds.labels.at(a.scenario_id) == ds.labels.at(b.scenario_id))
        CHECK(cosine_similarity(visual_feature(a), visual_feature(b)) < worst_same_style);
    }
  }
}

TEST_CASE("labels csv round-trip") {
  TempDir dir("labels");
  GeneratorConfig cfg = default_generator_config(1);
  cfg.scenarios_per_cluster = 4;
  const auto ds = generate_dataset(cfg);
  write_labels_csv(ds, dir / "labels.csv");
  const auto back = read_labels_csv(dir / "labels.csv");
  CHECK(back.labels == ds.labels);
  CHECK(back.styles == ds.styles);
  std::ifstream in(dir / "labels.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "scenario_id,cluster_id,style_id");
}

TEST_CASE("config validation") {
  GeneratorConfig cfg = default_generator_config(1);
  cfg.clusters[1].cluster_id = cfg.clusters[0].cluster_id;
  CHECK_THROWS_AS(check_config(cfg), Error);
  cfg = default_generator_config(1);
  cfg.visual_styles = 1;
  CHECK_THROWS_AS(check_config(cfg), Error);
  ClusterSpec c;
  c.min_frames = 5;
  c.max_frames = 4;
  CHECK_THROWS_AS(check_config(c), Error);
  c = {};
  c.jitter.speed = -1;
  CHECK_THROWS_AS(check_config(c), Error);
}
