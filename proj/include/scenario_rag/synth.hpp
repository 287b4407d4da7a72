#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scenario_rag/scenario.hpp"

namespace scenario_rag {

enum class Template : std::uint8_t { kCarFollowing, kSignalledIntersection, kLaneChange, kStopSign, kMerge };

std::string_view to_string(Template t);
std::optional<Template> parse_template(std::string_view text);

// Half-widths of the uniform noise applied to continuous attributes.
struct Jitter {
  double position = 0.3;  // m
  double speed = 0.5;     // m/s
  double heading = 0.02;  // rad
};

struct ClusterSpec {
  std::int64_t cluster_id = 0;
  Template templ = Template::kCarFollowing;
  int min_frames = 6;
  int max_frames = 10;
  Jitter jitter;
};

struct GeneratorConfig {
  std::uint64_t seed = 1;
  std::vector<ClusterSpec> clusters;
  int scenarios_per_cluster = 100;
  int visual_styles = 4;
  std::string id_prefix = "s";
};

// The default three-cluster set: car following, signalled intersection and
// lane change, 100 scenarios each.
GeneratorConfig default_generator_config(std::uint64_t seed = 1);

// Throws Error{kValidation} for min > max, min < 1, negative jitter,
// duplicate cluster ids, or fewer than two styles.
void check_config(const ClusterSpec& spec);
void check_config(const GeneratorConfig& cfg);

struct LabeledDataset {
  std::vector<ScenarioPrimitive> scenarios;
  std::map<std::string, std::int64_t> labels;  // scenario_id -> cluster_id
  std::map<std::string, std::int64_t> styles;  // scenario_id -> style_id
};

// Topology follows the template and the frame's progress through the scenario;
// continuous attributes get bounded noise with margins that keep every edge
// predicate on the same side of its threshold. The style only moves surface
// attributes (vehicle extents, lane widths, classes of non-governing signs).
ScenarioPrimitive generate_scenario(const ClusterSpec& spec, std::int64_t style_id, std::uint64_t seed,
                                    const std::string& scenario_id = "scenario");

// Scenario i of cluster c (global index g = c * per_cluster + i) uses the stream
// seed ^ g and style i % visual_styles.
LabeledDataset generate_dataset(const GeneratorConfig& cfg);

inline constexpr std::size_t kVisualFeatureDim = 64;

// Appearance surrogate used by the visual-similarity baseline: dominated by the
// style and surface attributes with a small topology leak. Unit norm.
std::vector<double> visual_feature(const ScenarioPrimitive& s);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

// Sidecar CSV "scenario_id,cluster_id,style_id", rows in dataset order.
void write_labels_csv(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset read_labels_csv(const std::filesystem::path& path);

}  // namespace scenario_rag
