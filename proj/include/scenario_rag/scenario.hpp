#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace scenario_rag {

// Declaration order is the canonical kind rank used when sorting nodes.
enum class EntityKind : std::uint8_t { kEgo, kAdjacentVehicle, kTrafficSignal, kTrafficSign, kLane };
inline constexpr std::size_t kEntityKindCount = 5;

enum class RelationKind : std::uint8_t { kLead, kActive, kInert, kOn };
inline constexpr std::size_t kRelationCount = 4;

std::string_view to_string(EntityKind kind);
std::string_view to_string(RelationKind kind);
std::optional<EntityKind> parse_entity_kind(std::string_view text);
std::optional<RelationKind> parse_relation_kind(std::string_view text);

inline constexpr std::size_t rank(EntityKind kind) { return static_cast<std::size_t>(kind); }
inline constexpr std::size_t rank(RelationKind kind) { return static_cast<std::size_t>(kind); }

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

enum class SignClass : std::uint8_t { kStop, kYield, kSpeedLimit };
enum class SignalPhase : std::uint8_t { kRed, kYellow, kGreen };

std::string_view to_string(SignClass c);
std::string_view to_string(SignalPhase p);
std::optional<SignClass> parse_sign_class(std::string_view text);
std::optional<SignalPhase> parse_signal_phase(std::string_view text);

// Ego sits at the origin of its own frame: x forward, y left.
struct EgoState {
  double speed = 0.0;    // m/s
  double heading = 0.0;  // rad in [-pi, pi)
  bool operator==(const EgoState&) const = default;
};

struct VehicleState {
  Point2 position;
  double speed = 0.0;
  double heading = 0.0;
  double length = 4.5;
  double width = 1.8;
  bool operator==(const VehicleState&) const = default;
};

struct SignState {
  Point2 position;
  SignClass sign_class = SignClass::kStop;
  double limit = 0.0;  // only meaningful for kSpeedLimit
  bool operator==(const SignState&) const = default;
};

struct SignalState {
  Point2 position;
  SignalPhase phase = SignalPhase::kRed;
  bool operator==(const SignalState&) const = default;
};

struct LaneState {
  std::vector<Point2> centerline;
  std::int64_t lane_id = 0;
  double width = 3.5;
  bool operator==(const LaneState&) const = default;
};

using PhysicalState = std::variant<EgoState, VehicleState, SignState, SignalState, LaneState>;

// The kind a state alternative belongs to.
EntityKind state_kind(const PhysicalState& state);

using EntityId = std::int64_t;
inline constexpr EntityId kEgoId = 0;

struct EntityNode {
  EntityId entity_id = 0;
  EntityKind kind = EntityKind::kEgo;
  PhysicalState state;
  bool operator==(const EntityNode&) const = default;
};

struct RelationEdge {
  EntityId src = 0;
  EntityId dst = 0;
  RelationKind kind = RelationKind::kLead;
  bool operator==(const RelationEdge&) const = default;
};

struct SemanticGraph {
  std::vector<EntityNode> nodes;
  std::vector<RelationEdge> edges;
  std::int64_t timestamp = 0;
  bool operator==(const SemanticGraph&) const = default;
};

struct ScenarioPrimitive {
  std::string scenario_id;
  std::vector<SemanticGraph> frames;
  std::map<std::string, std::string> metadata;
  bool operator==(const ScenarioPrimitive&) const = default;
};

// Raw per-frame perception output: entities with states, no relations yet.
struct FrameRecord {
  std::int64_t timestamp = 0;
  std::vector<EntityNode> entities;
  bool operator==(const FrameRecord&) const = default;
};

// Geometric thresholds that instantiate the four relation kinds.
struct EdgeRules {
  double governance_radius = 50.0;        // m, signs/signals farther away get no edge
  double governance_lateral_margin = 2.5; // m beyond half the ego lane width
  double default_lane_width = 3.5;        // used when ego has no lane
};

// Position used for distances: origin for ego, the nearest centerline
// point to the ego origin for lanes.
Point2 node_position(const EntityNode& node);
double node_speed(const EntityNode& node);

double distance_to_polyline(const std::vector<Point2>& polyline, Point2 p);
Point2 nearest_point_on_polyline(const std::vector<Point2>& polyline, Point2 p);

// Edge synthesis:
//   lead   ego -> nearest vehicle ahead (x > 0) with |y| < half the ego lane width
//   on     ego -> nearest lane, and every vehicle -> its laterally nearest lane
//   active sign/signal -> ego when within the radius, ahead, and laterally
//          within the ego lane half width plus margin
//   inert  sign/signal -> ego for the remaining ones within the radius
// The result is canonical. Throws Error{kMissingEgo|kDuplicateEgo|kInvalidState}.
SemanticGraph build_graph(const FrameRecord& record, const EdgeRules& rules = {});

SemanticGraph canonicalize(const SemanticGraph& g);
bool is_canonical(const SemanticGraph& g);
ScenarioPrimitive canonicalize(const ScenarioPrimitive& s);

enum class ViolationKind {
  kMissingEgo,
  kDuplicateEgo,
  kEgoIdNotZero,
  kDuplicateNodeId,
  kNegativeId,
  kStateKindMismatch,
  kInvalidState,
  kDanglingEdge,
  kSelfLoop,
  kDuplicateEdge,
  kNegativeTimestamp,
  kEmptyScenario,
  kNonIncreasingTimestamp,
  kInconsistentEntityKind,
  kInvalidScenarioId,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::optional<EntityId> entity;  // offending entity, when there is one
  std::string detail;
  bool operator==(const Violation&) const = default;
};

// First failing field of a state, empty when the state is valid.
std::optional<std::string> check_state(const EntityNode& node);

std::vector<Violation> validate(const SemanticGraph& g);
std::vector<Violation> validate(const ScenarioPrimitive& s);

std::string describe(const std::vector<Violation>& violations);

}  // namespace scenario_rag
