#include "scenario_rag/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "scenario_rag/error.hpp"

namespace scenario_rag {

namespace {

constexpr std::array<std::string_view, kEntityKindCount> kEntityNames = {"ego", "vehicle", "signal",
                                                                          "sign", "lane"};
constexpr std::array<std::string_view, kRelationCount> kRelationNames = {"lead", "active", "inert",
                                                                          "on"};
constexpr std::array<std::string_view, 3> kSignClassNames = {"stop", "yield", "speed_limit"};
constexpr std::array<std::string_view, 3> kPhaseNames = {"red", "yellow", "green"};

template <typename Enum, std::size_t N>
std::optional<Enum> parse_enum(const std::array<std::string_view, N>& names, std::string_view text) {
  for (std::size_t i = 0; i < N; ++i) {
    if (names[i] == text) return static_cast<Enum>(i);
  }
  return std::nullopt;
}

bool finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

double norm(Point2 p) { return std::hypot(p.x, p.y); }

}  // namespace

std::string_view to_string(EntityKind kind) { return kEntityNames[rank(kind)]; }
std::string_view to_string(RelationKind kind) { return kRelationNames[rank(kind)]; }
std::string_view to_string(SignClass c) { return kSignClassNames[static_cast<std::size_t>(c)]; }
std::string_view to_string(SignalPhase p) { return kPhaseNames[static_cast<std::size_t>(p)]; }

std::optional<EntityKind> parse_entity_kind(std::string_view text) {
  return parse_enum<EntityKind>(kEntityNames, text);
}
std::optional<RelationKind> parse_relation_kind(std::string_view text) {
  return parse_enum<RelationKind>(kRelationNames, text);
}
std::optional<SignClass> parse_sign_class(std::string_view text) {
  return parse_enum<SignClass>(kSignClassNames, text);
}
std::optional<SignalPhase> parse_signal_phase(std::string_view text) {
  return parse_enum<SignalPhase>(kPhaseNames, text);
}

EntityKind state_kind(const PhysicalState& state) {
  // Variant alternatives are ordered Ego, Vehicle, Sign, Signal, Lane.
  switch (state.index()) {
    case 0: return EntityKind::kEgo;
    case 1: return EntityKind::kAdjacentVehicle;
    case 2: return EntityKind::kTrafficSign;
    case 3: return EntityKind::kTrafficSignal;
    default: return EntityKind::kLane;
  }
}

Point2 nearest_point_on_polyline(const std::vector<Point2>& polyline, Point2 p) {
  if (polyline.empty()) return p;
  if (polyline.size() == 1) return polyline.front();
  Point2 best = polyline.front();
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
    const Point2 a = polyline[i];
    const Point2 b = polyline[i + 1];
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Point2 q{a.x + t * dx, a.y + t * dy};
    const double d2 = (q.x - p.x) * (q.x - p.x) + (q.y - p.y) * (q.y - p.y);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = q;
    }
  }
  return best;
}

double distance_to_polyline(const std::vector<Point2>& polyline, Point2 p) {
  const Point2 q = nearest_point_on_polyline(polyline, p);
  return std::hypot(q.x - p.x, q.y - p.y);
}

Point2 node_position(const EntityNode& node) {
  return std::visit(
      [](const auto& s) -> Point2 {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EgoState>) {
          return {};
        } else if constexpr (std::is_same_v<T, LaneState>) {
          return nearest_point_on_polyline(s.centerline, {});
        } else {
          return s.position;
        }
      },
      node.state);
}

double node_speed(const EntityNode& node) {
  if (const auto* e = std::get_if<EgoState>(&node.state)) return e->speed;
  if (const auto* v = std::get_if<VehicleState>(&node.state)) return v->speed;
  return 0.0;
}

std::optional<std::string> check_state(const EntityNode& node) {
  return std::visit(
      [](const auto& s) -> std::optional<std::string> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EgoState>) {
          if (!std::isfinite(s.speed) || s.speed < 0.0) return "speed";
          if (!std::isfinite(s.heading) || s.heading < -std::numbers::pi ||
              s.heading >= std::numbers::pi)
            return "heading";
        } else if constexpr (std::is_same_v<T, VehicleState>) {
          if (!finite(s.position)) return "position";
          if (!std::isfinite(s.speed) || s.speed < 0.0) return "speed";
          if (!std::isfinite(s.heading)) return "heading";
          if (!std::isfinite(s.length) || s.length <= 0.0) return "length";
          if (!std::isfinite(s.width) || s.width <= 0.0) return "width";
        } else if constexpr (std::is_same_v<T, SignState>) {
          if (!finite(s.position)) return "position";
          if (!std::isfinite(s.limit) || s.limit < 0.0) return "limit";
          if (s.sign_class == SignClass::kSpeedLimit && s.limit <= 0.0) return "limit";
        } else if constexpr (std::is_same_v<T, SignalState>) {
          if (!finite(s.position)) return "position";
        } else {
          if (s.centerline.size() < 2) return "centerline";
          for (std::size_t i = 0; i < s.centerline.size(); ++i) {
            if (!finite(s.centerline[i])) return "centerline";
            if (i > 0 && s.centerline[i] == s.centerline[i - 1]) return "centerline";
          }
          if (s.lane_id < 0) return "lane_id";
          if (!std::isfinite(s.width) || s.width <= 0.0) return "width";
        }
        return std::nullopt;
      },
      node.state);
}

SemanticGraph build_graph(const FrameRecord& record, const EdgeRules& rules) {
  const EntityNode* ego = nullptr;
  for (const auto& e : record.entities) {
    if (e.kind == EntityKind::kEgo) {
      if (ego != nullptr) throw Error(ErrorCode::kDuplicateEgo, "frame has more than one ego entry");
      ego = &e;
    }
  }
  if (ego == nullptr) throw Error(ErrorCode::kMissingEgo, "frame has no ego entry");
  for (const auto& e : record.entities) {
    if (state_kind(e.state) != e.kind)
      throw Error(ErrorCode::kInvalidState,
                  "state of entity " + std::to_string(e.entity_id) + " does not match its kind");
    if (auto field = check_state(e))
      throw Error(ErrorCode::kInvalidState,
                  *field + " of entity " + std::to_string(e.entity_id));
  }
  if (ego->entity_id != kEgoId) throw Error(ErrorCode::kInvalidState, "entity_id of ego must be 0");

  SemanticGraph g;
  g.timestamp = record.timestamp;
  g.nodes = record.entities;

  auto closer = [](double d, EntityId id, double best_d, EntityId best_id) {
    return std::tie(d, id) < std::tie(best_d, best_id);
  };

  // Laterally nearest lane for a point, ties by entity id.
  auto nearest_lane = [&](Point2 p) -> const EntityNode* {
    const EntityNode* best = nullptr;
    double best_d = 0.0;
    for (const auto& n : record.entities) {
      if (n.kind != EntityKind::kLane) continue;
      const double d = distance_to_polyline(std::get<LaneState>(n.state).centerline, p);
      if (best == nullptr || closer(d, n.entity_id, best_d, best->entity_id)) {
        best = &n;
        best_d = d;
      }
    }
    return best;
  };

  const EntityNode* ego_lane = nearest_lane({});
  const double lane_width =
      ego_lane != nullptr ? std::get<LaneState>(ego_lane->state).width : rules.default_lane_width;
  const double half_width = 0.5 * lane_width;

  const EntityNode* lead = nullptr;
  double lead_d = 0.0;
  for (const auto& n : record.entities) {
    if (n.kind != EntityKind::kAdjacentVehicle) continue;
    const Point2 p = std::get<VehicleState>(n.state).position;
    if (p.x <= 0.0 || std::abs(p.y) >= half_width) continue;
    const double d = norm(p);
    if (lead == nullptr || closer(d, n.entity_id, lead_d, lead->entity_id)) {
      lead = &n;
      lead_d = d;
    }
  }
  if (lead != nullptr) g.edges.push_back({kEgoId, lead->entity_id, RelationKind::kLead});

  if (ego_lane != nullptr) g.edges.push_back({kEgoId, ego_lane->entity_id, RelationKind::kOn});

  for (const auto& n : record.entities) {
    if (n.kind == EntityKind::kAdjacentVehicle) {
      if (const auto* lane = nearest_lane(std::get<VehicleState>(n.state).position))
        g.edges.push_back({n.entity_id, lane->entity_id, RelationKind::kOn});
    } else if (n.kind == EntityKind::kTrafficSign || n.kind == EntityKind::kTrafficSignal) {
      const Point2 p = node_position(n);
      if (norm(p) > rules.governance_radius) continue;
      const double lateral = ego_lane != nullptr
                                 ? distance_to_polyline(std::get<LaneState>(ego_lane->state).centerline, p)
                                 : std::abs(p.y);
      const bool governs = p.x > 0.0 && lateral <= half_width + rules.governance_lateral_margin;
      g.edges.push_back({n.entity_id, kEgoId, governs ? RelationKind::kActive : RelationKind::kInert});
    }
  }

  g = canonicalize(g);
  if (auto violations = validate(g); !violations.empty())
    throw Error(ErrorCode::kValidation, describe(violations));
  return g;
}

SemanticGraph canonicalize(const SemanticGraph& g) {
  SemanticGraph out;
  out.timestamp = g.timestamp;
  out.nodes = g.nodes;
  std::stable_sort(out.nodes.begin(), out.nodes.end(), [](const EntityNode& a, const EntityNode& b) {
    const auto ka = rank(a.kind);
    const auto kb = rank(b.kind);
    const double da = norm(node_position(a));
    const double db = norm(node_position(b));
    return std::tie(ka, da, a.entity_id) < std::tie(kb, db, b.entity_id);
  });
  std::unordered_map<EntityId, std::size_t> index;
  for (std::size_t i = 0; i < out.nodes.size(); ++i) index.emplace(out.nodes[i].entity_id, i);
  auto position_of = [&](EntityId id) {
    auto it = index.find(id);
    return it == index.end() ? std::numeric_limits<std::size_t>::max() : it->second;
  };
  out.edges = g.edges;
  std::stable_sort(out.edges.begin(), out.edges.end(), [&](const RelationEdge& a, const RelationEdge& b) {
    const auto as = position_of(a.src), ad = position_of(a.dst), ak = rank(a.kind);
    const auto bs = position_of(b.src), bd = position_of(b.dst), bk = rank(b.kind);
    return std::tie(as, ad, ak) < std::tie(bs, bd, bk);
  });
  return out;
}

bool is_canonical(const SemanticGraph& g) { return canonicalize(g) == g; }

ScenarioPrimitive canonicalize(const ScenarioPrimitive& s) {
  ScenarioPrimitive out = s;
  for (auto& f : out.frames) f = canonicalize(f);
  return out;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::kMissingEgo: return "MissingEgo";
    case ViolationKind::kDuplicateEgo: return "DuplicateEgo";
    case ViolationKind::kEgoIdNotZero: return "EgoIdNotZero";
    case ViolationKind::kDuplicateNodeId: return "DuplicateNodeId";
    case ViolationKind::kNegativeId: return "NegativeId";
    case ViolationKind::kStateKindMismatch: return "StateKindMismatch";
    case ViolationKind::kInvalidState: return "InvalidState";
    case ViolationKind::kDanglingEdge: return "DanglingEdge";
    case ViolationKind::kSelfLoop: return "SelfLoop";
    case ViolationKind::kDuplicateEdge: return "DuplicateEdge";
    case ViolationKind::kNegativeTimestamp: return "NegativeTimestamp";
    case ViolationKind::kEmptyScenario: return "EmptyScenario";
    case ViolationKind::kNonIncreasingTimestamp: return "NonIncreasingTimestamp";
    case ViolationKind::kInconsistentEntityKind: return "InconsistentEntityKind";
    case ViolationKind::kInvalidScenarioId: return "InvalidScenarioId";
  }
  return "Unknown";
}

std::vector<Violation> validate(const SemanticGraph& g) {
  std::vector<Violation> out;
  std::size_t egos = 0;
  const EntityNode* ego = nullptr;
  std::unordered_set<EntityId> ids;
  for (const auto& n : g.nodes) {
    if (n.kind == EntityKind::kEgo) {
      ++egos;
      ego = &n;
    }
    if (n.entity_id < 0) out.push_back({ViolationKind::kNegativeId, n.entity_id, "negative entity_id"});
    if (!ids.insert(n.entity_id).second)
      out.push_back({ViolationKind::kDuplicateNodeId, n.entity_id, "entity_id appears twice"});
    if (state_kind(n.state) != n.kind) {
      out.push_back({ViolationKind::kStateKindMismatch, n.entity_id,
                     std::string("state is not a ") + std::string(to_string(n.kind)) + " state"});
    } else if (auto field = check_state(n)) {
      out.push_back({ViolationKind::kInvalidState, n.entity_id, *field});
    }
  }
  if (egos == 0) out.push_back({ViolationKind::kMissingEgo, std::nullopt, "no ego node"});
  if (egos > 1) out.push_back({ViolationKind::kDuplicateEgo, std::nullopt, "more than one ego node"});
  if (egos == 1 && ego->entity_id != kEgoId)
    out.push_back({ViolationKind::kEgoIdNotZero, ego->entity_id, "ego entity_id must be 0"});

  std::set<std::tuple<EntityId, EntityId, std::size_t>> seen;
  for (const auto& e : g.edges) {
    if (e.src == e.dst) out.push_back({ViolationKind::kSelfLoop, e.src, "edge src equals dst"});
    if (!ids.contains(e.src)) out.push_back({ViolationKind::kDanglingEdge, e.src, "edge src not a node"});
    if (!ids.contains(e.dst)) out.push_back({ViolationKind::kDanglingEdge, e.dst, "edge dst not a node"});
    if (!seen.emplace(e.src, e.dst, rank(e.kind)).second)
      out.push_back({ViolationKind::kDuplicateEdge, e.src,
                     "duplicate " + std::string(to_string(e.kind)) + " edge to " + std::to_string(e.dst)});
  }
  if (g.timestamp < 0) out.push_back({ViolationKind::kNegativeTimestamp, std::nullopt, "timestamp < 0"});
  return out;
}

std::vector<Violation> validate(const ScenarioPrimitive& s) {
  std::vector<Violation> out;
  if (s.scenario_id.empty() || s.scenario_id.find_first_of(",\n\r\"") != std::string::npos)
    out.push_back({ViolationKind::kInvalidScenarioId, std::nullopt,
                   "scenario_id must be non-empty and free of commas, quotes and newlines"});
  if (s.frames.empty()) out.push_back({ViolationKind::kEmptyScenario, std::nullopt, "no frames"});
  std::unordered_map<EntityId, EntityKind> kinds;
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    const auto& f = s.frames[i];
    for (auto v : validate(f)) {
      v.detail = "frame " + std::to_string(i) + ": " + v.detail;
      out.push_back(std::move(v));
    }
    if (i > 0 && f.timestamp <= s.frames[i - 1].timestamp)
      out.push_back({ViolationKind::kNonIncreasingTimestamp, std::nullopt,
                     "frame " + std::to_string(i) + " timestamp not increasing"});
    for (const auto& n : f.nodes) {
      auto [it, inserted] = kinds.emplace(n.entity_id, n.kind);
      if (!inserted && it->second != n.kind)
        out.push_back({ViolationKind::kInconsistentEntityKind, n.entity_id,
                       "entity changes kind in frame " + std::to_string(i)});
    }
  }
  return out;
}

std::string describe(const std::vector<Violation>& violations) {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i > 0) os << "; ";
    os << to_string(violations[i].kind);
    if (violations[i].entity) os << '(' << *violations[i].entity << ')';
    if (!violations[i].detail.empty()) os << ": " << violations[i].detail;
  }
  return os.str();
}

}  // namespace scenario_rag
