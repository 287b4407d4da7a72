#include "scenario_rag/scenario_io.hpp"

#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "scenario_rag/csv.hpp"
#include "scenario_rag/error.hpp"

namespace scenario_rag {

using Json = nlohmann::ordered_json;

namespace {

Json point_json(Point2 p) { return Json::array({p.x, p.y}); }

Json state_json(const PhysicalState& state) {
  return std::visit(
      [](const auto& s) -> Json {
        using T = std::decay_t<decltype(s)>;
        Json j = Json::object();
        if constexpr (std::is_same_v<T, EgoState>) {
          j["speed"] = s.speed;
          j["heading"] = s.heading;
        } else if constexpr (std::is_same_v<T, VehicleState>) {
          j["x"] = s.position.x;
          j["y"] = s.position.y;
          j["speed"] = s.speed;
          j["heading"] = s.heading;
          j["length"] = s.length;
          j["width"] = s.width;
        } else if constexpr (std::is_same_v<T, SignState>) {
          j["x"] = s.position.x;
          j["y"] = s.position.y;
          j["class"] = to_string(s.sign_class);
          if (s.sign_class == SignClass::kSpeedLimit) j["limit"] = s.limit;
        } else if constexpr (std::is_same_v<T, SignalState>) {
          j["x"] = s.position.x;
          j["y"] = s.position.y;
          j["phase"] = to_string(s.phase);
        } else {
          Json line = Json::array();
          for (const auto& p : s.centerline) line.push_back(point_json(p));
          j["centerline"] = std::move(line);
          j["lane_id"] = s.lane_id;
          j["width"] = s.width;
        }
        return j;
      },
      state);
}

// Strict reader: every access names the JSON path, failures become ParseError.
class Reader {
 public:
  explicit Reader(std::size_t line) : line_(line) {}

  [[noreturn]] void fail(const std::string& field, const std::string& reason) const {
    throw Error(ErrorCode::kParse,
                "line " + std::to_string(line_) + ": field '" + field + "': " + reason);
  }

  void expect_object(const Json& j, const std::string& path, std::initializer_list<const char*> allowed,
                     std::initializer_list<const char*> required) const {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, _] : j.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) fail(join(path, key), "unknown key");
    }
    for (const char* r : required)
      if (!j.contains(r)) fail(join(path, r), "missing");
  }

  const Json& array(const Json& j, const std::string& path) const {
    if (!j.is_array()) fail(path, "expected an array");
    return j;
  }

  double number(const Json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }

  std::int64_t integer(const Json& j, const std::string& path) const {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<std::int64_t>();
  }

  std::string string(const Json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }

  Point2 point(const Json& j, const std::string& path) const {
    if (!j.is_array() || j.size() != 2) fail(path, "expected [x, y]");
    return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }

  PhysicalState state(const Json& j, EntityKind kind, const std::string& path) const {
    switch (kind) {
      case EntityKind::kEgo: {
        expect_object(j, path, {"speed", "heading"}, {"speed", "heading"});
        return EgoState{number(j["speed"], path + ".speed"), number(j["heading"], path + ".heading")};
      }
      case EntityKind::kAdjacentVehicle: {
        expect_object(j, path, {"x", "y", "speed", "heading", "length", "width"},
                      {"x", "y", "speed", "heading", "length", "width"});
        VehicleState v;
        v.position = {number(j["x"], path + ".x"), number(j["y"], path + ".y")};
        v.speed = number(j["speed"], path + ".speed");
        v.heading = number(j["heading"], path + ".heading");
        v.length = number(j["length"], path + ".length");
        v.width = number(j["width"], path + ".width");
        return v;
      }
      case EntityKind::kTrafficSign: {
        expect_object(j, path, {"x", "y", "class", "limit"}, {"x", "y", "class"});
        SignState s;
        s.position = {number(j["x"], path + ".x"), number(j["y"], path + ".y")};
        auto cls = parse_sign_class(string(j["class"], path + ".class"));
        if (!cls) fail(path + ".class", "unknown sign class");
        s.sign_class = *cls;
        if (j.contains("limit")) s.limit = number(j["limit"], path + ".limit");
        return s;
      }
      case EntityKind::kTrafficSignal: {
        expect_object(j, path, {"x", "y", "phase"}, {"x", "y", "phase"});
        SignalState s;
        s.position = {number(j["x"], path + ".x"), number(j["y"], path + ".y")};
        auto phase = parse_signal_phase(string(j["phase"], path + ".phase"));
        if (!phase) fail(path + ".phase", "unknown signal phase");
        s.phase = *phase;
        return s;
      }
      case EntityKind::kLane: {
        expect_object(j, path, {"centerline", "lane_id", "width"}, {"centerline", "lane_id", "width"});
        LaneState l;
        const auto& line = array(j["centerline"], path + ".centerline");
        for (std::size_t i = 0; i < line.size(); ++i)
          l.centerline.push_back(point(line[i], path + ".centerline[" + std::to_string(i) + "]"));
        l.lane_id = integer(j["lane_id"], path + ".lane_id");
        l.width = number(j["width"], path + ".width");
        return l;
      }
    }
    fail(path, "unreachable");
  }

 private:
  std::size_t line_;
};

}  // namespace

std::string to_json_line(const ScenarioPrimitive& scenario) {
  if (auto violations = validate(scenario); !violations.empty())
    throw Error(ErrorCode::kValidation, scenario.scenario_id + ": " + describe(violations));
  const ScenarioPrimitive s = canonicalize(scenario);
  Json j = Json::object();
  j["scenario_id"] = s.scenario_id;
  Json meta = Json::object();
  for (const auto& [k, v] : s.metadata) meta[k] = v;
  j["metadata"] = std::move(meta);
  Json frames = Json::array();
  for (const auto& f : s.frames) {
    Json jf = Json::object();
    jf["t"] = f.timestamp;
    Json nodes = Json::array();
    for (const auto& n : f.nodes) {
      nodes.push_back(Json{{"id", n.entity_id}, {"kind", to_string(n.kind)}, {"state", state_json(n.state)}});
    }
    jf["nodes"] = std::move(nodes);
    Json edges = Json::array();
    for (const auto& e : f.edges) {
      edges.push_back(Json{{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}});
    }
    jf["edges"] = std::move(edges);
    frames.push_back(std::move(jf));
  }
  j["frames"] = std::move(frames);
  return j.dump();
}

ScenarioPrimitive from_json_line(const std::string& line, std::size_t line_number) {
  const Reader r(line_number);
  Json j;
  try {
    j = Json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    r.fail("", std::string("malformed JSON: ") + e.what());
  }
  r.expect_object(j, "", {"scenario_id", "metadata", "frames"}, {"scenario_id", "frames"});
  ScenarioPrimitive s;
  s.scenario_id = r.string(j["scenario_id"], "scenario_id");
  if (j.contains("metadata")) {
    const auto& meta = j["metadata"];
    if (!meta.is_object()) r.fail("metadata", "expected an object");
    for (const auto& [k, v] : meta.items()) s.metadata[k] = r.string(v, "metadata." + k);
  }
  const auto& frames = r.array(j["frames"], "frames");
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    const std::string fp = "frames[" + std::to_string(fi) + "]";
    const auto& jf = frames[fi];
    r.expect_object(jf, fp, {"t", "nodes", "edges"}, {"t", "nodes", "edges"});
    SemanticGraph g;
    g.timestamp = r.integer(jf["t"], fp + ".t");
    const auto& nodes = r.array(jf["nodes"], fp + ".nodes");
    for (std::size_t ni = 0; ni < nodes.size(); ++ni) {
      const std::string np = fp + ".nodes[" + std::to_string(ni) + "]";
      const auto& jn = nodes[ni];
      r.expect_object(jn, np, {"id", "kind", "state"}, {"id", "kind", "state"});
      EntityNode n;
      n.entity_id = r.integer(jn["id"], np + ".id");
      auto kind = parse_entity_kind(r.string(jn["kind"], np + ".kind"));
      if (!kind) r.fail(np + ".kind", "unknown entity kind '" + jn["kind"].get<std::string>() + "'");
      n.kind = *kind;
      n.state = r.state(jn["state"], n.kind, np + ".state");
      g.nodes.push_back(std::move(n));
    }
    const auto& edges = r.array(jf["edges"], fp + ".edges");
    for (std::size_t ei = 0; ei < edges.size(); ++ei) {
      const std::string ep = fp + ".edges[" + std::to_string(ei) + "]";
      const auto& je = edges[ei];
      r.expect_object(je, ep, {"src", "dst", "kind"}, {"src", "dst", "kind"});
      RelationEdge e;
      e.src = r.integer(je["src"], ep + ".src");
      e.dst = r.integer(je["dst"], ep + ".dst");
      auto kind = parse_relation_kind(r.string(je["kind"], ep + ".kind"));
      if (!kind) r.fail(ep + ".kind", "unknown relation kind '" + je["kind"].get<std::string>() + "'");
      e.kind = *kind;
      g.edges.push_back(e);
    }
    s.frames.push_back(std::move(g));
  }
  if (auto violations = validate(s); !violations.empty())
    throw Error(ErrorCode::kValidation,
                "line " + std::to_string(line_number) + ": " + describe(violations));
  return canonicalize(s);
}

void write_jsonl(const std::vector<ScenarioPrimitive>& dataset, std::ostream& out) {
  for (const auto& s : dataset) out << to_json_line(s) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed");
}

std::vector<ScenarioPrimitive> read_jsonl(std::istream& in) {
  std::vector<ScenarioPrimitive> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out.push_back(from_json_line(line, number));
  }
  if (in.bad()) throw Error(ErrorCode::kIo, "read failed");
  return out;
}

void write_jsonl(const std::vector<ScenarioPrimitive>& dataset, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_jsonl(dataset, out);
}

std::vector<ScenarioPrimitive> read_jsonl(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_jsonl(in);
}

}  // namespace scenario_rag
