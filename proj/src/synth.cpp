#include "scenario_rag/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "scenario_rag/csv.hpp"
#include "scenario_rag/error.hpp"
#include "scenario_rag/random.hpp"

namespace scenario_rag {

namespace {

constexpr std::array<std::string_view, 5> kTemplateNames = {
    "car_following", "signalled_intersection", "lane_change", "stop_sign", "merge"};

constexpr double kPi = std::numbers::pi;

// Entity id ranges shared by all templates.
constexpr EntityId kLaneOwn = 1;
constexpr EntityId kLaneLeft = 2;
constexpr EntityId kLaneRamp = 3;
constexpr EntityId kVehicleA = 10;
constexpr EntityId kVehicleB = 11;
constexpr EntityId kSignal = 20;
constexpr EntityId kSignGoverning = 30;
constexpr EntityId kSignSide = 31;

struct StyleLook {
  double lane_width;
  double vehicle_length;
  double vehicle_width;
  SignState side_sign;
};

StyleLook style_look(std::int64_t style, Rng& rng) {
  const auto s4 = static_cast<double>(((style % 4) + 4) % 4);
  StyleLook look;
  look.lane_width = 3.2 + 0.15 * s4 + rng.jitter(0.05);
  look.vehicle_length = 3.8 + 0.5 * s4;
  look.vehicle_width = 1.7 + 0.1 * s4;
  switch (((style % 3) + 3) % 3) {
    case 0:
      look.side_sign.sign_class = SignClass::kSpeedLimit;
      look.side_sign.limit = 30.0 + 10.0 * s4;
      break;
    case 1: look.side_sign.sign_class = SignClass::kYield; break;
    default: look.side_sign.sign_class = SignClass::kStop; break;
  }
  return look;
}

double wrap_angle(double a) {
  while (a >= kPi) a -= 2.0 * kPi;
  while (a < -kPi) a += 2.0 * kPi;
  return a;
}

EntityNode lane(EntityId id, std::int64_t lane_id, double y, double width) {
  LaneState l;
  for (double x : {-30.0, 0.0, 30.0, 60.0, 90.0}) l.centerline.push_back({x, y});
  l.lane_id = lane_id;
  l.width = width;
  return {id, EntityKind::kLane, l};
}

EntityNode vehicle(EntityId id, Point2 p, double speed, double heading, double length, double width) {
  return {id, EntityKind::kAdjacentVehicle,
          VehicleState{p, std::max(0.0, speed), heading, length, width}};
}

EntityNode sign(EntityId id, Point2 p, const SignState& look) {
  SignState s = look;
  s.position = p;
  return {id, EntityKind::kTrafficSign, s};
}

// Per-scenario constants drawn once, before any per-frame noise.
struct Draws {
  double ego_speed;
  double gap;
  double far_gap;
  double side_x;
  double length_a;
  double length_b;
  double width_a;
  double width_b;
};

}  // namespace

std::string_view to_string(Template t) { return kTemplateNames[static_cast<std::size_t>(t)]; }

std::optional<Template> parse_template(std::string_view text) {
  for (std::size_t i = 0; i < kTemplateNames.size(); ++i)
    if (kTemplateNames[i] == text) return static_cast<Template>(i);
  return std::nullopt;
}

GeneratorConfig default_generator_config(std::uint64_t seed) {
  GeneratorConfig cfg;
  cfg.seed = seed;
  cfg.clusters = {{0, Template::kCarFollowing, 6, 10, {}},
                  {1, Template::kSignalledIntersection, 6, 10, {}},
                  {2, Template::kLaneChange, 6, 10, {}}};
  return cfg;
}

void check_config(const ClusterSpec& spec) {
  if (spec.min_frames < 1 || spec.min_frames > spec.max_frames)
    throw Error(ErrorCode::kValidation, "cluster " + std::to_string(spec.cluster_id) +
                                            ": frame range must satisfy 1 <= min <= max");
  if (spec.jitter.position < 0.0 || spec.jitter.speed < 0.0 || spec.jitter.heading < 0.0)
    throw Error(ErrorCode::kValidation,
                "cluster " + std::to_string(spec.cluster_id) + ": noise scales must be >= 0");
}

void check_config(const GeneratorConfig& cfg) {
  std::set<std::int64_t> ids;
  for (const auto& c : cfg.clusters) {
    check_config(c);
    if (!ids.insert(c.cluster_id).second)
      throw Error(ErrorCode::kValidation, "duplicate cluster_id " + std::to_string(c.cluster_id));
  }
  if (cfg.scenarios_per_cluster < 1)
    throw Error(ErrorCode::kValidation, "scenarios_per_cluster must be >= 1");
  if (cfg.visual_styles < 2) throw Error(ErrorCode::kValidation, "visual_styles must be >= 2");
}

ScenarioPrimitive generate_scenario(const ClusterSpec& spec, std::int64_t style_id, std::uint64_t seed,
                                    const std::string& scenario_id) {
  check_config(spec);
  Rng rng(seed);
  const int frames = static_cast<int>(rng.uniform_int(spec.min_frames, spec.max_frames));
  const StyleLook look = style_look(style_id, rng);
  const double w = look.lane_width;
  const Jitter& J = spec.jitter;

  Draws d;
  d.ego_speed = rng.uniform(8.0, 14.0);
  d.gap = rng.uniform(12.0, 16.0);
  d.far_gap = rng.uniform(30.0, 36.0);
  d.side_x = rng.uniform(30.0, 38.0);
  d.length_a = look.vehicle_length + rng.jitter(0.2);
  d.length_b = look.vehicle_length + rng.jitter(0.2);
  d.width_a = look.vehicle_width + rng.jitter(0.05);
  d.width_b = look.vehicle_width + rng.jitter(0.05);

  ScenarioPrimitive s;
  s.scenario_id = scenario_id;
  s.metadata["style"] = std::to_string(style_id);
  s.metadata["template"] = std::string(to_string(spec.templ));

  for (int j = 0; j < frames; ++j) {
    const double p = frames > 1 ? static_cast<double>(j) / (frames - 1) : 0.0;
    FrameRecord rec;
    rec.timestamp = j;
    auto lane_y = [&](double y) { return y + rng.jitter(0.5 * J.position); };
    auto ego = [&](double speed, double heading) {
      rec.entities.push_back({kEgoId, EntityKind::kEgo,
                              EgoState{std::max(0.0, speed + rng.jitter(J.speed)),
                                       wrap_angle(heading + rng.jitter(J.heading))}});
    };

    switch (spec.templ) {
      case Template::kCarFollowing: {
        ego(d.ego_speed, 0.0);
        rec.entities.push_back(lane(kLaneOwn, 0, lane_y(0.0), w));
        rec.entities.push_back(lane(kLaneLeft, 1, lane_y(w), w));
        const double lead_x = d.gap + 3.0 * std::sin(kPi * p) + rng.jitter(J.position);
        rec.entities.push_back(vehicle(kVehicleA, {lead_x, rng.jitter(J.position)},
                                       d.ego_speed + rng.jitter(J.speed), rng.jitter(J.heading),
                                       d.length_a, d.width_a));
        rec.entities.push_back(vehicle(kVehicleB, {d.far_gap + 6.0 * p + rng.jitter(J.position),
                                                   w + rng.jitter(J.position)},
                                       d.ego_speed + 1.0 + rng.jitter(J.speed), rng.jitter(J.heading),
                                       d.length_b, d.width_b));
        rec.entities.push_back(sign(kSignSide,
                                    {d.side_x - 2.0 * j + rng.jitter(J.position),
                                     -(0.5 * w + 6.0) + rng.jitter(J.position)},
                                    look.side_sign));
        break;
      }
      case Template::kSignalledIntersection: {
        ego(d.ego_speed - 4.0 * p, 0.0);
        rec.entities.push_back(lane(kLaneOwn, 0, lane_y(0.0), w));
        rec.entities.push_back(lane(kLaneLeft, 1, lane_y(w), w));
        // The signal jumps from beyond the governance radius to well inside it.
        const double sx = (p < 0.5 ? 60.0 + 16.0 * (0.5 - p) : 40.0 - 40.0 * (p - 0.5)) +
                          rng.jitter(J.position);
        SignalState sig;
        sig.position = {sx, -(0.5 * w + 1.5) + rng.jitter(J.position)};
        sig.phase = p < 0.7 ? SignalPhase::kRed : SignalPhase::kGreen;
        rec.entities.push_back({kSignal, EntityKind::kTrafficSignal, sig});
        rec.entities.push_back(vehicle(kVehicleA,
                                       {sx + 8.0 + rng.jitter(J.position),
                                        -(14.0 - 6.0 * p) + rng.jitter(J.position)},
                                       6.0 + rng.jitter(J.speed), 0.5 * kPi + rng.jitter(J.heading),
                                       d.length_a, d.width_a));
        break;
      }
      case Template::kLaneChange: {
        const double shift = p < 0.5 ? 1.6 * p : w * (0.75 + 0.5 * (p - 0.5));
        const double heading = (p > 0.3 && p < 0.7) ? 0.15 : 0.0;
        ego(d.ego_speed, heading);
        rec.entities.push_back(lane(kLaneOwn, 0, lane_y(-shift), w));
        rec.entities.push_back(lane(kLaneLeft, 1, lane_y(w - shift), w));
        rec.entities.push_back(vehicle(kVehicleA,
                                       {d.gap + 4.0 - 8.0 * p + rng.jitter(J.position),
                                        -shift + rng.jitter(J.position)},
                                       d.ego_speed - 3.0 + rng.jitter(J.speed), rng.jitter(J.heading),
                                       d.length_a, d.width_a));
        rec.entities.push_back(vehicle(kVehicleB,
                                       {d.far_gap + 2.0 + rng.jitter(J.position),
                                        w - shift + rng.jitter(J.position)},
                                       d.ego_speed + rng.jitter(J.speed), rng.jitter(J.heading),
                                       d.length_b, d.width_b));
        break;
      }
      case Template::kStopSign: {
        ego(d.ego_speed * (1.0 - 0.8 * p), 0.0);
        rec.entities.push_back(lane(kLaneOwn, 0, lane_y(0.0), w));
        const double sx = (p < 0.4 ? 58.0 + 20.0 * (0.4 - p) : 35.0 - 50.0 * (p - 0.4)) +
                          rng.jitter(J.position);
        SignState stop;
        stop.sign_class = SignClass::kStop;
        rec.entities.push_back(
            sign(kSignGoverning, {sx, -(0.5 * w + 1.2) + rng.jitter(J.position)}, stop));
        rec.entities.push_back(sign(kSignSide,
                                    {-10.0 - 1.5 * j + rng.jitter(J.position), -5.0 + rng.jitter(J.position)},
                                    look.side_sign));
        rec.entities.push_back(vehicle(kVehicleA, {sx + 10.0 + rng.jitter(J.position), 9.0 + rng.jitter(J.position)},
                                       rng.uniform(0.0, J.speed), -0.5 * kPi + rng.jitter(J.heading),
                                       d.length_a, d.width_a));
        break;
      }
      case Template::kMerge: {
        ego(d.ego_speed, 0.0);
        rec.entities.push_back(lane(kLaneOwn, 0, lane_y(0.0), w));
        rec.entities.push_back(lane(kLaneRamp, 2, lane_y(-w), w));
        const double merge_y = p < 0.5 ? -w : 0.0;
        rec.entities.push_back(vehicle(kVehicleA,
                                       {d.gap - 1.0 + rng.jitter(J.position), merge_y + rng.jitter(J.position)},
                                       d.ego_speed + rng.jitter(J.speed),
                                       (p < 0.5 ? 0.1 : 0.0) + rng.jitter(J.heading), d.length_a, d.width_a));
        rec.entities.push_back(vehicle(kVehicleB, {-18.0 + rng.jitter(J.position), rng.jitter(J.position)},
                                       d.ego_speed + rng.jitter(J.speed), rng.jitter(J.heading),
                                       d.length_b, d.width_b));
        break;
      }
    }
    s.frames.push_back(build_graph(rec));
  }
  return s;
}

LabeledDataset generate_dataset(const GeneratorConfig& cfg) {
  check_config(cfg);
  LabeledDataset ds;
  const auto per = static_cast<std::uint64_t>(cfg.scenarios_per_cluster);
  for (std::size_t c = 0; c < cfg.clusters.size(); ++c) {
    const auto& spec = cfg.clusters[c];
    for (std::uint64_t i = 0; i < per; ++i) {
      const std::uint64_t global = c * per + i;
      const auto style = static_cast<std::int64_t>(i % static_cast<std::uint64_t>(cfg.visual_styles));
      char id[64];
      std::snprintf(id, sizeof(id), "%s%lld-%04llu", cfg.id_prefix.c_str(),
                    static_cast<long long>(spec.cluster_id), static_cast<unsigned long long>(i));
      ScenarioPrimitive s = generate_scenario(spec, style, cfg.seed ^ global, id);
      s.metadata["cluster"] = std::to_string(spec.cluster_id);
      ds.labels[s.scenario_id] = spec.cluster_id;
      ds.styles[s.scenario_id] = style;
      ds.scenarios.push_back(std::move(s));
    }
  }
  return ds;
}

namespace {

void soft_histogram(std::vector<double>& out, std::size_t offset, std::size_t bins, double lo, double hi,
                    double sigma, const std::vector<double>& values, double scale) {
  if (values.empty()) return;
  std::vector<double> h(bins, 0.0);
  for (double v : values) {
    for (std::size_t b = 0; b < bins; ++b) {
      const double center = lo + (hi - lo) * (static_cast<double>(b) + 0.5) / static_cast<double>(bins);
      const double z = (v - center) / sigma;
      h[b] += std::exp(-0.5 * z * z);
    }
  }
  double total = 0.0;
  for (double x : h) total += x;
  if (total <= 0.0) return;
  for (std::size_t b = 0; b < bins; ++b) out[offset + b] += scale * h[b] / total;
}

}  // namespace

std::vector<double> visual_feature(const ScenarioPrimitive& s) {
  std::vector<double> f(kVisualFeatureDim, 0.0);
  std::int64_t style = 0;
  if (auto it = s.metadata.find("style"); it != s.metadata.end()) {
    try {
      style = std::stoll(it->second);
    } catch (const std::exception&) {
      style = 0;
    }
  }
  f[static_cast<std::size_t>(((style % 16) + 16) % 16)] = 1.0;

  std::vector<double> lengths, lane_widths;
  std::array<double, kEntityKindCount> kinds{};
  std::array<double, kRelationCount> relations{};
  double node_total = 0.0, edge_total = 0.0;
  for (const auto& g : s.frames) {
    for (const auto& n : g.nodes) {
      kinds[rank(n.kind)] += 1.0;
      node_total += 1.0;
      if (const auto* v = std::get_if<VehicleState>(&n.state)) lengths.push_back(v->length);
      if (const auto* l = std::get_if<LaneState>(&n.state)) lane_widths.push_back(l->width);
    }
    for (const auto& e : g.edges) {
      relations[rank(e.kind)] += 1.0;
      edge_total += 1.0;
    }
  }
  soft_histogram(f, 16, 16, 3.4, 5.8, 0.25, lengths, 0.6);
  soft_histogram(f, 32, 16, 3.1, 3.8, 0.05, lane_widths, 0.6);
  constexpr double kLeak = 0.15;
  for (std::size_t k = 0; k < kEntityKindCount; ++k)
    f[48 + k] = node_total > 0.0 ? kLeak * kinds[k] / node_total : 0.0;
  for (std::size_t r = 0; r < kRelationCount; ++r)
    f[48 + kEntityKindCount + r] = edge_total > 0.0 ? kLeak * relations[r] / edge_total : 0.0;

  double norm = 0.0;
  for (double x : f) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : f) x /= norm;
  return f;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimMismatch, "cosine of unequal lengths");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

void write_labels_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "scenario_id,cluster_id,style_id\n";
  for (const auto& s : ds.scenarios) {
    out << s.scenario_id << ',' << ds.labels.at(s.scenario_id) << ',' << ds.styles.at(s.scenario_id)
        << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

LabeledDataset read_labels_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) !=
                                     std::vector<std::string>{"scenario_id", "cluster_id", "style_id"})
    throw Error(ErrorCode::kParse, path.string() + ": line 1: expected header scenario_id,cluster_id,style_id");
  LabeledDataset ds;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 3)
      throw Error(ErrorCode::kParse, path.string() + ": line " + std::to_string(number) + ": expected 3 fields");
    try {
      ds.labels[cells[0]] = std::stoll(cells[1]);
      ds.styles[cells[0]] = std::stoll(cells[2]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, path.string() + ": line " + std::to_string(number) + ": bad integer");
    }
  }
  return ds;
}

}  // namespace scenario_rag
