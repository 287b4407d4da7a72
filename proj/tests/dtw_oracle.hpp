#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "scenario_rag/graph_distance.hpp"

namespace scenario_rag::testing {

// Scalar re-implementation of the frame distance, straight from its definition.
inline double oracle_frame_distance(const SemanticGraph& a, const SemanticGraph& b, const FrameDistanceWeights& w) {
  struct Slot {
    int kind;
    int rank;
  };
  auto slots = [](const SemanticGraph& g) {
    std::map<EntityId, Slot> out;
    int ranks[5] = {0, 0, 0, 0, 0};
    for (const auto& n : g.nodes) {
      const int k = static_cast<int>(n.kind);
      out[n.entity_id] = {k, ranks[k]++};
    }
    return out;
  };
  auto edges = [&](const SemanticGraph& g) {
    const auto s = slots(g);
    std::set<std::string> out;
    for (const auto& e : g.edges)
      out.insert(std::to_string(s.at(e.src).kind) + ":" + std::to_string(s.at(e.src).rank) + ">" +
                 std::to_string(s.at(e.dst).kind) + ":" + std::to_string(s.at(e.dst).rank) + "/" +
                 std::to_string(static_cast<int>(e.kind)));
    return out;
  };
  auto per_kind = [](const SemanticGraph& g) {
    std::vector<std::vector<EntityNode>> out(5);
    for (const auto& n : g.nodes) out[static_cast<int>(n.kind)].push_back(n);
    return out;
  };

  const auto ka = per_kind(a), kb = per_kind(b);
  double hist = 0;
  for (int k = 0; k < 5; ++k) hist += std::abs(static_cast<double>(ka[k].size()) - static_cast<double>(kb[k].size()));
  const double max_nodes = static_cast<double>(std::max(a.nodes.size(), b.nodes.size()));
  const double node_term = max_nodes > 0 ? hist / max_nodes : 0.0;

  const auto ea = edges(a), eb = edges(b);
  double edge_term = 0;
  if (!ea.empty() || !eb.empty()) {
    std::size_t inter = 0;
    for (const auto& e : ea) inter += eb.count(e);
    edge_term = 1.0 - static_cast<double>(inter) / static_cast<double>(ea.size() + eb.size() - inter);
  }

  double total = 0;
  int count = 0;
  for (int k = 0; k < 5; ++k) {
    const std::size_t m = std::max(ka[k].size(), kb[k].size());
    for (std::size_t r = 0; r < m; ++r) {
      ++count;
      if (r >= ka[k].size() || r >= kb[k].size()) {
        total += 1.0;
        continue;
      }
      const Point2 pa = node_position(ka[k][r]), pb = node_position(kb[k][r]);
      const double dx = (pa.x - pb.x) / 50.0, dy = (pa.y - pb.y) / 50.0;
      const double dv = (node_speed(ka[k][r]) - node_speed(kb[k][r])) / 20.0;
      total += std::min(1.0, std::sqrt(dx * dx + dy * dy + dv * dv));
    }
  }
  const double attr_term = count > 0 ? total / count : 0.0;
  return w.w_node * node_term + w.w_edge * edge_term + w.w_attr * attr_term;
}

// Recursive enumeration of warping paths; keeps the lowest cost and, among
// equal costs, the shortest path.
inline void enumerate(const std::vector<std::vector<double>>& cost, std::size_t i, std::size_t j, double acc, int len,
               double& best_cost, int& best_len) {
  acc += cost[i][j];
  ++len;
  const std::size_t n = cost.size(), m = cost[0].size();
  if (i == n - 1 && j == m - 1) {
    if (acc < best_cost || (acc == best_cost && len < best_len)) {
      best_cost = acc;
      best_len = len;
    }
    return;
  }
  if (i + 1 < n) enumerate(cost, i + 1, j, acc, len, best_cost, best_len);
  if (j + 1 < m) enumerate(cost, i, j + 1, acc, len, best_cost, best_len);
  if (i + 1 < n && j + 1 < m) enumerate(cost, i + 1, j + 1, acc, len, best_cost, best_len);
}

inline double oracle_dtw(const ScenarioPrimitive& a, const ScenarioPrimitive& b, const FrameDistanceWeights& w) {
  std::vector<std::vector<double>> cost(a.frames.size(), std::vector<double>(b.frames.size()));
  for (std::size_t i = 0; i < a.frames.size(); ++i)
    for (std::size_t j = 0; j < b.frames.size(); ++j) cost[i][j] = oracle_frame_distance(a.frames[i], b.frames[j], w);
  double best = std::numeric_limits<double>::infinity();
  int len = 0;
  enumerate(cost, 0, 0, 0.0, 0, best, len);
  return best / len;
}

}  // namespace scenario_rag::testing
