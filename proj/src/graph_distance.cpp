#include "scenario_rag/graph_distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <tuple>
#include <unordered_map>

#include "scenario_rag/csv.hpp"
#include "scenario_rag/error.hpp"

namespace scenario_rag {

namespace {

std::uint64_t edge_key(std::size_t src_kind, std::size_t src_rank, std::size_t dst_kind, std::size_t dst_rank,
                       std::size_t relation) {
  return (static_cast<std::uint64_t>(src_kind) << 40) | (static_cast<std::uint64_t>(src_rank) << 24) |
         (static_cast<std::uint64_t>(dst_kind) << 20) | (static_cast<std::uint64_t>(dst_rank) << 4) |
         static_cast<std::uint64_t>(relation);
}

struct Accumulated {
  double sum = 0.0;
  std::size_t length = 0;
};

bool better(const Accumulated& a, const Accumulated& b) {
  return std::tie(a.sum, a.length) < std::tie(b.sum, b.length);
}

std::vector<FrameSummary> summarize_all(const ScenarioPrimitive& s) {
  if (s.frames.empty()) throw Error(ErrorCode::kEmptySequence, s.scenario_id + " has no frames");
  std::vector<FrameSummary> out;
  out.reserve(s.frames.size());
  for (const auto& f : s.frames) out.push_back(summarize(f));
  return out;
}

}  // namespace

void check_weights(const FrameDistanceWeights& w) {
  if (w.w_node < 0.0 || w.w_edge < 0.0 || w.w_attr < 0.0)
    throw Error(ErrorCode::kValidation, "frame distance weights must be >= 0");
  if (w.w_node == 0.0 && w.w_edge == 0.0 && w.w_attr == 0.0)
    throw Error(ErrorCode::kValidation, "frame distance weights must not all be zero");
}

FrameSummary summarize(const SemanticGraph& g) {
  if (!is_canonical(g)) throw Error(ErrorCode::kNonCanonicalInput, "graph is not in canonical order");
  FrameSummary s;
  std::unordered_map<EntityId, std::pair<std::size_t, std::size_t>> slot;  // id -> (kind, rank)
  for (const auto& n : g.nodes) {
    const std::size_t k = rank(n.kind);
    const Point2 p = node_position(n);
    slot[n.entity_id] = {k, s.attrs[k].size()};
    s.attrs[k].push_back({p.x, p.y, node_speed(n)});
    ++s.kind_counts[k];
    ++s.node_count;
  }
  for (const auto& e : g.edges) {
    auto src = slot.find(e.src);
    auto dst = slot.find(e.dst);
    if (src == slot.end() || dst == slot.end())
      throw Error(ErrorCode::kValidation, "edge references an absent node");
    s.edge_keys.push_back(
        edge_key(src->second.first, src->second.second, dst->second.first, dst->second.second, rank(e.kind)));
  }
  std::sort(s.edge_keys.begin(), s.edge_keys.end());
  s.edge_keys.erase(std::unique(s.edge_keys.begin(), s.edge_keys.end()), s.edge_keys.end());
  return s;
}

double frame_distance(const FrameSummary& a, const FrameSummary& b, const FrameDistanceWeights& w) {
  double node_term = 0.0;
  for (std::size_t k = 0; k < kEntityKindCount; ++k)
    node_term += std::abs(a.kind_counts[k] - b.kind_counts[k]);
  const int max_nodes = std::max(a.node_count, b.node_count);
  node_term = max_nodes > 0 ? node_term / max_nodes : 0.0;

  double edge_term = 0.0;
  if (!a.edge_keys.empty() || !b.edge_keys.empty()) {
    std::size_t common = 0;
    auto ia = a.edge_keys.begin();
    auto ib = b.edge_keys.begin();
    while (ia != a.edge_keys.end() && ib != b.edge_keys.end()) {
      if (*ia < *ib) {
        ++ia;
      } else if (*ib < *ia) {
        ++ib;
      } else {
        ++common;
        ++ia;
        ++ib;
      }
    }
    const std::size_t unioned = a.edge_keys.size() + b.edge_keys.size() - common;
    edge_term = 1.0 - static_cast<double>(common) / static_cast<double>(unioned);
  }

  double attr_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t k = 0; k < kEntityKindCount; ++k) {
    const auto& xa = a.attrs[k];
    const auto& xb = b.attrs[k];
    const std::size_t matched = std::min(xa.size(), xb.size());
    for (std::size_t r = 0; r < matched; ++r) {
      const double dx = (xa[r].x - xb[r].x) / kPositionScale;
      const double dy = (xa[r].y - xb[r].y) / kPositionScale;
      const double dv = (xa[r].speed - xb[r].speed) / kSpeedScale;
      attr_sum += std::min(1.0, std::sqrt(dx * dx + dy * dy + dv * dv));
    }
    const std::size_t unmatched = std::max(xa.size(), xb.size()) - matched;
    attr_sum += static_cast<double>(unmatched);
    pairs += matched + unmatched;
  }
  const double attr_term = pairs > 0 ? attr_sum / static_cast<double>(pairs) : 0.0;

  return w.w_node * node_term + w.w_edge * edge_term + w.w_attr * attr_term;
}

double frame_distance(const SemanticGraph& a, const SemanticGraph& b, const FrameDistanceWeights& w) {
  return frame_distance(summarize(a), summarize(b), w);
}

double graph_dtw(const std::vector<FrameSummary>& a, const std::vector<FrameSummary>& b,
                 const FrameDistanceWeights& w) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::kEmptySequence, "DTW of an empty sequence");
  const std::size_t rows = a.size();
  const std::size_t cols = b.size();
  std::vector<Accumulated> acc(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      Accumulated best;
      if (i == 0 && j == 0) {
        best = {0.0, 0};
      } else {
        bool have = false;
        auto consider = [&](std::size_t pi, std::size_t pj) {
          const Accumulated& c = acc[pi * cols + pj];
          if (!have || better(c, best)) {
            best = c;
            have = true;
          }
        };
        if (i > 0 && j > 0) consider(i - 1, j - 1);
        if (i > 0) consider(i - 1, j);
        if (j > 0) consider(i, j - 1);
      }
      acc[i * cols + j] = {best.sum + frame_distance(a[i], b[j], w), best.length + 1};
    }
  }
  const Accumulated& end = acc.back();
  return end.sum / static_cast<double>(end.length);
}

double graph_dtw(const ScenarioPrimitive& a, const ScenarioPrimitive& b, const FrameDistanceWeights& w) {
  return graph_dtw(summarize_all(a), summarize_all(b), w);
}

double dtw_brute_force(const ScenarioPrimitive& a, const ScenarioPrimitive& b, const FrameDistanceWeights& w) {
  const std::size_t rows = a.frames.size();
  const std::size_t cols = b.frames.size();
  if (rows == 0 || cols == 0) throw Error(ErrorCode::kEmptySequence, "DTW of an empty sequence");
  if (rows * cols > 36) throw Error(ErrorCode::kTooLarge, "brute-force DTW limited to T1*T2 <= 36");
  const auto sa = summarize_all(a);
  const auto sb = summarize_all(b);
  std::vector<double> cost(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) cost[i * cols + j] = frame_distance(sa[i], sb[j], w);

  Accumulated best{std::numeric_limits<double>::infinity(), 0};
  // Depth-first over every path, summing in path order.
  auto walk = [&](auto&& self, std::size_t i, std::size_t j, Accumulated run) -> void {
    run.sum += cost[i * cols + j];
    run.length += 1;
    if (i + 1 == rows && j + 1 == cols) {
      if (better(run, best)) best = run;
      return;
    }
    if (i + 1 < rows && j + 1 < cols) self(self, i + 1, j + 1, run);
    if (i + 1 < rows) self(self, i + 1, j, run);
    if (j + 1 < cols) self(self, i, j + 1, run);
  };
  walk(walk, 0, 0, Accumulated{0.0, 0});
  return best.sum / static_cast<double>(best.length);
}

DistanceMatrix distance_matrix(const std::vector<ScenarioPrimitive>& dataset, const FrameDistanceWeights& w,
                               unsigned threads) {
  check_weights(w);
  const std::size_t n = dataset.size();
  DistanceMatrix m;
  m.values.assign(n * n, 0.0);
  std::vector<std::vector<FrameSummary>> summaries;
  summaries.reserve(n);
  for (const auto& s : dataset) {
    m.ids.push_back(s.scenario_id);
    summaries.push_back(summarize_all(s));
  }
  auto work = [&](unsigned worker, unsigned stride) {
    for (std::size_t i = worker; i < n; i += stride) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = graph_dtw(summaries[i], summaries[j], w);
        m.at(i, j) = d;
        m.at(j, i) = d;
      }
    }
  };
  threads = std::max(1u, threads);
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
    for (auto& t : pool) t.join();
  }
  return m;
}

double upper_percentile(const DistanceMatrix& m, double percentile) {
  std::vector<double> values;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = i + 1; j < m.size(); ++j) values.push_back(m.at(i, j));
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double rank = std::ceil(percentile / 100.0 * static_cast<double>(values.size()));
  const auto index = static_cast<std::size_t>(std::clamp(rank, 1.0, static_cast<double>(values.size()))) - 1;
  return values[index];
}

void write_distance_csv(const DistanceMatrix& m, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "scenario_id";
  for (const auto& id : m.ids) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < m.size(); ++i) {
    out << m.ids[i];
    for (std::size_t j = 0; j < m.size(); ++j) out << ',' << format_double(m.at(i, j));
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

DistanceMatrix read_distance_csv(const std::filesystem::path& path) {
  auto in = open_input(path);
  auto fail = [&](std::size_t line, const std::string& why) -> Error {
    return Error(ErrorCode::kParse, path.string() + ": line " + std::to_string(line) + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing header");
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "scenario_id") throw fail(1, "header must start with scenario_id");
  DistanceMatrix m;
  m.ids.assign(header.begin() + 1, header.end());
  const std::size_t n = m.ids.size();
  m.values.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw fail(i + 2, "missing row");
    auto cells = split_csv_line(line);
    if (cells.size() != n + 1) throw fail(i + 2, "expected " + std::to_string(n + 1) + " fields");
    if (cells[0] != m.ids[i]) throw fail(i + 2, "row label does not match header order");
    for (std::size_t j = 0; j < n; ++j) {
      try {
        m.at(i, j) = parse_double(cells[j + 1]);
      } catch (const Error& e) {
        throw fail(i + 2, e.what());
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (m.at(i, i) != 0.0) throw Error(ErrorCode::kValidation, "distance matrix diagonal must be zero");
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(m.at(i, j)) || m.at(i, j) < 0.0 || m.at(i, j) != m.at(j, i))
        throw Error(ErrorCode::kValidation, "distance matrix must be finite, non-negative and symmetric");
    }
  }
  return m;
}

}  // namespace scenario_rag
