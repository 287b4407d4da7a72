#include "scenario_rag/retrieval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "scenario_rag/binary_io.hpp"
#include "scenario_rag/csv.hpp"
#include "scenario_rag/error.hpp"
#include "scenario_rag/random.hpp"

namespace scenario_rag {

namespace {

constexpr char kMagic[4] = {'V', 'I', 'D', 'X'};

void check_query(std::size_t got, std::size_t dim) {
  if (got != dim)
    throw Error(ErrorCode::kDimMismatch,
                "query has dimension " + std::to_string(got) + ", index has " + std::to_string(dim));
}

// Keeps the k best (distance, entry) pairs ordered by distance then id.
QueryResult select_topk(std::vector<std::pair<double, std::size_t>>& scored, const std::vector<std::string>& ids,
                        std::size_t k) {
  auto less = [&ids](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return ids[a.second] < ids[b.second];
  };
  k = std::min(k, scored.size());
  if (k < scored.size()) std::nth_element(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), less);
  std::sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), less);
  QueryResult out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids[scored[i].second], scored[i].first});
  return out;
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::string_view to_string(Metric m) { return m == Metric::kCosine ? "cosine" : "euclidean"; }

std::optional<Metric> parse_metric(std::string_view text) {
  if (text == "euclidean") return Metric::kEuclidean;
  if (text == "cosine") return Metric::kCosine;
  return std::nullopt;
}

VectorIndex VectorIndex::build(const std::vector<Embedding>& entries, IndexMetadata metadata) {
  if (entries.empty()) throw Error(ErrorCode::kEmpty, "cannot build an index without vectors");
  VectorIndex idx;
  idx.dim_ = entries.front().second.size();
  if (idx.dim_ == 0) throw Error(ErrorCode::kDimMismatch, "vectors must have at least one dimension");
  idx.metadata_ = std::move(metadata);
  std::unordered_set<std::string> seen;
  idx.ids_.reserve(entries.size());
  idx.data_.reserve(entries.size() * idx.dim_);
  for (const auto& [id, v] : entries) {
    if (v.size() != idx.dim_)
      throw Error(ErrorCode::kDimMismatch, "vector '" + id + "' has dimension " + std::to_string(v.size()) +
                                               ", expected " + std::to_string(idx.dim_));
    if (!seen.insert(id).second) throw Error(ErrorCode::kDuplicateId, "duplicate id '" + id + "'");
    for (double x : v) {
      if (!std::isfinite(x)) throw Error(ErrorCode::kValidation, "vector '" + id + "' has a non-finite entry");
      idx.data_.push_back(static_cast<float>(x));
    }
    idx.ids_.push_back(id);
  }
  if (idx.metadata_.metric == Metric::kCosine) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      double n = 0.0;
      for (float x : idx.vector(i)) n += static_cast<double>(x) * x;
      idx.norms_.push_back(std::sqrt(n));
    }
  }
  return idx;
}

double VectorIndex::distance(std::span<const double> query, std::size_t i) const {
  const std::span<const float> v = vector(i);
  if (metadata_.metric == Metric::kEuclidean) {
    double sum = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double diff = query[d] - static_cast<double>(v[d]);
      sum += diff * diff;
    }
    return std::sqrt(sum);
  }
  double dot = 0.0, qn = 0.0;
  for (std::size_t d = 0; d < dim_; ++d) {
    dot += query[d] * static_cast<double>(v[d]);
    qn += query[d] * query[d];
  }
  const double denom = std::sqrt(qn) * norms_[i];
  if (denom == 0.0) return 1.0;
  return std::max(0.0, 1.0 - dot / denom);
}

QueryResult VectorIndex::query_topk(std::span<const double> query, std::size_t k) const {
  check_query(query.size(), dim_);
  if (k == 0) throw Error(ErrorCode::kValidation, "k must be >= 1");
  std::vector<std::pair<double, std::size_t>> scored(size());
  for (std::size_t i = 0; i < size(); ++i) scored[i] = {distance(query, i), i};
  return select_topk(scored, ids_, k);
}

void save_index(const VectorIndex& index, const std::filesystem::path& path) {
  binary::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u64(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    w.str(index.ids()[i]);
    for (float x : index.vector(i)) w.f32(x);
  }
  nlohmann::ordered_json meta;
  meta["count"] = index.size();
  meta["checkpoint_hash"] = index.metadata().checkpoint_hash;
  meta["build_timestamp"] = index.metadata().build_timestamp;
  meta["metric"] = std::string(to_string(index.metadata().metric));
  w.str(meta.dump());
  binary::write_file(path, w.data());
}

VectorIndex load_index(const std::filesystem::path& path) {
  binary::Reader r(binary::read_file(path), path.string());
  char magic[4];
  if (r.remaining() < 4) throw Error(ErrorCode::kVersionMismatch, path.string() + ": not an index file");
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::kVersionMismatch, path.string() + ": bad magic, not an index file");
  const std::uint32_t version = r.u32("version");
  if (version != kIndexVersion)
    throw Error(ErrorCode::kVersionMismatch,
                path.string() + ": index version " + std::to_string(version) + " is not supported");
  const std::size_t dim_at = r.offset();
  const std::uint32_t dim = r.u32("dim");
  if (dim == 0) r.fail_at(dim_at, "dimension is zero");
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.u64("count");
  // Each entry needs at least a 4-byte id length and its floats.
  if (count == 0 || count > r.remaining() / (4 + 4ULL * dim)) r.fail_at(count_at, "entry count does not fit the file");

  std::vector<Embedding> entries;
  entries.reserve(count);
  std::unordered_set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t entry_at = r.offset();
    std::string id = r.str("entry id");
    if (!seen.insert(id).second) r.fail_at(entry_at, "duplicate id '" + id + "'");
    std::vector<double> v(dim);
    for (auto& x : v) {
      const float f = r.f32("entry vector");
      if (!std::isfinite(f)) r.fail("non-finite vector component");
      x = f;
    }
    entries.emplace_back(std::move(id), std::move(v));
  }
  const std::size_t meta_at = r.offset();
  const std::string text = r.str("metadata");
  if (!r.at_end()) r.fail("trailing bytes after metadata");
  IndexMetadata meta;
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("count").get<std::uint64_t>() != count) r.fail_at(meta_at, "metadata count disagrees with entries");
    meta.checkpoint_hash = j.at("checkpoint_hash").get<std::string>();
    meta.build_timestamp = j.at("build_timestamp").get<std::string>();
    const auto metric = parse_metric(j.at("metric").get<std::string>());
    if (!metric) r.fail_at(meta_at, "unknown metric in metadata");
    meta.metric = *metric;
  } catch (const nlohmann::json::exception& e) {
    r.fail_at(meta_at, std::string("bad metadata: ") + e.what());
  }
  return VectorIndex::build(entries, std::move(meta));
}

double recall_at_k(const VectorIndex& index, const std::map<std::string, std::int64_t>& labels,
                   const std::vector<LabeledQuery>& queries, std::size_t k) {
  if (queries.empty()) throw Error(ErrorCode::kEmpty, "recall needs at least one query");
  if (k == 0) throw Error(ErrorCode::kValidation, "k must be >= 1");
  double total = 0.0;
  for (const auto& q : queries) {
    const QueryResult res = index.query_topk(q.vector, k + 1);
    std::size_t taken = 0, hits = 0;
    for (const auto& n : res) {
      if (taken == k) break;
      if (!q.id.empty() && n.id == q.id) continue;
      const auto it = labels.find(n.id);
      if (it == labels.end()) throw Error(ErrorCode::kUnknownId, "no label for retrieved id '" + n.id + "'");
      if (it->second == q.cluster) ++hits;
      ++taken;
    }
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / static_cast<double>(queries.size());
}

CoarseIndex::CoarseIndex(const VectorIndex& exact, std::size_t lists, std::uint64_t seed, int iterations)
    : exact_(&exact) {
  if (lists == 0) throw Error(ErrorCode::kValidation, "coarse index needs at least one list");
  const std::size_t n = exact.size(), dim = exact.dim();
  lists = std::min(lists, n);
  // Seeds are distinct entries drawn by a partial Fisher-Yates shuffle.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < lists; ++i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
    std::swap(order[i], order[j]);
    const auto v = exact.vector(order[i]);
    centroids_.emplace_back(v.begin(), v.end());
  }
  std::vector<std::size_t> assign(n, 0);
  auto nearest = [&](std::span<const float> v) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids_.size(); ++c) {
      double d = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = static_cast<double>(v[k]) - centroids_[c][k];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    return best;
  };
  for (int it = 0; it <= iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) assign[i] = nearest(exact.vector(i));
    if (it == iterations) break;
    std::vector<std::vector<double>> sums(centroids_.size(), std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(centroids_.size(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto v = exact.vector(i);
      for (std::size_t k = 0; k < dim; ++k) sums[assign[i]][k] += v[k];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < centroids_.size(); ++c)
      if (counts[c] > 0)
        for (std::size_t k = 0; k < dim; ++k) centroids_[c][k] = sums[c][k] / static_cast<double>(counts[c]);
  }
  members_.assign(centroids_.size(), {});
  for (std::size_t i = 0; i < n; ++i) members_[assign[i]].push_back(i);
}

QueryResult CoarseIndex::query_topk(std::span<const double> query, std::size_t k, std::size_t probes) const {
  check_query(query.size(), exact_->dim());
  if (k == 0) throw Error(ErrorCode::kValidation, "k must be >= 1");
  std::vector<std::pair<double, std::size_t>> lists;
  for (std::size_t c = 0; c < centroids_.size(); ++c) {
    double d = 0.0;
    for (std::size_t i = 0; i < query.size(); ++i) {
      const double diff = query[i] - centroids_[c][i];
      d += diff * diff;
    }
    lists.emplace_back(d, c);
  }
  probes = std::clamp<std::size_t>(probes, 1, lists.size());
  std::partial_sort(lists.begin(), lists.begin() + static_cast<std::ptrdiff_t>(probes), lists.end());
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t p = 0; p < probes; ++p)
    for (std::size_t i : members_[lists[p].second]) scored.emplace_back(exact_->distance(query, i), i);
  return select_topk(scored, exact_->ids(), k);
}

double coarse_recall(const CoarseIndex& coarse, const VectorIndex& exact, const std::vector<std::vector<double>>& queries,
                     std::size_t k, std::size_t probes) {
  if (queries.empty()) throw Error(ErrorCode::kEmpty, "recall needs at least one query");
  double found = 0.0, wanted = 0.0;
  for (const auto& q : queries) {
    const QueryResult truth = exact.query_topk(q, k);
    const QueryResult approx = coarse.query_topk(q, k, probes);
    std::unordered_set<std::string> got;
    for (const auto& n : approx) got.insert(n.id);
    for (const auto& n : truth) found += got.count(n.id) ? 1.0 : 0.0;
    wanted += static_cast<double>(truth.size());
  }
  return found / wanted;
}

std::vector<BenchRow> bench_latency(const std::vector<std::size_t>& sizes, std::size_t queries_per_size,
                                    std::size_t dim, std::uint64_t seed, std::size_t k) {
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw Error(ErrorCode::kValidation, "bench sizes must be ascending");
  if (queries_per_size == 0 || dim == 0) throw Error(ErrorCode::kValidation, "bench needs queries and a dimension");
  using Clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;
  for (std::size_t size : sizes) {
    if (size == 0) throw Error(ErrorCode::kValidation, "bench sizes must be positive");
    Rng data_rng = Rng::stream(seed, size);
    std::vector<Embedding> entries;
    entries.reserve(size);
    char id[32];
    for (std::size_t i = 0; i < size; ++i) {
      std::snprintf(id, sizeof id, "v%09zu", i);
      std::vector<double> v(dim);
      for (auto& x : v) x = data_rng.uniform(-1.0, 1.0);
      entries.emplace_back(id, std::move(v));
    }
    const VectorIndex index = VectorIndex::build(entries);
    entries.clear();
    Rng query_rng = Rng::stream(seed ^ 0x51554552ULL, size);
    std::vector<std::vector<double>> queries(queries_per_size, std::vector<double>(dim));
    for (auto& q : queries)
      for (auto& x : q) x = query_rng.uniform(-1.0, 1.0);

    const std::size_t warmup = std::min<std::size_t>(queries_per_size, 5);
    for (std::size_t i = 0; i < warmup; ++i) (void)index.query_topk(queries[i], k);

    BenchRow row;
    row.size = size;
    row.answer_digest = 0xcbf29ce484222325ULL;
    std::vector<double> micros;
    micros.reserve(queries_per_size);
    for (const auto& q : queries) {
      const auto start = Clock::now();
      const QueryResult res = index.query_topk(q, k);
      micros.push_back(std::chrono::duration<double, std::micro>(Clock::now() - start).count());
      for (const auto& n : res) row.answer_digest = fnv1a(row.answer_digest, n.id);
    }
    row.mean_us = std::accumulate(micros.begin(), micros.end(), 0.0) / static_cast<double>(micros.size());
    std::sort(micros.begin(), micros.end());
    const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(micros.size())));
    row.p99_us = micros[std::max<std::size_t>(rank, 1) - 1];
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_output(path);
  out << "size,mean_us,p99_us\n";
  for (const auto& r : rows) out << r.size << ',' << format_double(r.mean_us) << ',' << format_double(r.p99_us) << '\n';
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

std::vector<BenchRow> read_bench_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line) || line != "size,mean_us,p99_us")
    throw Error(ErrorCode::kParse, path.string() + ": bad bench CSV header");
  std::vector<BenchRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 3)
      throw Error(ErrorCode::kParse, path.string() + ": line " + std::to_string(line_no) + ": expected 3 fields");
    const double size = parse_double(cells[0]);
    if (!(size >= 1.0) || size != std::floor(size))
      throw Error(ErrorCode::kParse, path.string() + ": line " + std::to_string(line_no) + ": bad size");
    rows.push_back({static_cast<std::size_t>(size), parse_double(cells[1]), parse_double(cells[2]), 0});
  }
  return rows;
}

void write_vectors_csv(const std::vector<Embedding>& vectors, const std::filesystem::path& path) {
  if (vectors.empty()) throw Error(ErrorCode::kEmpty, "no vectors to write");
  std::ofstream out = open_output(path);
  const std::size_t dim = vectors.front().second.size();
  out << "scenario_id";
  for (std::size_t d = 0; d < dim; ++d) out << ",v" << d;
  out << '\n';
  for (const auto& [id, v] : vectors) {
    if (v.size() != dim) throw Error(ErrorCode::kDimMismatch, "vector '" + id + "' has the wrong dimension");
    out << id;
    for (double x : v) out << ',' << format_double(x);
    out << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

std::vector<Embedding> read_vectors_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, path.string() + ": empty vectors file");
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "scenario_id")
    throw Error(ErrorCode::kParse, path.string() + ": header must start with scenario_id");
  for (std::size_t d = 1; d < header.size(); ++d)
    if (header[d] != "v" + std::to_string(d - 1))
      throw Error(ErrorCode::kParse, path.string() + ": unexpected header column '" + header[d] + "'");
  std::vector<Embedding> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCode::kParse, path.string() + ": line " + std::to_string(line_no) + ": wrong field count");
    std::vector<double> v;
    for (std::size_t d = 1; d < cells.size(); ++d) v.push_back(parse_double(cells[d]));
    out.emplace_back(cells[0], std::move(v));
  }
  return out;
}

}  // namespace scenario_rag
