#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace scenario_rag {

enum class Metric : std::uint8_t { kEuclidean, kCosine };

std::string_view to_string(Metric m);
std::optional<Metric> parse_metric(std::string_view text);

struct IndexMetadata {
  std::string checkpoint_hash;
  std::string build_timestamp;  // ISO-8601 UTC
  Metric metric = Metric::kEuclidean;
};

struct Neighbor {
  std::string id;
  double distance = 0.0;

  bool operator==(const Neighbor&) const = default;
};

// Ascending by distance, ties by id.
using QueryResult = std::vector<Neighbor>;

using Embedding = std::pair<std::string, std::vector<double>>;

// Exact k-NN over f32 vectors. Immutable once built, so concurrent queries are safe.
class VectorIndex {
 public:
  // Throws Error{kEmpty}, Error{kDimMismatch}, Error{kDuplicateId}.
  static VectorIndex build(const std::vector<Embedding>& entries, IndexMetadata metadata = {});

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const IndexMetadata& metadata() const { return metadata_; }
  // Stored (single-precision) vector of entry i.
  std::span<const float> vector(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  // Distance of the query to entry i under the index metric. Euclidean sums
  // squared differences in entry order in double precision; cosine distance
  // is 1 - cos.
  double distance(std::span<const double> query, std::size_t i) const;

  // Exact top-k (all entries if k exceeds the size). Throws Error{kDimMismatch}
  // and Error{kValidation} for k = 0.
  QueryResult query_topk(std::span<const double> query, std::size_t k) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::vector<double> norms_;  // cosine metric only
  IndexMetadata metadata_;
};

inline VectorIndex build_index(const std::vector<Embedding>& entries, IndexMetadata metadata = {}) {
  return VectorIndex::build(entries, std::move(metadata));
}
inline QueryResult query_topk(const VectorIndex& index, std::span<const double> query, std::size_t k) {
  return index.query_topk(query, k);
}

inline constexpr std::uint32_t kIndexVersion = 1;

// Little-endian "VIDX" file: version, dim, count, entries (id, D x f32), then
// a length-prefixed JSON metadata block.
void save_index(const VectorIndex& index, const std::filesystem::path& path);
// Throws Error{kIo}, Error{kVersionMismatch} for a foreign magic or version,
// Error{kCorruptFile} with the offending byte offset.
VectorIndex load_index(const std::filesystem::path& path);

struct LabeledQuery {
  std::string id;  // matched against index ids for self-exclusion; may be empty
  std::vector<double> vector;
  std::int64_t cluster = 0;
};

// Mean over queries of (same-cluster hits among the top k, after dropping a
// result whose id equals the query id) / k. Throws Error{kUnknownId} if a
// retrieved id has no label, Error{kEmpty} without queries.
double recall_at_k(const VectorIndex& index, const std::map<std::string, std::int64_t>& labels,
                   const std::vector<LabeledQuery>& queries, std::size_t k);

// Cluster-then-scan accelerator over an exact index: k-means centroids
// partition the entries and a query scans only the `probes` nearest lists.
// Answers are approximate unless probes == lists.
class CoarseIndex {
 public:
  CoarseIndex(const VectorIndex& exact, std::size_t lists, std::uint64_t seed, int iterations = 10);

  std::size_t lists() const { return centroids_.size(); }
  QueryResult query_topk(std::span<const double> query, std::size_t k, std::size_t probes) const;

 private:
  const VectorIndex* exact_;
  std::vector<std::vector<double>> centroids_;
  std::vector<std::vector<std::size_t>> members_;
};

// Fraction of exact top-k ids the coarse index also returns, over the queries.
double coarse_recall(const CoarseIndex& coarse, const VectorIndex& exact, const std::vector<std::vector<double>>& queries,
                     std::size_t k, std::size_t probes);

struct BenchRow {
  std::size_t size = 0;
  double mean_us = 0.0;
  double p99_us = 0.0;
  std::uint64_t answer_digest = 0;  // FNV-1a over the returned ids; timing-free
};

// Builds a seeded random index per size (ascending sizes) and times
// `queries_per_size` top-k queries after a warm-up pass.
std::vector<BenchRow> bench_latency(const std::vector<std::size_t>& sizes, std::size_t queries_per_size,
                                    std::size_t dim, std::uint64_t seed, std::size_t k = 10);

// CSV "size,mean_us,p99_us".
void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path);
std::vector<BenchRow> read_bench_csv(const std::filesystem::path& path);

// CSV "scenario_id,v0,...,v{D-1}".
void write_vectors_csv(const std::vector<Embedding>& vectors, const std::filesystem::path& path);
std::vector<Embedding> read_vectors_csv(const std::filesystem::path& path);

}  // namespace scenario_rag
