#include "scenario_rag/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "scenario_rag/binary_io.hpp"
#include "scenario_rag/csv.hpp"
#include "scenario_rag/error.hpp"

namespace scenario_rag {

namespace binary {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, true);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(ErrorCode::kIo, "failed reading " + path.string());
  return data;
}

void write_file(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out = open_output(path, true);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.close();
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace binary

namespace {

constexpr char kMagic[4] = {'S', 'A', 'E', 'M'};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  check_config(ckpt.config);
  const ModelConfig& c = ckpt.config;
  binary::Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  for (int v : {c.node_feature_dim, c.hidden_dim, c.latent_dim, c.rgcn_layers, c.heads, c.attention_layers,
                c.max_nodes, c.max_frames, c.relation_count, c.decoder_hidden})
    w.u32(static_cast<std::uint32_t>(v));
  w.u32(c.distance_weighting ? 1U : 0U);
  w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, m] : ckpt.params.entries()) {
    w.str(name);
    w.u32(2);
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index col = 0; col < m.cols(); ++col) w.f32(static_cast<float>(m(r, col)));
  }
  binary::write_file(path, w.data());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  binary::Reader r(binary::read_file(path), path.string());
  char magic[4];
  if (r.remaining() < 4) throw Error(ErrorCode::kVersionMismatch, path.string() + ": not a checkpoint file");
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::kVersionMismatch, path.string() + ": bad magic, not a checkpoint file");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw Error(ErrorCode::kVersionMismatch,
                path.string() + ": checkpoint version " + std::to_string(version) + " is not supported");

  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  for (int* field : {&c.node_feature_dim, &c.hidden_dim, &c.latent_dim, &c.rgcn_layers, &c.heads,
                     &c.attention_layers, &c.max_nodes, &c.max_frames, &c.relation_count, &c.decoder_hidden}) {
    const std::uint32_t v = r.u32("model config");
    if (v > 1U << 20) r.fail("implausible model config value");
    *field = static_cast<int>(v);
  }
  const std::size_t flag_at = r.offset();
  const std::uint32_t weighting = r.u32("model config");
  if (weighting > 1) r.fail_at(flag_at, "distance_weighting flag must be 0 or 1");
  c.distance_weighting = weighting == 1;
  try {
    check_config(c);
  } catch (const Error& e) {
    r.fail_at(8, e.what());
  }

  const EncoderParams expected = zero_params(c);
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32("tensor count");
  if (count != expected.size())
    r.fail_at(count_at, "expected " + std::to_string(expected.size()) + " tensors, found " + std::to_string(count));
  for (const auto& [want_name, want] : expected.entries()) {
    const std::size_t tensor_at = r.offset();
    const std::string name = r.str("tensor name");
    if (name != want_name) r.fail_at(tensor_at, "expected tensor '" + want_name + "', found '" + name + "'");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank != 2) r.fail_at(tensor_at, "tensor '" + name + "' must have rank 2");
    const std::uint32_t rows = r.u32("tensor dims");
    const std::uint32_t cols = r.u32("tensor dims");
    if (rows != want.rows() || cols != want.cols())
      r.fail_at(tensor_at, "tensor '" + name + "' has the wrong shape");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        const float v = r.f32("tensor data");
        if (!std::isfinite(v)) r.fail("non-finite parameter in '" + name + "'");
        m(i, j) = v;
      }
    ckpt.params.add(name, std::move(m));
  }
  if (!r.at_end()) r.fail("trailing bytes after the last tensor");
  return ckpt;
}

std::string file_hash(const std::filesystem::path& path) {
  const std::string data = binary::read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

}  // namespace scenario_rag
