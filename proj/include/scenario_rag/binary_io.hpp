#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "scenario_rag/error.hpp"

namespace scenario_rag::binary {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  void bytes(const void* data, std::size_t n) { buf_.append(static_cast<const char*>(data), n); }
  void u32(std::uint32_t v) { bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f32(float v) { bytes(&v, sizeof v); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

// Bounds-checked cursor; failures report the offset at which the read began.
class Reader {
 public:
  Reader(std::string data, std::string source) : data_(std::move(data)), source_(std::move(source)) {}

  std::size_t offset() const { return at_; }
  bool at_end() const { return at_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - at_; }

  [[noreturn]] void fail(const std::string& reason) const { fail_at(at_, reason); }
  [[noreturn]] void fail_at(std::size_t offset, const std::string& reason) const {
    throw Error(ErrorCode::kCorruptFile, source_ + ": offset " + std::to_string(offset) + ": " + reason);
  }

  void bytes(void* out, std::size_t n, const char* what) {
    if (remaining() < n) fail(std::string("truncated while reading ") + what);
    std::memcpy(out, data_.data() + at_, n);
    at_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    bytes(&v, sizeof v, what);
    return v;
  }
  std::uint64_t u64(const char* what) {
    std::uint64_t v;
    bytes(&v, sizeof v, what);
    return v;
  }
  float f32(const char* what) {
    float v;
    bytes(&v, sizeof v, what);
    return v;
  }
  std::string str(const char* what) {
    const std::size_t start = at_;
    const std::uint32_t n = u32(what);
    if (remaining() < n) fail_at(start, std::string("length of ") + what + " runs past end of file");
    std::string s(data_.data() + at_, n);
    at_ += n;
    return s;
  }

 private:
  std::string data_;
  std::string source_;
  std::size_t at_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& data);

}  // namespace scenario_rag::binary
