#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace bpfa {

/// 64-bit FNV-1a over the raw bytes of `values`.
std::uint64_t fnv1a(std::span<const double> values);

/// Little-endian binary output; every failure is an Io error.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void bytes(const void* data, std::size_t n);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void string(const std::string& s);  // u64 length prefix
  void doubles(std::span<const double> v);  // u64 count prefix
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

/// Reader counterpart; short reads are Format errors.
class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  void bytes(void* data, std::size_t n);
  std::uint32_t u32();
  std::uint64_t u64();
  std::string string();
  std::vector<double> doubles();
  void expect_end();

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t remaining_ = 0;
};

}  // namespace bpfa
