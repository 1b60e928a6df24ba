#include "bpfa/serial.hpp"

#include <bit>
#include <cstring>

#include "bpfa/error.hpp"

namespace bpfa {

static_assert(std::endian::native == std::endian::little, "container formats assume little-endian hosts");

std::uint64_t fnv1a(std::span<const double> values) {
  std::uint64_t h = 14695981039346656037ull;
  const auto* p = reinterpret_cast<const unsigned char*>(values.data());
  for (std::size_t i = 0; i < values.size_bytes(); ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) fail(ErrorKind::Io, "cannot open for writing: " + path.string());
}

void BinaryWriter::bytes(const void* data, std::size_t n) {
  out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out_) fail(ErrorKind::Io, "write failed: " + path_.string());
}

void BinaryWriter::u32(std::uint32_t v) { bytes(&v, sizeof v); }
void BinaryWriter::u64(std::uint64_t v) { bytes(&v, sizeof v); }

void BinaryWriter::string(const std::string& s) {
  u64(s.size());
  bytes(s.data(), s.size());
}

void BinaryWriter::doubles(std::span<const double> v) {
  u64(v.size());
  bytes(v.data(), v.size_bytes());
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) fail(ErrorKind::Io, "close failed: " + path_.string());
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) fail(ErrorKind::Io, "cannot open for reading: " + path.string());
  std::error_code ec;
  remaining_ = std::filesystem::file_size(path, ec);
  if (ec) fail(ErrorKind::Io, "cannot stat: " + path.string());
  if (remaining_ == 0) fail(ErrorKind::Format, "empty file: " + path.string());
}

void BinaryReader::bytes(void* data, std::size_t n) {
  if (n > remaining_) fail(ErrorKind::Format, "truncated file: " + path_.string());
  in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
  if (!in_) fail(ErrorKind::Format, "truncated file: " + path_.string());
  remaining_ -= n;
}

std::uint32_t BinaryReader::u32() {
  std::uint32_t v;
  bytes(&v, sizeof v);
  return v;
}

std::uint64_t BinaryReader::u64() {
  std::uint64_t v;
  bytes(&v, sizeof v);
  return v;
}

std::string BinaryReader::string() {
  const std::uint64_t n = u64();
  if (n > remaining_) fail(ErrorKind::Format, "truncated file: " + path_.string());
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

std::vector<double> BinaryReader::doubles() {
  const std::uint64_t n = u64();
  if (n > remaining_ / sizeof(double)) fail(ErrorKind::Format, "truncated file: " + path_.string());
  std::vector<double> v(n);
  bytes(v.data(), n * sizeof(double));
  return v;
}

void BinaryReader::expect_end() {
  if (remaining_ != 0) fail(ErrorKind::Format, "trailing bytes in " + path_.string());
}

}  // namespace bpfa
