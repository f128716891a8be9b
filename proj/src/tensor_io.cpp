#include "odx/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "odx/error.hpp"

namespace odx {
namespace binio {
namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void read_exact(std::istream& is, char* out, std::size_t n) {
  is.read(out, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("truncated file");
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v;
  read_exact(is, reinterpret_cast<char*>(&v), 4);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v;
  read_exact(is, reinterpret_cast<char*>(&v), 8);
  return v;
}

double read_f64(std::istream& is) {
  double v;
  read_exact(is, reinterpret_cast<char*>(&v), 8);
  return v;
}

void write_magic(std::ostream& os, const char (&magic)[5]) { os.write(magic, 4); }

void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
  std::array<char, 4> got{};
  read_exact(is, got.data(), 4);
  if (std::memcmp(got.data(), magic, 4) != 0) {
    throw FormatError(what + ": bad magic bytes (expected " + std::string(magic, 4) + ")");
  }
}

void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, std::uint64_t max_length) {
  const std::uint64_t n = read_u64(is);
  if (n > max_length) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  read_exact(is, s.data(), n);
  return s;
}

}  // namespace binio

void write_tensor(std::ostream& os, const DenseTensor& t) {
  binio::write_magic(os, "ODXT");
  binio::write_u32(os, kTensorFormatVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.dims()) binio::write_u64(os, d);
  os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
}

DenseTensor read_tensor(std::istream& is) {
  binio::expect_magic(is, "ODXT", "tensor block");
  const std::uint32_t version = binio::read_u32(is);
  if (version != kTensorFormatVersion) {
    throw FormatError("tensor block version " + std::to_string(version) + " unsupported");
  }
  const std::uint32_t rank = binio::read_u32(is);
  if (rank > 16) throw FormatError("tensor rank " + std::to_string(rank) + " implausible");
  Dims dims(rank);
  std::uint64_t total = 1;
  for (auto& d : dims) {
    d = binio::read_u64(is);
    if (d != 0 && total > (std::uint64_t{1} << 40) / d) throw FormatError("tensor too large");
    total *= d;
  }
  std::vector<double> values(total);
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(total * 8));
  if (static_cast<std::uint64_t>(is.gcount()) != total * 8) throw FormatError("truncated tensor block");
  return DenseTensor(std::move(dims), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_tensor(os, t);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

DenseTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_tensor(is);
}

}  // namespace odx
