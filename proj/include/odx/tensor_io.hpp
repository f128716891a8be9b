#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "odx/tensor.hpp"

namespace odx {

// ODXT block: "ODXT", u32 version (=1), u32 rank, u64 dims[rank], f64 values,
// all little-endian, values row-major.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

void write_tensor(std::ostream& os, const DenseTensor& t);
DenseTensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const DenseTensor& t);
DenseTensor load_tensor(const std::filesystem::path& path);

// Little-endian scalar helpers shared by the dataset and checkpoint containers.
namespace binio {
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
void write_magic(std::ostream& os, const char (&magic)[5]);
// Throws FormatError when the next four bytes differ from `magic`.
void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what);
void write_string(std::ostream& os, const std::string& s);
std::string read_string(std::istream& is, std::uint64_t max_length);
}  // namespace binio

}  // namespace odx
