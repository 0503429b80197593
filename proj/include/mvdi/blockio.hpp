#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mvdi::blockio {

// Little-endian container shared by model checkpoints and PCA/SVM models:
//   "MVDI" | u32 version | u32 kind | u32 n_ints, i64[n_ints] |
//   u32 n_blocks, { u64 len, f64[len] }*
enum class Kind : std::uint32_t { cnn = 1, pca = 2, svm = 3 };

inline constexpr std::uint32_t kVersion = 1;

struct Container {
  Kind kind = Kind::cnn;
  std::vector<std::int64_t> header;
  std::vector<std::vector<double>> blocks;
};

void write(const Container& c, const std::string& path);
Container read(const std::string& path, Kind expected);

void put_u32(std::ostream& os, std::uint32_t v);
void put_u64(std::ostream& os, std::uint64_t v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
std::uint64_t get_u64(std::istream& is);
double get_f64(std::istream& is);

// Feature matrices: u64 n | u64 d | f64[n*d] row-major.
void write_matrix(const std::string& path, std::size_t rows, std::size_t cols,
                  std::span<const double> values);
std::vector<double> read_matrix(const std::string& path, std::size_t& rows,
                                std::size_t& cols);

}  // namespace mvdi::blockio
