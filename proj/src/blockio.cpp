#include "mvdi/blockio.hpp"

#include <array>
#include <bit>
#include <fstream>

#include "mvdi/error.hpp"

namespace mvdi::blockio {
namespace {

constexpr std::array<char, 4> kMagic = {'M', 'V', 'D', 'I'};

template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  }
  os.write(buf.data(), buf.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf{};
  is.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (!is) throw DataError("blockio: truncated input");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void put_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }
std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t get_u64(std::istream& is) { return get_le<std::uint64_t>(is); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get_le<std::uint64_t>(is)); }

void write(const Container& c, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(c.kind));
  put_u32(os, static_cast<std::uint32_t>(c.header.size()));
  for (auto h : c.header) put_u64(os, static_cast<std::uint64_t>(h));
  put_u32(os, static_cast<std::uint32_t>(c.blocks.size()));
  for (const auto& b : c.blocks) {
    put_u64(os, b.size());
    for (double v : b) put_f64(os, v);
  }
  if (!os) throw DataError("write failed: " + path);
}

Container read(const std::string& path, Kind expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw DataError("bad magic in " + path);
  if (get_u32(is) != kVersion) throw DataError("unsupported version in " + path);
  Container c;
  c.kind = static_cast<Kind>(get_u32(is));
  if (c.kind != expected) throw DataError("unexpected container kind in " + path);
  c.header.resize(get_u32(is));
  for (auto& h : c.header) h = static_cast<std::int64_t>(get_u64(is));
  c.blocks.resize(get_u32(is));
  for (auto& b : c.blocks) {
    const auto n = get_u64(is);
    if (n > (std::uint64_t{1} << 32)) throw DataError("block too large in " + path);
    b.resize(n);
    for (auto& v : b) v = get_f64(is);
  }
  return c;
}

void write_matrix(const std::string& path, std::size_t rows, std::size_t cols,
                  std::span<const double> values) {
  if (values.size() != rows * cols) throw DataError("matrix size mismatch");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path);
  put_u64(os, rows);
  put_u64(os, cols);
  for (double v : values) put_f64(os, v);
  if (!os) throw DataError("write failed: " + path);
}

std::vector<double> read_matrix(const std::string& path, std::size_t& rows,
                                std::size_t& cols) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path);
  rows = get_u64(is);
  cols = get_u64(is);
  if (rows * cols > (std::size_t{1} << 31)) throw DataError("matrix too large: " + path);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = get_f64(is);
  return v;
}

}  // namespace mvdi::blockio
