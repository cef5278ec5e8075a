#pragma once

// KGEM v1 matrix container:
//   bytes 0-3   ASCII "KGEM"
//   bytes 4-7   u32 LE format version (= 1)
//   bytes 8-11  u32 LE row count
//   bytes 12-15 u32 LE column count
//   then rows*cols IEEE-754 binary32 LE values, row-major.
// Readers also accept plain TSV (one row per line, tab-separated decimals,
// blank and '#' lines skipped); writers always emit KGEM.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "protograph/errors.hpp"
#include "protograph/types.hpp"

namespace protograph {

static_assert(std::numeric_limits<float>::is_iec559, "binary32 storage requires IEEE-754 floats");

inline constexpr std::uint32_t kKgemVersion = 1;

namespace detail {

inline void put_u32le(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {
      static_cast<char>(v & 0xFF),
      static_cast<char>((v >> 8) & 0xFF),
      static_cast<char>((v >> 16) & 0xFF),
      static_cast<char>((v >> 24) & 0xFF),
  };
  out.write(bytes, 4);
}

inline std::uint32_t get_u32le(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
}

}  // namespace detail

/// Writes a matrix as KGEM v1, narrowing values to binary32.
template <typename Derived>
void write_kgem(const std::string& path, const Eigen::MatrixBase<Derived>& matrix) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path);
  out.write("KGEM", 4);
  detail::put_u32le(out, kKgemVersion);
  detail::put_u32le(out, static_cast<std::uint32_t>(matrix.rows()));
  detail::put_u32le(out, static_cast<std::uint32_t>(matrix.cols()));
  for (Index i = 0; i < matrix.rows(); ++i) {
    for (Index j = 0; j < matrix.cols(); ++j) {
      detail::put_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(matrix(i, j))));
    }
  }
  if (!out) throw InputError("write failed: " + path);
}

template <typename Scalar = double>
Matrix<Scalar> parse_tsv(std::istream& in, const std::string& name) {
  std::vector<std::vector<Scalar>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<Scalar> row;
    std::istringstream fields(line);
    std::string cell;
    while (std::getline(fields, cell, '\t')) {
      try {
        std::size_t used = 0;
        row.push_back(static_cast<Scalar>(std::stod(cell, &used)));
        if (used != cell.size()) throw InputError("trailing characters");
      } catch (const std::exception&) {
        throw InputError(name + ": not a KGEM file and not parseable as TSV (cell '" + cell + "')");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw InputError(name + ": ragged TSV rows (" + std::to_string(row.size()) + " vs " +
                       std::to_string(rows.front().size()) + " columns)");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(name + ": empty matrix file");
  Matrix<Scalar> m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return m;
}

/// Loads a matrix from a KGEM file, falling back to TSV when the magic
/// bytes are absent.
template <typename Scalar = double>
Matrix<Scalar> load_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path);
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() == 4 && std::string(magic, 4) == "KGEM") {
    const std::uint32_t version = detail::get_u32le(in);
    if (version != kKgemVersion) {
      throw InputError(path + ": unsupported KGEM version " + std::to_string(version));
    }
    const std::uint32_t rows = detail::get_u32le(in);
    const std::uint32_t cols = detail::get_u32le(in);
    if (!in) throw InputError(path + ": truncated KGEM header");
    Matrix<Scalar> m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        const std::uint32_t bits = detail::get_u32le(in);
        if (!in) throw InputError(path + ": truncated KGEM payload");
        m(i, j) = static_cast<Scalar>(std::bit_cast<float>(bits));
      }
    }
    return m;
  }
  in.clear();
  in.seekg(0);
  return parse_tsv<Scalar>(in, path);
}

}  // namespace protograph
