#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mbp/grid.hpp"

namespace mbp {

/// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Binary 16-bit PGM. Values in [-beta, beta] map affinely onto [0, 65535];
/// rows follow axis 0, columns the last axis. 3D fields stack axis-0 slices vertically.
/// Vector and matrix fields render their first component.
std::string encode_pgm(const Grid& grid, const Field& field, double beta);

/// Header `node,x0[,x1[,x2]],c0[,c1...]`, one row per active node.
std::string encode_field_csv(const Grid& grid, const Field& field);

struct PgmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    unsigned maxval = 0;
    std::vector<std::uint16_t> pixels;
};

PgmImage decode_pgm(const std::string& bytes);

/// Canonical decimal used in snapshot file names, e.g. 0.5 -> "0.5", 10 -> "10".
std::string format_time(double t);

}  // namespace mbp
