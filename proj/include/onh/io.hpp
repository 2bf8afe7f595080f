#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "onh/types.hpp"

namespace onh::io {

/// Shortest text form that round-trips a double; output is locale-independent.
std::string fmt(double v);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Minimal CSV table: header row plus rows of raw cells.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws Error when absent.
    std::size_t column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

double parse_double(const std::string& cell);

void write_points_csv(const std::filesystem::path& path, const std::vector<Vec3>& points);
std::vector<Vec3> read_points_csv(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for config fingerprints in reports.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace onh::io
