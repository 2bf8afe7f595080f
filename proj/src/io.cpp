#include "onh/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace onh::io {

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    return cells;
}

}  // namespace

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return i;
    throw Error("csv column missing: " + std::string(name));
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text(path));
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw Error("empty csv: " + path.string());
    t.header = split_line(line);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        auto cells = split_line(line);
        if (cells.size() != t.header.size())
            throw Error("csv row width mismatch in " + path.string());
        t.rows.push_back(std::move(cells));
    }
    return t;
}

double parse_double(const std::string& cell) {
    if (cell == "nan") return std::nan("");
    if (cell == "inf") return INFINITY;
    if (cell == "-inf") return -INFINITY;
    double v = 0.0;
    auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw Error("not a number: '" + cell + "'");
    return v;
}

void write_points_csv(const std::filesystem::path& path, const std::vector<Vec3>& points) {
    std::string s = "x_um,y_um,z_um\n";
    for (const auto& p : points) s += fmt(p.x()) + "," + fmt(p.y()) + "," + fmt(p.z()) + "\n";
    write_text(path, s);
}

std::vector<Vec3> read_points_csv(const std::filesystem::path& path) {
    const auto t = read_csv(path);
    const auto cx = t.column("x_um"), cy = t.column("y_um"), cz = t.column("z_um");
    std::vector<Vec3> pts;
    pts.reserve(t.rows.size());
    for (const auto& r : t.rows)
        pts.emplace_back(parse_double(r[cx]), parse_double(r[cy]), parse_double(r[cz]));
    return pts;
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace onh::io
