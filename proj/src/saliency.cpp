#include "onh/saliency.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "onh/io.hpp"

namespace onh {

SaliencyCloud point_saliency(const ModelParams& params, const OnhPointCloud& cloud) {
    ForwardCache cache;
    forward(params, cloud, &cache);
    const Eigen::MatrixXd g = backward(params, cache, 1.0).input;
    SaliencyCloud s;
    s.points = cloud.points;
    s.bmo_radius_um = cloud.bmo_radius_um;
    s.value.resize(cloud.size());
    for (Eigen::Index i = 0; i < g.rows(); ++i) s.value[static_cast<std::size_t>(i)] = g.row(i).cwiseAbs().mean();
    return s;
}

int map_cell(double c) {
    if (!(c >= -kMapHalfExtentUm && c <= kMapHalfExtentUm)) return -1;
    const int k = static_cast<int>(std::floor((c + kMapHalfExtentUm) / kMapCellUm));
    return std::min(k, kMapCells - 1);
}

void normalize_map(GridMap& map) {
    const double mx = map.cells.maxCoeff();
    if (mx > 0.0) {
        map.cells /= mx;
        map.normalized = true;
    }
}

GridMap enface_project(const SaliencyCloud& sal, double bmo_radius_um, bool normalize) {
    GridMap m;
    m.bmo_radius_um = bmo_radius_um;
    for (std::size_t i = 0; i < sal.points.size(); ++i) {
        const int col = map_cell(sal.points[i].x() * bmo_radius_um);
        const int yc = map_cell(sal.points[i].y() * bmo_radius_um);
        if (col < 0 || yc < 0) {
            ++m.dropped;
            continue;
        }
        m.cells(kMapCells - 1 - yc, col) += sal.value[i];
    }
    m.raw_mass = m.cells.sum();
    if (normalize) normalize_map(m);
    return m;
}

GridMap cross_section(const SaliencyCloud& sal, SectionAxis axis, double slab_center_um, double slab_width_um,
                      double bmo_radius_um, bool normalize) {
    if (!(slab_width_um > 0.0)) throw InvalidSpec("slab_width_um must be positive");
    GridMap m;
    m.bmo_radius_um = bmo_radius_um;
    const bool is = axis == SectionAxis::kInferiorSuperior;
    for (std::size_t i = 0; i < sal.points.size(); ++i) {
        const Vec3 p = sal.points[i] * bmo_radius_um;
        const double across = is ? p.x() : p.y();
        if (std::abs(across - slab_center_um) > 0.5 * slab_width_um) continue;
        const int row = map_cell(p.z());
        const int along = map_cell(is ? p.y() : p.x());
        if (row < 0 || along < 0) {
            ++m.dropped;
            continue;
        }
        m.cells(row, is ? kMapCells - 1 - along : along) += sal.value[i];
    }
    m.raw_mass = m.cells.sum();
    if (normalize) normalize_map(m);
    return m;
}

GridMap group_average(const std::vector<GridMap>& maps) {
    if (maps.empty()) throw InvalidSpec("group_average needs at least one map");
    GridMap out;
    out.bmo_radius_um = 0.0;
    for (const auto& m : maps) {
        if (m.cells.rows() != kMapCells || m.cells.cols() != kMapCells) throw InvalidSpec("map grids differ");
        out.cells += m.cells;
        out.dropped += m.dropped;
        out.bmo_radius_um += m.bmo_radius_um;
    }
    out.cells /= static_cast<double>(maps.size());
    out.bmo_radius_um /= static_cast<double>(maps.size());
    out.raw_mass = out.cells.sum();
    normalize_map(out);
    return out;
}

bool cell_in_sector(int row, int col, const SectorRegion& region, double bmo_radius_um) {
    const double x = -kMapHalfExtentUm + kMapCellUm * (col + 0.5);
    const double y = kMapHalfExtentUm - kMapCellUm * (row + 0.5);
    const double r = std::hypot(x, y) / bmo_radius_um;
    if (r < region.radial_min || r > region.radial_max) return false;
    return region.angles.contains(std::atan2(y, x) * 180.0 / std::numbers::pi);
}

double sector_mass(const GridMap& map, const SectorRegion& region) {
    double total = 0.0, in = 0.0;
    for (int r = 0; r < kMapCells; ++r)
        for (int c = 0; c < kMapCells; ++c) {
            total += map.cells(r, c);
            if (cell_in_sector(r, c, region, map.bmo_radius_um)) in += map.cells(r, c);
        }
    if (!(total > 0.0)) throw Error("sector_mass of an all-zero map");
    return in / total;
}

void write_map_csv(const std::filesystem::path& path, const GridMap& map) {
    std::string s;
    for (int r = 0; r < kMapCells; ++r) {
        for (int c = 0; c < kMapCells; ++c) {
            if (c) s += ',';
            s += io::fmt(map.cells(r, c));
        }
        s += '\n';
    }
    io::write_text(path, s);
}

GridMap read_map_csv(const std::filesystem::path& path) {
    std::istringstream in(io::read_text(path));
    GridMap m;
    std::string line;
    int r = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (r >= kMapCells) throw Error("map csv has too many rows: " + path.string());
        std::istringstream ls(line);
        std::string cell;
        int c = 0;
        while (std::getline(ls, cell, ',')) {
            if (c >= kMapCells) throw Error("map csv row too wide: " + path.string());
            m.cells(r, c++) = io::parse_double(cell);
        }
        if (c != kMapCells) throw Error("map csv row too short: " + path.string());
        ++r;
    }
    if (r != kMapCells) throw Error("map csv must have 40 rows: " + path.string());
    m.raw_mass = m.cells.sum();
    m.normalized = m.cells.maxCoeff() == 1.0;
    return m;
}

void write_map_pgm(const std::filesystem::path& path, const GridMap& map) {
    std::string s = "P5\n" + std::to_string(kMapCells) + " " + std::to_string(kMapCells) + "\n255\n";
    for (int r = 0; r < kMapCells; ++r)
        for (int c = 0; c < kMapCells; ++c) {
            const double v = std::clamp(map.cells(r, c), 0.0, 1.0);
            s.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * v))));
        }
    io::write_text(path, s);
}

}  // namespace onh
