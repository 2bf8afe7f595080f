#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "onh/net.hpp"
#include "onh/phantom.hpp"

namespace onh {

struct SaliencyCloud {
    std::vector<Vec3> points;   // BMO-radius units
    std::vector<double> value;  // >= 0
    double bmo_radius_um = 1.0;
};

/// Mean |d logit / d f| over the input features of each point.
SaliencyCloud point_saliency(const ModelParams& params, const OnhPointCloud& cloud);

inline constexpr int kMapCells = 40;
inline constexpr double kMapCellUm = 50.0;
inline constexpr double kMapHalfExtentUm = 1000.0;

/// 40 x 40 grid, 50 um cells. En-face: row 0 is the superior edge (+y), column
/// 0 the -x edge. Cross-sections: row 0 is the anterior edge (z = -1000 um).
struct GridMap {
    Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(kMapCells, kMapCells);
    bool normalized = false;
    double raw_mass = 0.0;     // cell sum before normalization
    std::size_t dropped = 0;   // points outside the extent
    double bmo_radius_um = 1.0;
};

/// Cell index for a coordinate in um, or -1 outside [-1000, 1000]. The upper
/// edge belongs to the last cell.
int map_cell(double coord_um);

/// Sum-projects saliency over z onto the BMO-centred plane, then divides by
/// the maximum unless the map is all zero or `normalize` is false.
GridMap enface_project(const SaliencyCloud& sal, double bmo_radius_um, bool normalize = true);

enum class SectionAxis { kInferiorSuperior, kNasalTemporal };

/// Points with |x - c| <= w/2 (inferior-superior) or |y - c| <= w/2
/// (nasal-temporal), projected onto (z, y) or (z, x). Inferior-superior
/// columns follow the en-face row order; nasal-temporal columns follow x.
GridMap cross_section(const SaliencyCloud& sal, SectionAxis axis, double slab_center_um, double slab_width_um,
                      double bmo_radius_um, bool normalize = true);

void normalize_map(GridMap& map);

/// Cell-wise mean of the maps, renormalized. Throws InvalidSpec on an empty
/// list or mismatched grids.
GridMap group_average(const std::vector<GridMap>& maps);

struct SectorRegion {
    AngularSector angles;
    double radial_min = 0.0;  // BMO radii
    double radial_max = 1e300;
};

/// Whether an en-face cell centre lies in `region`, measured with `bmo_radius_um`.
bool cell_in_sector(int row, int col, const SectorRegion& region, double bmo_radius_um);

/// Share of the map total held by cells whose centres fall in `region`.
/// Throws Error for an all-zero map.
double sector_mass(const GridMap& map, const SectorRegion& region);

/// 40 rows of 40 comma-separated values.
void write_map_csv(const std::filesystem::path& path, const GridMap& map);
GridMap read_map_csv(const std::filesystem::path& path);

/// Binary 8-bit PGM, value round(255 * cell).
void write_map_pgm(const std::filesystem::path& path, const GridMap& map);

}  // namespace onh
