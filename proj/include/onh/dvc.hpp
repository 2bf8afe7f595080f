#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "onh/field.hpp"
#include "onh/strain.hpp"
#include "onh/volume.hpp"

namespace onh {

struct DvcParams {
    int block_size = 15;     // voxels per side, odd
    int node_stride = 8;     // voxels
    int search_radius = 6;   // voxels, per level
    int pyramid_levels = 2;
    double min_ncc = 0.3;

    void validate() const;
    friend bool operator==(const DvcParams&, const DvcParams&) = default;
};

/// Zero-mean normalized cross-correlation of two equally sized blocks.
/// Throws UndefinedCorrelation when either block has zero variance.
double ncc(std::span<const double> a, std::span<const double> b);

/// Vertex of the parabola through (-1, minus), (0, center), (1, plus),
/// clamped to [-0.5, 0.5]; 0 when the samples are not strictly peaked.
double subvoxel_offset(double minus, double center, double plus);

struct BlockMatch {
    Vec3 u = Vec3::Zero();  // voxels
    double score = -1.0;
    bool valid = false;
};

/// Exhaustive integer NCC search over [-r, r]^3 around round(init), then
/// per-axis quadratic refinement (skipped when the peak score is 1 to within
/// 1e-9, i.e. an exact integer match). The fixed block is centred at `node`;
/// blocks reaching past the border use replicate padding.
BlockMatch match_block(const ScalarVolume& fixed, const ScalarVolume& moving, const Index3& node,
                       const DvcParams& params, const Vec3& init);

/// Factor-2 mean pooling; odd trailing voxels are dropped.
ScalarVolume downsample(const ScalarVolume& v);

/// Coarse-to-fine block matching on the node grid of `params`. Nodes whose
/// block holds less than half labelled voxels in `mask` are masked.
DisplacementField displacement_field(const ScalarVolume& fixed, const ScalarVolume& moving,
                                     const DvcParams& params, const LabelVolume& mask, int threads = 1);

/// CSV `node_x,node_y,node_z,ux,uy,uz,ncc,valid,eff`; node coordinates are
/// voxel indices, u in voxels, eff `nan` where strain is undefined.
void write_field_csv(const std::filesystem::path& path, const DisplacementField& field,
                     const StrainField* strain);

struct FieldFile {
    DisplacementField field;
    std::vector<double> eff;  // per node, NaN where undefined
};

/// Reads a field CSV; the lattice is rebuilt from the node coordinates.
FieldFile read_field_csv(const std::filesystem::path& path, const Vec3& spacing);

}  // namespace onh
