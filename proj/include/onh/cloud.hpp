#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "onh/rng.hpp"
#include "onh/strain.hpp"
#include "onh/volume.hpp"

namespace onh {

/// Per-point network input. Tissue is stored as the label code (1..5) and
/// expanded to a one-hot vector on demand.
struct OnhPointCloud {
    std::vector<Vec3> points;
    std::vector<std::uint8_t> tissue;
    std::vector<double> thickness_um;
    std::vector<double> strain;  // empty until attach_strain
    std::optional<int> label;
    double bmo_radius_um = 1.0;  // physical length of one coordinate unit
    std::vector<Vec3> bmo_points;  // landmarks, transformed with the points

    std::size_t size() const { return points.size(); }
    bool has_strain() const { return !strain.empty(); }
    std::array<double, kTissueClasses> one_hot(std::size_t i) const;

    /// Throws InvalidSpec on empty clouds, ragged features, non-finite values
    /// or negative strain.
    void validate() const;
};

/// Seeded uniform subsample of labelled voxels without replacement.
/// Thickness is the axial length of the same-label run through the voxel.
OnhPointCloud build_point_cloud(const LabelVolume& labels, std::size_t target_n, std::uint64_t seed);

struct BmoPlane {
    Vec3 center;
    Vec3 normal;  // unit, nonnegative axial component
};

/// Least-squares plane through the landmarks. Throws InvalidSpec for fewer
/// than 3 points or collinear points.
BmoPlane fit_bmo_plane(const std::vector<Vec3>& bmo_points);

/// Mean in-plane distance of the landmarks from the plane centre.
double bmo_radius(const std::vector<Vec3>& bmo_points, const BmoPlane& plane);

/// Translate by -center, rotate normal onto +z, divide by radius.
OnhPointCloud align_and_scale(const OnhPointCloud& cloud, const Vec3& center, const Vec3& normal,
                              double bmo_radius_um);

/// Each point takes the unweighted mean effective strain of its 5 nearest
/// defined strain nodes (physical um; ties to the lower node index).
OnhPointCloud attach_strain(const OnhPointCloud& cloud, const StrainField& strain);

inline constexpr int kStrainNeighbours = 5;

/// Indices of the k nearest defined nodes, nearest first.
std::vector<std::size_t> nearest_strain_nodes(const StrainField& strain, const Vec3& p_um, int k);

struct AugmentParams {
    double crop_probability = 0.5;
    double crop_radius_min = 0.1;  // BMO-radius units
    double crop_radius_max = 0.3;
    double max_crop_fraction = 0.2;
    double max_rotation_deg = 15.0;
    std::size_t sample_n = 3000;

    void validate() const;
    friend bool operator==(const AugmentParams&, const AugmentParams&) = default;
};

/// Random crop, rotation about z and resampling to exactly `sample_n`
/// points. Smaller clouds keep every point once and top up with replacement.
OnhPointCloud augment(const OnhPointCloud& cloud, Rng& rng, const AugmentParams& params = {});

/// Rows `idx` of every per-point array.
OnhPointCloud select_points(const OnhPointCloud& cloud, const std::vector<std::size_t>& idx);

/// Build, attach strain in the volume frame, then align to the BMO frame.
OnhPointCloud prepare_cloud(const LabelVolume& labels, const StrainField* strain, std::size_t target_n,
                            std::uint64_t seed);

/// `<stem>.csv` with x,y,z,tissue,thickness_um,strain and a `<stem>.json`
/// sidecar {label, bmo_radius_um, source_id, bmo_points}.
void write_cloud(const std::filesystem::path& stem, const OnhPointCloud& cloud, const std::string& source_id);
OnhPointCloud read_cloud(const std::filesystem::path& stem);

}  // namespace onh
