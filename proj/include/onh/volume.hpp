#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "onh/types.hpp"

namespace onh {

/// Linear voxel order is x-fastest, z-slowest. Voxel (i, j, k) has its
/// center at (i, j, k) * spacing micrometers.
inline std::size_t linear_index(const Dims& d, int x, int y, int z) {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(d.x) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(d.y) * static_cast<std::size_t>(z));
}

struct ScalarVolume {
    Dims dims;
    Vec3 spacing = Vec3::Ones();  // um per voxel
    std::vector<float> data;

    ScalarVolume() = default;
    ScalarVolume(Dims d, Vec3 s, float fill = 0.0f)
        : dims(d), spacing(std::move(s)), data(voxel_count(d), fill) {}

    float at(int x, int y, int z) const { return data[linear_index(dims, x, y, z)]; }
    float& at(int x, int y, int z) { return data[linear_index(dims, x, y, z)]; }

    /// Value at an integer position with replicate-border padding.
    float clamped(int x, int y, int z) const;

    /// Trilinear sample at a fractional voxel position, replicate border.
    double trilinear(double x, double y, double z) const;
};

enum class Tissue : std::uint8_t {
    kBackground = 0,
    kRnflPrelamina = 1,
    kGclIpl = 2,
    kOtherRetina = 3,
    kRpeBm = 4,
    kLaminaCribrosa = 5,
};

inline constexpr int kTissueClasses = 5;

struct LabelVolume {
    Dims dims;
    Vec3 spacing = Vec3::Ones();
    std::vector<std::uint8_t> labels;
    std::vector<Vec3> bmo_points;  // um

    LabelVolume() = default;
    LabelVolume(Dims d, Vec3 s) : dims(d), spacing(std::move(s)), labels(voxel_count(d), 0) {}

    std::uint8_t at(int x, int y, int z) const { return labels[linear_index(dims, x, y, z)]; }
    std::uint8_t& at(int x, int y, int z) { return labels[linear_index(dims, x, y, z)]; }
};

/// Throws InvalidSpec if a label is out of range or a BMO point is missing
/// or outside the volume.
void validate(const LabelVolume& v);

// File pair `<stem>.json` header + `<stem>.raw` payload.
void write_volume(const std::filesystem::path& stem, const ScalarVolume& v);
void write_volume(const std::filesystem::path& stem, const LabelVolume& v);
ScalarVolume read_scalar_volume(const std::filesystem::path& stem);
LabelVolume read_label_volume(const std::filesystem::path& stem);

}  // namespace onh
