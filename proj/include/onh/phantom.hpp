#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "onh/field.hpp"
#include "onh/volume.hpp"

namespace onh {

enum class DefectClass : std::uint8_t { kNone, kNasalStep, kArcuate, kHemifield };

std::string_view to_string(DefectClass c);
DefectClass defect_class_from_string(std::string_view s);

/// Counter-clockwise angular interval in the en-face plane, degrees.
/// Angle 0 points temporal (+x), 90 superior (+y), 270 inferior (-y).
struct AngularSector {
    double start_deg = 0.0;
    double span_deg = 360.0;

    bool contains(double angle_deg) const;
    friend bool operator==(const AngularSector&, const AngularSector&) = default;
};

/// nasal step: 60 deg inferior; arcuate: 120 deg infero-temporal;
/// hemifield: 180 deg inferior half; none: empty sector.
AngularSector causal_sector(DefectClass c);

struct PhantomSpec {
    Dims dims{96, 96, 96};
    Vec3 spacing{10.0, 10.0, 10.0};  // um per voxel
    double bmo_radius_um = 300.0;
    double cup_depth_um = 150.0;
    DefectClass defect_class = DefectClass::kNone;
    double sector_strain_peak = 0.03;  // effective strain at the causal sector peak
    double baseline_strain = 0.004;    // diffuse effective strain from axial compression
    std::uint64_t seed = 1;

    double speckle_amplitude = 12.0;       // intensity std of the speckle texture
    Vec3 center_offset_um = Vec3::Zero();  // BMO centre offset from the lateral volume centre (z ignored)
    Vec3 translation_vox = Vec3::Zero();   // rigid shift added to the displacement program
    double max_displacement_vox = 5.0;     // keep <= DVC search radius - 1

    /// Throws InvalidSpec when an invariant fails or the geometry does not fit.
    void validate() const;

    /// Clinical raster geometry: 384 A-scans x 97 B-scans, 11.5 / 35.1 / 3.87 um.
    static PhantomSpec clinical_preset();

    friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

/// Axial landmarks (um) and lateral centre derived from a spec.
struct PhantomGeometry {
    Vec3 bmo_center_um;  // z is the Bruch's membrane plane
    double radius_um = 0.0;
    double ilm_z = 0.0;          // inner retinal surface outside the cup
    double rnfl_bottom_z = 0.0;
    double gcl_bottom_z = 0.0;
    double retina_bottom_z = 0.0;
    double bm_z = 0.0;
    double lc_top_z = 0.0;
    double lc_bottom_z = 0.0;
    double cup_radius_um = 0.0;
    double cup_depth_um = 0.0;

    double surface_z(double rho_um) const;
    std::uint8_t label_at(const Vec3& p_um) const;
};

PhantomGeometry phantom_geometry(const PhantomSpec& spec);

/// Layered retina, cupped canal and lamina, speckle texture, BMO ring.
std::pair<ScalarVolume, LabelVolume> generate_phantom(const PhantomSpec& spec);

/// Smooth analytic displacement in um: rigid shift, axial compression about
/// the BM plane and a ridge of Gaussian bumps along the causal arc.
struct DisplacementProgram {
    Vec3 translation_um = Vec3::Zero();
    double axial_stretch = 0.0;  // du_z/dz of the compression term
    double reference_z_um = 0.0;
    std::vector<Vec3> bump_centers_um;
    double bump_amplitude_um = 0.0;  // axial displacement per bump
    double bump_sigma_um = 1.0;

    Vec3 displacement(const Vec3& x_um) const;
    /// Row i, column j: du_i / dX_j.
    Mat3 gradient(const Vec3& x_um) const;
    double effective_strain_at(const Vec3& x_um) const;
    bool is_zero() const;
};

DisplacementProgram displacement_program(const PhantomSpec& spec);

/// Resamples `baseline` so that material at X moves to X + u(X).
ScalarVolume deform_volume(const ScalarVolume& baseline, const DisplacementProgram& program);

/// Exact program displacement at every node, in voxels; all nodes matched
/// with score 1.
DisplacementField sample_program(const DisplacementProgram& program, const NodeGrid& grid,
                                 const Vec3& spacing);

struct DeformedPhantom {
    ScalarVolume deformed;
    DisplacementField truth;
};

DeformedPhantom deform_phantom(const ScalarVolume& baseline, const PhantomSpec& spec,
                               const NodeGrid& grid);

/// Mean analytic effective strain inside the causal sector divided by the
/// mean outside it, over the rim annulus 0.5R..1.5R between the inner
/// retinal surface and BM, on a lattice of pitch `step_um`.
double sector_strain_contrast(const PhantomSpec& spec, double step_um);

}  // namespace onh
