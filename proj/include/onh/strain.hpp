#pragma once

#include <cstdint>
#include <vector>

#include "onh/field.hpp"

namespace onh {

struct LocalStrain {
    Mat3 F = Mat3::Identity();  // deformation gradient
    Mat3 E = Mat3::Zero();      // Green-Lagrange strain
    double eff = 0.0;           // effective strain
};

/// Von Mises equivalent of a symmetric strain tensor:
/// sqrt(2/3 dev(E):dev(E)), zero for purely volumetric strain.
double effective_strain(const Mat3& E);

/// F = I + grad_u, E = (F^T F - I) / 2, eff from E.
LocalStrain local_strain(const Mat3& grad_u);

struct StrainField {
    NodeGrid grid;
    Vec3 spacing = Vec3::Ones();
    std::vector<LocalStrain> strain;
    std::vector<std::uint8_t> defined;    // node valid with at least one neighbour per axis
    std::vector<std::uint8_t> one_sided;  // at least one axis used a one-sided difference

    std::size_t defined_count() const;
    /// Physical position of node n in um.
    Vec3 position_um(std::size_t n) const { return grid.position_um(n, spacing); }
};

/// Per-node strain from finite differences of u in physical units. Central
/// differences where both axis neighbours are valid, one-sided otherwise.
/// Throws Error when any axis has fewer than 3 nodes.
StrainField strain_field(const DisplacementField& field);

}  // namespace onh
