#include "onh/strain.hpp"

#include <algorithm>
#include <cmath>

namespace onh {

double effective_strain(const Mat3& E) {
    const Mat3 dev = E - (E.trace() / 3.0) * Mat3::Identity();
    const double dd = (dev.array() * dev.array()).sum();
    return std::sqrt(std::max(0.0, (2.0 / 3.0) * dd));
}

LocalStrain local_strain(const Mat3& grad_u) {
    LocalStrain s;
    s.F = Mat3::Identity() + grad_u;
    Mat3 E = 0.5 * (s.F.transpose() * s.F - Mat3::Identity());
    s.E = 0.5 * (E + E.transpose());
    s.eff = effective_strain(s.E);
    return s;
}

std::size_t StrainField::defined_count() const {
    std::size_t n = 0;
    for (auto d : defined) n += d;
    return n;
}

StrainField strain_field(const DisplacementField& field) {
    const NodeGrid& g = field.grid;
    if (g.count.x < 3 || g.count.y < 3 || g.count.z < 3)
        throw Error("strain_field needs at least 3 nodes per axis");

    StrainField out;
    out.grid = g;
    out.spacing = field.spacing;
    out.strain.assign(g.size(), LocalStrain{});
    out.defined.assign(g.size(), 0);
    out.one_sided.assign(g.size(), 0);

    auto u_um = [&](std::size_t n) -> Vec3 { return field.u[n].cwiseProduct(field.spacing); };

    for (std::size_t n = 0; n < g.size(); ++n) {
        if (!field.valid(n)) continue;
        const Index3 l = g.lattice(n);
        Mat3 grad = Mat3::Zero();
        bool ok = true;
        bool one_sided = false;
        for (int a = 0; a < 3 && ok; ++a) {
            Index3 lo = l, hi = l;
            lo[a] -= 1;
            hi[a] += 1;
            const bool has_lo = lo[a] >= 0 && field.valid(g.linear(lo.x, lo.y, lo.z));
            const bool has_hi = hi[a] < g.count[a] && field.valid(g.linear(hi.x, hi.y, hi.z));
            const double h = g.stride[a] * field.spacing[a];
            Vec3 du;
            if (has_lo && has_hi) {
                du = (u_um(g.linear(hi.x, hi.y, hi.z)) - u_um(g.linear(lo.x, lo.y, lo.z))) / (2.0 * h);
            } else if (has_hi) {
                du = (u_um(g.linear(hi.x, hi.y, hi.z)) - u_um(n)) / h;
                one_sided = true;
            } else if (has_lo) {
                du = (u_um(n) - u_um(g.linear(lo.x, lo.y, lo.z))) / h;
                one_sided = true;
            } else {
                ok = false;
                break;
            }
            grad.col(a) = du;
        }
        if (!ok) continue;
        out.strain[n] = local_strain(grad);
        out.defined[n] = 1;
        out.one_sided[n] = one_sided ? 1 : 0;
    }
    return out;
}

}  // namespace onh
