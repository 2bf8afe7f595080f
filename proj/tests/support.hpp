#pragma once

#include <vector>

#include "onh/phantom.hpp"
#include "onh/rng.hpp"
#include "onh/volume.hpp"

namespace onh::testing {

/// Small phantom spec that keeps unit tests fast.
inline PhantomSpec small_spec(std::uint64_t seed = 11) {
    PhantomSpec s;
    s.dims = {48, 48, 48};
    s.spacing = Vec3(10.0, 10.0, 10.0);
    s.bmo_radius_um = 150.0;
    s.cup_depth_um = 60.0;
    s.seed = seed;
    return s;
}

/// moving(x) = fixed(x - t), replicate border.
inline ScalarVolume shifted(const ScalarVolume& v, const Index3& t) {
    ScalarVolume out(v.dims, v.spacing);
    for (int z = 0; z < v.dims.z; ++z)
        for (int y = 0; y < v.dims.y; ++y)
            for (int x = 0; x < v.dims.x; ++x) out.at(x, y, z) = v.clamped(x - t.x, y - t.y, z - t.z);
    return out;
}

inline LabelVolume full_mask(const Dims& d, const Vec3& spacing) {
    LabelVolume m(d, spacing);
    std::fill(m.labels.begin(), m.labels.end(), std::uint8_t{1});
    m.bmo_points.push_back(Vec3::Zero());
    return m;
}

}  // namespace onh::testing
