#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace onh {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Integer voxel coordinate or per-axis count (x lateral, y B-scan, z axial).
struct Index3 {
    int x = 0;
    int y = 0;
    int z = 0;

    int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
    friend bool operator==(const Index3&, const Index3&) = default;
};

using Dims = Index3;

inline std::size_t voxel_count(const Dims& d) {
    return static_cast<std::size_t>(d.x) * static_cast<std::size_t>(d.y) *
           static_cast<std::size_t>(d.z);
}

/// Base class for all recoverable pipeline failures.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter object violates its documented invariants.
class InvalidSpec : public Error {
public:
    using Error::Error;
};

/// Zero-variance block handed to the correlation metric.
class UndefinedCorrelation : public Error {
public:
    using Error::Error;
};

/// Malformed configuration; `what()` carries the offending key path.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace onh
