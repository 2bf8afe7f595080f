#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "onh/types.hpp"

namespace onh {

/// Regular lattice of correlation nodes, in full-resolution voxel indices.
struct NodeGrid {
    Index3 origin;
    Index3 stride{1, 1, 1};
    Index3 count;

    std::size_t size() const { return voxel_count(count); }

    std::size_t linear(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(count.x) *
                   (static_cast<std::size_t>(j) + static_cast<std::size_t>(count.y) * static_cast<std::size_t>(k));
    }

    /// Lattice coordinates (i, j, k) of node n.
    Index3 lattice(std::size_t n) const {
        const auto cx = static_cast<std::size_t>(count.x), cy = static_cast<std::size_t>(count.y);
        return {static_cast<int>(n % cx), static_cast<int>((n / cx) % cy), static_cast<int>(n / (cx * cy))};
    }

    /// Voxel position of node n.
    Index3 voxel(std::size_t n) const {
        const auto l = lattice(n);
        return {origin.x + l.x * stride.x, origin.y + l.y * stride.y, origin.z + l.z * stride.z};
    }

    Vec3 position_um(std::size_t n, const Vec3& spacing) const {
        const auto v = voxel(n);
        return {v.x * spacing.x(), v.y * spacing.y(), v.z * spacing.z()};
    }

    friend bool operator==(const NodeGrid&, const NodeGrid&) = default;
};

/// Nodes whose `block_size` cube fits entirely in `dims`, spaced by
/// `stride` and centered so the unused margin is split evenly.
NodeGrid make_node_grid(const Dims& dims, int block_size, int stride);

enum class NodeState : std::uint8_t {
    kMatched,   // correlation peak accepted
    kFilled,    // rejected, replaced by the mean of valid 6-neighbours
    kRejected,  // rejected and no valid neighbour
    kMasked,    // block mostly outside the labelled tissue; never matched
};

struct DisplacementField {
    NodeGrid grid;
    Vec3 spacing = Vec3::Ones();  // um per voxel
    std::vector<Vec3> u;          // voxels
    std::vector<double> score;    // NCC at the accepted peak
    std::vector<NodeState> state;

    DisplacementField() = default;
    DisplacementField(NodeGrid g, Vec3 s)
        : grid(g), spacing(std::move(s)), u(g.size(), Vec3::Zero()), score(g.size(), 0.0),
          state(g.size(), NodeState::kMasked) {}

    bool valid(std::size_t n) const {
        return state[n] == NodeState::kMatched || state[n] == NodeState::kFilled;
    }
    std::size_t valid_count() const;
};

}  // namespace onh
