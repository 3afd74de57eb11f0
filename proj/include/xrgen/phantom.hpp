#pragma once

#include <cstdint>
#include <vector>

#include "xrgen/parallel.hpp"

namespace xrgen::phantom {

// Voxelized attenuation volume. Storage is z-major: index (z*ny + y)*nx + x.
// bone_mask marks the bone inclusions; mask voxels always have attenuation > 0.
struct VolumeGrid {
    int nx = 0, ny = 0, nz = 0;
    double spacing = 1.0;  // mm per voxel, isotropic
    std::vector<double> attenuation;  // 1/mm
    std::vector<std::uint8_t> bone_mask;

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * ny + y) * nx + x;
    }
    std::size_t size() const { return attenuation.size(); }
};

// Procedural leg phantom: a tapered soft-tissue body (elliptical cross section)
// containing two tubular bones meeting at a joint gap, with cortical shell and
// marrow, plus an optional patella-like ellipsoid when n_bones = 3.
struct PhantomParams {
    std::uint64_t seed = 0;
    double leg_radius_min = 36.0, leg_radius_max = 50.0;    // mm
    double bone_radius_min = 8.0, bone_radius_max = 13.0;   // mm
    double bone_offset_min = 2.0, bone_offset_max = 8.0;    // mm
    double soft_tissue_mu = 0.02;                           // 1/mm
    double bone_mu = 0.055;                                 // 1/mm
    int n_bones = 2;                                        // 2 or 3
    int grid = 64;                                          // voxels per side
    double spacing_mm = 2.5;

    void validate() const;  // throws std::invalid_argument
};

// Deterministic in params.seed. Throws std::invalid_argument when the bone
// ranges cannot fit inside the smallest admissible body.
VolumeGrid build_phantom(const PhantomParams& params, ExecMode mode = exec_mode());

}  // namespace xrgen::phantom
