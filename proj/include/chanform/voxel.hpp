#pragma once

#include <cstdint>
#include <vector>

#include "chanform/geometry.hpp"
#include "chanform/scenario.hpp"

namespace chanform::env {

// Exposed-face bitmask bits, one per axis-aligned face.
enum FaceBit : std::uint8_t {
    kFacePosX = 1 << 0,
    kFaceNegX = 1 << 1,
    kFacePosY = 1 << 2,
    kFaceNegY = 1 << 3,
    kFacePosZ = 1 << 4,
    kFaceNegZ = 1 << 5,
};

Vec3 face_normal(FaceBit bit);

// Dense occupancy grid of extruded building footprints. z starts at ground
// level 0; materials index into the `materials` table.
struct VoxelEnv {
    double voxel_size_m = 2.0;
    int nx = 0;
    int ny = 0;
    int nz = 0;
    Vec2 origin;

    std::vector<std::uint8_t> occupancy;    // 0/1
    std::vector<std::int16_t> material;     // -1 for free voxels
    std::vector<std::uint8_t> exposed_mask; // FaceBit union, 0 for free voxels
    std::vector<MaterialSpec> materials;

    std::size_t idx(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * ny + iy) * nx + ix;
    }
    bool in_bounds(int ix, int iy, int iz) const {
        return ix >= 0 && ix < nx && iy >= 0 && iy < ny && iz >= 0 && iz < nz;
    }
    bool occupied(int ix, int iy, int iz) const {
        return in_bounds(ix, iy, iz) && occupancy[idx(ix, iy, iz)] != 0;
    }
    Vec3 voxel_center(int ix, int iy, int iz) const {
        return {origin.x + (ix + 0.5) * voxel_size_m,
                origin.y + (iy + 0.5) * voxel_size_m,
                (iz + 0.5) * voxel_size_m};
    }
    bool voxel_of(const Vec3& p, int& ix, int& iy, int& iz) const;
    double occupied_volume_m3() const;
};

inline constexpr std::size_t kDefaultMaxVoxels = 32u * 1024u * 1024u;

// Voxel occupied exactly when its center lies inside an extruded footprint
// (center z below the building height). Exposed faces are those bordering a
// free or out-of-grid voxel. Throws grid_too_large past max_voxels.
VoxelEnv voxelize(const Scenario& s, double voxel_size_m,
                  std::size_t max_voxels = kDefaultMaxVoxels);

} // namespace chanform::env
