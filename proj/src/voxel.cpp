#include "chanform/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "chanform/common.hpp"

namespace chanform::env {

Vec3 face_normal(FaceBit bit) {
    switch (bit) {
        case kFacePosX: return {1, 0, 0};
        case kFaceNegX: return {-1, 0, 0};
        case kFacePosY: return {0, 1, 0};
        case kFaceNegY: return {0, -1, 0};
        case kFacePosZ: return {0, 0, 1};
        case kFaceNegZ: return {0, 0, -1};
    }
    fail(ErrorKind::validation, "invalid face bit");
}

bool VoxelEnv::voxel_of(const Vec3& p, int& ix, int& iy, int& iz) const {
    ix = static_cast<int>(std::floor((p.x - origin.x) / voxel_size_m));
    iy = static_cast<int>(std::floor((p.y - origin.y) / voxel_size_m));
    iz = static_cast<int>(std::floor(p.z / voxel_size_m));
    return in_bounds(ix, iy, iz);
}

double VoxelEnv::occupied_volume_m3() const {
    std::size_t count = 0;
    for (std::uint8_t o : occupancy) count += o;
    double v = voxel_size_m;
    return static_cast<double>(count) * v * v * v;
}

VoxelEnv voxelize(const Scenario& s, double voxel_size_m, std::size_t max_voxels) {
    require(voxel_size_m > 0, ErrorKind::validation, "voxel size must be positive");
    s.validate();

    double max_h = 0.0;
    for (const auto& b : s.buildings) max_h = std::max(max_h, b.height_m);
    // The grid must contain every TX with free space above it, not just rooftops.
    for (const auto& t : s.tx_sites) max_h = std::max(max_h, t.position.z + voxel_size_m);

    auto cells_along = [&](double extent) {
        return std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::ceil(extent / voxel_size_m - 1e-9)));
    };
    std::int64_t nx = cells_along(s.bounds.width());
    std::int64_t ny = cells_along(s.bounds.height());
    std::int64_t nz = cells_along(std::max(max_h, voxel_size_m));
    require(static_cast<std::size_t>(nx) * ny * nz <= max_voxels, ErrorKind::grid_too_large,
            "voxel grid of " + std::to_string(nx * ny * nz) + " voxels exceeds cap");

    VoxelEnv v;
    v.voxel_size_m = voxel_size_m;
    v.nx = static_cast<int>(nx);
    v.ny = static_cast<int>(ny);
    v.nz = static_cast<int>(nz);
    v.origin = s.bounds.lo;
    std::size_t n = static_cast<std::size_t>(nx) * ny * nz;
    v.occupancy.assign(n, 0);
    v.material.assign(n, -1);
    v.exposed_mask.assign(n, 0);

    std::map<std::string, std::int16_t> mat_index;
    for (const auto& [id, m] : s.materials) {
        mat_index[id] = static_cast<std::int16_t>(v.materials.size());
        v.materials.push_back(m);
    }

    for (const auto& b : s.buildings) {
        Rect bb = polygon_bbox(b.footprint);
        int x0 = std::clamp(static_cast<int>(std::floor((bb.lo.x - v.origin.x) / voxel_size_m)), 0, v.nx - 1);
        int x1 = std::clamp(static_cast<int>(std::floor((bb.hi.x - v.origin.x) / voxel_size_m)), 0, v.nx - 1);
        int y0 = std::clamp(static_cast<int>(std::floor((bb.lo.y - v.origin.y) / voxel_size_m)), 0, v.ny - 1);
        int y1 = std::clamp(static_cast<int>(std::floor((bb.hi.y - v.origin.y) / voxel_size_m)), 0, v.ny - 1);
        // Center rule along z: voxel occupied when (iz + 0.5) * size < height.
        int z1 = std::min(v.nz - 1,
                          static_cast<int>(std::ceil(b.height_m / voxel_size_m - 0.5)) - 1);
        std::int16_t mat = mat_index.at(b.material);
        for (int iy = y0; iy <= y1; ++iy) {
            for (int ix = x0; ix <= x1; ++ix) {
                Vec2 center{v.origin.x + (ix + 0.5) * voxel_size_m,
                            v.origin.y + (iy + 0.5) * voxel_size_m};
                if (!point_in_polygon(center, b.footprint)) continue;
                for (int iz = 0; iz <= z1; ++iz) {
                    std::size_t i = v.idx(ix, iy, iz);
                    v.occupancy[i] = 1;
                    v.material[i] = mat;
                }
            }
        }
    }

    for (int iz = 0; iz < v.nz; ++iz) {
        for (int iy = 0; iy < v.ny; ++iy) {
            for (int ix = 0; ix < v.nx; ++ix) {
                std::size_t i = v.idx(ix, iy, iz);
                if (!v.occupancy[i]) continue;
                std::uint8_t mask = 0;
                if (!v.occupied(ix + 1, iy, iz)) mask |= kFacePosX;
                if (!v.occupied(ix - 1, iy, iz)) mask |= kFaceNegX;
                if (!v.occupied(ix, iy + 1, iz)) mask |= kFacePosY;
                if (!v.occupied(ix, iy - 1, iz)) mask |= kFaceNegY;
                if (!v.occupied(ix, iy, iz + 1)) mask |= kFacePosZ;
                if (iz > 0 && !v.occupied(ix, iy, iz - 1)) mask |= kFaceNegZ;
                v.exposed_mask[i] = mask;
            }
        }
    }
    return v;
}

} // namespace chanform::env
