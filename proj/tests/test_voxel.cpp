#include <doctest.h>

#include "chanform/common.hpp"
#include "chanform/voxel.hpp"

using namespace chanform;
using namespace chanform::env;

namespace {

Scenario one_box(double height = 9.0, double tx_z = 8.0) {
    Scenario s;
    s.bounds = {{0, 0}, {20, 20}};
    Building b;
    b.footprint = {{4, 4}, {10, 4}, {10, 10}, {4, 10}};
    b.height_m = height;
    b.material = "brick";
    s.buildings.push_back(b);
    s.tx_sites.push_back({{2.0, 16.0, tx_z}, 5.9e9});
    for (const auto& m : default_materials()) s.materials[m.id] = m;
    return s;
}

} // namespace

TEST_CASE("voxelize extrudes footprints by the center rule") {
    VoxelEnv v = voxelize(one_box(), 2.0);
    REQUIRE(v.nx == 10);
    REQUIRE(v.ny == 10);
    // Grid covers max(building 9, tx 8 + one voxel) = 10 m -> 5 layers.
    REQUIRE(v.nz == 5);

    // Footprint [4,10]^2 at 2 m: centers 5, 7, 9 inside -> 3 x 3 columns.
    // Height 9 m: centers 1, 3, 5, 7 below -> 4 layers.
    std::size_t occupied = 0;
    for (auto o : v.occupancy) occupied += o;
    CHECK(occupied == 36);
    CHECK(v.occupied_volume_m3() == doctest::Approx(288.0));

    CHECK(v.occupied(2, 2, 0));
    CHECK(v.occupied(4, 4, 3));
    CHECK_FALSE(v.occupied(2, 2, 4)); // above the roof
    CHECK_FALSE(v.occupied(1, 2, 0)); // west of the wall
    CHECK_FALSE(v.occupied(50, 2, 0)); // out of bounds is never occupied

    // Materials resolve through the per-grid table.
    std::int16_t mi = v.material[v.idx(3, 3, 1)];
    REQUIRE(mi >= 0);
    CHECK(v.materials[mi].id == "brick");
    CHECK(v.material[v.idx(0, 0, 0)] == -1);
}

TEST_CASE("exposed faces border free space only") {
    VoxelEnv v = voxelize(one_box(), 2.0);

    // Interior voxel: fully enclosed.
    CHECK(v.exposed_mask[v.idx(3, 3, 1)] == 0);

    // Roof-corner voxel exposes -x, -y, +z.
    std::uint8_t corner = v.exposed_mask[v.idx(2, 2, 3)];
    CHECK((corner & kFaceNegX) != 0);
    CHECK((corner & kFaceNegY) != 0);
    CHECK((corner & kFacePosZ) != 0);
    CHECK((corner & kFacePosX) == 0);
    CHECK((corner & kFacePosY) == 0);
    CHECK((corner & kFaceNegZ) == 0);

    // Ground layer never exposes its bottom face.
    std::uint8_t ground = v.exposed_mask[v.idx(2, 2, 0)];
    CHECK((ground & kFaceNegZ) == 0);
    CHECK((ground & kFacePosZ) == 0); // voxel above is occupied

    // Free voxels carry no mask.
    CHECK(v.exposed_mask[v.idx(0, 0, 0)] == 0);

    // Every face normal is a unit axis vector.
    for (FaceBit bit : {kFacePosX, kFaceNegX, kFacePosY, kFaceNegY, kFacePosZ, kFaceNegZ}) {
        CHECK(face_normal(bit).norm() == doctest::Approx(1.0));
    }
}

TEST_CASE("voxel grid extends above a high transmitter") {
    VoxelEnv v = voxelize(one_box(9.0, 30.0), 2.0);
    CHECK(v.nz >= 16); // tx at 30 m plus one voxel of headroom
    int ix, iy, iz;
    REQUIRE(v.voxel_of({2.0, 16.0, 30.0}, ix, iy, iz));
    CHECK_FALSE(v.occupied(ix, iy, iz));
}

TEST_CASE("voxel_of round trip and bounds") {
    VoxelEnv v = voxelize(one_box(), 2.0);
    int ix, iy, iz;
    REQUIRE(v.voxel_of(v.voxel_center(4, 7, 2), ix, iy, iz));
    CHECK(ix == 4);
    CHECK(iy == 7);
    CHECK(iz == 2);
    CHECK_FALSE(v.voxel_of({-1.0, 5.0, 1.0}, ix, iy, iz));
    CHECK_FALSE(v.voxel_of({5.0, 5.0, 1e4}, ix, iy, iz));
}

TEST_CASE("voxelize guards size and argument validity") {
    CHECK_THROWS_AS(voxelize(one_box(), 0.0), Error);
    try {
        voxelize(one_box(), 0.05, /*max_voxels=*/10000);
        FAIL("expected grid_too_large");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::grid_too_large);
    }
}
