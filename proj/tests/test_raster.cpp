#include <doctest.h>

#include <cmath>

#include "chanform/common.hpp"
#include "chanform/raster.hpp"

using namespace chanform;
using namespace chanform::env;

namespace {

// 20 x 20 m scenario with a 6 x 6 building, a horizontal road, and a
// vegetation patch overlapping the road (to exercise channel priority).
Scenario boxworld() {
    Scenario s;
    s.bounds = {{0, 0}, {20, 20}};
    Building b;
    b.footprint = {{4, 4}, {10, 4}, {10, 10}, {4, 10}};
    b.height_m = 9.0;
    b.material = "brick";
    s.buildings.push_back(b);
    Road road;
    road.centerline = {{0, 15}, {20, 15}};
    road.width_m = 2.0;
    s.roads.push_back(road);
    Vegetation veg;
    veg.polygon = {{12, 13}, {18, 13}, {18, 17}, {12, 17}};
    veg.attenuation_db_per_m = 0.2;
    s.vegetation.push_back(veg);
    s.tx_sites.push_back({{2.0, 2.0, 8.0}, 5.9e9});
    for (const auto& m : default_materials()) s.materials[m.id] = m;
    return s;
}

} // namespace

TEST_CASE("rasterize marks cells by their center with class priority") {
    RasterEnv r = rasterize(boxworld(), 1.0);
    REQUIRE(r.nx == 20);
    REQUIRE(r.ny == 20);
    CHECK(r.origin.x == doctest::Approx(0.0));
    CHECK(r.resolution_m == doctest::Approx(1.0));

    // Cell (5, 5) center (5.5, 5.5) is inside the building.
    std::size_t in_b = r.idx(5, 5);
    CHECK(r.building[in_b] == doctest::Approx(1.0));
    CHECK(r.height[in_b] == doctest::Approx(9.0));
    CHECK(r.open[in_b] == doctest::Approx(0.0));

    // Cell (3, 4) center (3.5, 4.5) is just west of the wall at x = 4.
    std::size_t out_b = r.idx(3, 4);
    CHECK(r.building[out_b] == doctest::Approx(0.0));
    CHECK(r.height[out_b] == doctest::Approx(0.0));

    // Road row: centers at y = 14.5 lie inside the 2 m band around y = 15.
    std::size_t on_road = r.idx(2, 14);
    CHECK(r.road[on_road] == doctest::Approx(1.0));

    // Vegetation overlapping the road: road takes priority.
    std::size_t both = r.idx(14, 14);
    CHECK(r.road[both] == doctest::Approx(1.0));
    CHECK(r.vegetation[both] == doctest::Approx(0.0));
    std::size_t veg_only = r.idx(14, 16);
    CHECK(r.vegetation[veg_only] == doctest::Approx(1.0));

    // Per-cell class fractions always sum to at most one.
    for (int iy = 0; iy < r.ny; ++iy) {
        for (int ix = 0; ix < r.nx; ++ix) {
            std::size_t i = r.idx(ix, iy);
            double sum = r.building[i] + r.road[i] + r.vegetation[i] + r.open[i];
            CHECK(sum <= 1.0 + 1e-9);
            CHECK(sum >= -1e-9);
        }
    }
}

TEST_CASE("rasterize rejects bad resolution and oversized grids") {
    CHECK_THROWS_AS(rasterize(boxworld(), 0.0), Error);
    CHECK_THROWS_AS(rasterize(boxworld(), -1.0), Error);
    try {
        rasterize(boxworld(), 0.01, /*max_cells=*/1000);
        FAIL("expected grid_too_large");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::grid_too_large);
    }
}

TEST_CASE("cell_of clamps to the grid") {
    RasterEnv r = rasterize(boxworld(), 1.0);
    int ix, iy;
    r.cell_of({5.5, 5.5}, ix, iy);
    CHECK(ix == 5);
    CHECK(iy == 5);
    r.cell_of({-100.0, 100.0}, ix, iy);
    CHECK(ix == 0);
    CHECK(iy == 19);
}

TEST_CASE("resample coarsening area-averages semantics and max-pools height") {
    RasterEnv fine = rasterize(boxworld(), 1.0);
    RasterEnv coarse = resample(fine, 2.0);
    REQUIRE(coarse.nx == 10);
    REQUIRE(coarse.ny == 10);

    // Block (2, 2) covers fine cells (4..5, 4..5), all inside the building.
    CHECK(coarse.building[coarse.idx(2, 2)] == doctest::Approx(1.0));
    CHECK(coarse.height[coarse.idx(2, 2)] == doctest::Approx(9.0));

    // Block (1, 2) covers fine cells (2..3, 4..5): all outside.
    CHECK(coarse.building[coarse.idx(1, 2)] == doctest::Approx(0.0));

    // The building spans x cells 4..9: block (4,4) = fine (8..9, 8..9) inside.
    CHECK(coarse.building[coarse.idx(4, 4)] == doctest::Approx(1.0));
    // Block (5, 2) covers fine x 10..11 (outside, wall at x = 10).
    CHECK(coarse.building[coarse.idx(5, 2)] == doctest::Approx(0.0));

    // Partially covered block: (2, 1) = fine (4..5, 2..3), building occupies
    // none (building starts at y = 4). Take (2, 2) shifted: block (3, 1)
    // covers fine (6..7, 2..3) -> 0. A half block: block x=2,y=1 is 0; craft
    // one with y cells 3..4? Not on even grid. Use a 3 m resample instead.
    RasterEnv thirds = resample(fine, 3.0);
    // Block (1, 1) covers fine (3..5, 3..5): building cells are (4..5, 4..5)
    // -> 4 of 9.
    CHECK(thirds.building[thirds.idx(1, 1)] == doctest::Approx(4.0 / 9.0));
    // Height max-pools to the tallest covered cell.
    CHECK(thirds.height[thirds.idx(1, 1)] == doctest::Approx(9.0));

    // Mass conservation for area-averaged channels on integer ratios.
    double fine_sum = 0.0, coarse_sum = 0.0;
    for (double v : fine.building) fine_sum += v;
    for (double v : coarse.building) coarse_sum += v * 4.0;
    CHECK(coarse_sum == doctest::Approx(fine_sum));
}

TEST_CASE("resample refining nearest-samples") {
    RasterEnv fine = rasterize(boxworld(), 1.0);
    RasterEnv finer = resample(fine, 0.5);
    REQUIRE(finer.nx == 40);
    // All four children of an interior building cell inherit its values.
    CHECK(finer.building[finer.idx(10, 10)] == doctest::Approx(1.0));
    CHECK(finer.building[finer.idx(11, 11)] == doctest::Approx(1.0));
    CHECK(finer.height[finer.idx(10, 10)] == doctest::Approx(9.0));
    CHECK(finer.building[finer.idx(6, 6)] == doctest::Approx(0.0));
}

TEST_CASE("texture noise is seed-deterministic and leaves other channels") {
    RasterEnv r = rasterize(boxworld(), 1.0);
    TextureAmplitude amp{1.5, 4.0, 1.0};
    auto f = [&](double g) { return amp(g); };
    RasterEnv a = add_texture_noise(r, 99, f);
    RasterEnv b = add_texture_noise(r, 99, f);
    RasterEnv c = add_texture_noise(r, 100, f);
    CHECK(a.texture == b.texture);
    CHECK(a.texture != c.texture);
    CHECK(a.building == r.building);
    CHECK(a.height == r.height);

    // Sample standard deviation tracks the amplitude profile loosely.
    double target = amp(1.0);
    double sum = 0.0, sum2 = 0.0;
    for (double v : a.texture) {
        sum += v;
        sum2 += v * v;
    }
    double n = static_cast<double>(a.texture.size());
    double var = sum2 / n - (sum / n) * (sum / n);
    CHECK(std::sqrt(var) == doctest::Approx(target).epsilon(0.15));
}

TEST_CASE("texture amplitude profile") {
    TextureAmplitude amp{1.2, 4.0, 1.0};
    CHECK(amp(4.0) == doctest::Approx(1.2));
    CHECK(amp(2.0) == doctest::Approx(2.4));
    CHECK(amp(8.0) == doctest::Approx(0.6));
    TextureAmplitude sq{2.0, 4.0, 0.5};
    CHECK(sq(1.0) == doctest::Approx(2.0 * 2.0)); // (4/1)^0.5 = 2
}
