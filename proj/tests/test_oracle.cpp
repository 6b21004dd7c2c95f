#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "chanform/grid_io.hpp"
#include "chanform/oracle.hpp"

using namespace chanform;
using namespace chanform::oracle;

namespace {

env::Scenario flat(double extent = 200.0) {
    env::Scenario s;
    s.bounds = {{0, 0}, {extent, extent}};
    s.tx_sites.push_back({{extent / 4, extent / 2, 10.0}, 5.9e9});
    for (const auto& m : env::default_materials()) s.materials[m.id] = m;
    return s;
}

env::Scenario walled() {
    env::Scenario s = flat();
    env::Building b;
    b.footprint = {{98, 80}, {102, 80}, {102, 120}, {98, 120}};
    b.height_m = 30.0;
    b.material = "concrete";
    s.buildings.push_back(b);
    return s;
}

} // namespace

TEST_CASE("free-space path loss closed form") {
    CHECK(std::abs(fspl_db(100.0, 5.9e9) - 87.8670402328429) < 1e-9);
    CHECK(std::abs(fspl_db(1.0, 5.9e9) - 47.8670402328429) < 1e-9);
    // Doubling the distance always costs 20 log10(2) dB.
    CHECK(std::abs(fspl_db(200.0, 5.9e9) - fspl_db(100.0, 5.9e9) - 6.020599913279625) <
          1e-12);
    // Frequency enters identically.
    CHECK(std::abs(fspl_db(100.0, 11.8e9) - fspl_db(100.0, 5.9e9) - 6.020599913279625) <
          1e-12);
}

TEST_CASE("knife edge diffraction curve") {
    CHECK(std::abs(knife_edge_j(0.0) - 6.032852208563606) < 1e-9);
    CHECK(std::abs(knife_edge_j(1.0) - 13.925728934959924) < 1e-9);
    CHECK(std::abs(knife_edge_j(2.4) - 20.53926612973203) < 1e-9);
    CHECK(knife_edge_j(-0.78) == 0.0);
    CHECK(knife_edge_j(-5.0) == 0.0);
    // Monotone increasing above the cutoff.
    double prev = knife_edge_j(-0.7);
    for (double nu = -0.5; nu < 4.0; nu += 0.25) {
        double cur = knife_edge_j(nu);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("fresnel zone geometry") {
    double lam = kSpeedOfLight / 5.9e9;
    CHECK(std::abs(fresnel_radius(100.0, 100.0, lam) - 1.5939303782936873) < 1e-9);
    // An edge grazing the first-zone boundary has nu = sqrt(2).
    double r1 = fresnel_radius(60.0, 140.0, lam);
    CHECK(std::abs(fresnel_nu(r1, 60.0, 140.0, lam) - std::sqrt(2.0)) < 1e-9);
    // Zero excess means nu = 0.
    CHECK(fresnel_nu(0.0, 50.0, 50.0, lam) == 0.0);
    // The radius peaks mid-path.
    CHECK(fresnel_radius(100.0, 100.0, lam) > fresnel_radius(20.0, 180.0, lam));
}

TEST_CASE("walk_cells covers the segment contiguously") {
    env::RasterEnv r = env::rasterize(flat(10.0), 1.0);
    auto cells = walk_cells(r, {0.5, 0.5}, {2.5, 0.5});
    REQUIRE(cells.size() == 3);
    CHECK(cells[0].ix == 0);
    CHECK(cells[1].ix == 1);
    CHECK(cells[2].ix == 2);
    CHECK(cells[0].t0 == doctest::Approx(0.0));
    CHECK(cells[0].t1 == doctest::Approx(0.25));
    CHECK(cells[1].t1 == doctest::Approx(0.75));
    CHECK(cells[2].t1 == doctest::Approx(1.0));

    // Diagonal: parametric coverage is gapless and ordered.
    auto diag = walk_cells(r, {0.2, 0.7}, {8.9, 7.3});
    REQUIRE(diag.size() > 8);
    CHECK(diag.front().t0 == doctest::Approx(0.0));
    CHECK(diag.back().t1 == doctest::Approx(1.0));
    for (std::size_t i = 0; i + 1 < diag.size(); ++i) {
        CHECK(diag[i].t1 == doctest::Approx(diag[i + 1].t0));
        CHECK(diag[i].t1 >= diag[i].t0);
    }

    // Endpoints outside the raster are rejected.
    CHECK_THROWS_AS(walk_cells(r, {-1.0, 0.5}, {2.5, 0.5}), Error);
}

TEST_CASE("los_test sees walls and skips endpoint cells") {
    env::RasterEnv open_r = env::rasterize(flat(), 2.0);
    Link link{{50, 100, 10}, {150, 100, 10}, 5.9e9};
    LosResult clear = los_test(open_r, link);
    CHECK(clear.los);
    CHECK(clear.obstructions.empty());

    env::RasterEnv wall_r = env::rasterize(walled(), 2.0);
    LosResult blocked = los_test(wall_r, link);
    CHECK_FALSE(blocked.los);
    REQUIRE_FALSE(blocked.obstructions.empty());
    double max_excess = 0.0;
    for (const auto& o : blocked.obstructions) {
        CHECK(o.distance_m > 40.0);
        CHECK(o.distance_m < 60.0);
        max_excess = std::max(max_excess, o.excess_m);
    }
    CHECK(max_excess == doctest::Approx(20.0)); // 30 m wall, 10 m ray height

    // A link clearing the wall is LOS again.
    Link above{{50, 100, 35}, {150, 100, 35}, 5.9e9};
    CHECK(los_test(wall_r, above).los);

    // Terminal inside its own building cell: with 4 m cells the building is
    // exactly one cell, which is skipped as an endpoint.
    env::Scenario pad = flat(20.0);
    env::Building b;
    b.footprint = {{0, 0}, {4, 0}, {4, 4}, {0, 4}};
    b.height_m = 20.0;
    b.material = "brick";
    pad.buildings.push_back(b);
    env::RasterEnv pad_r = env::rasterize(pad, 4.0);
    Link from_roof{{2, 2, 5}, {18, 18, 5}, 5.9e9};
    CHECK(los_test(pad_r, from_roof).los);
}

TEST_CASE("fresnel clearance saturates at the clamp bounds") {
    env::RasterEnv open_r = env::rasterize(flat(), 2.0);
    Link link{{50, 100, 10}, {150, 100, 10}, 5.9e9};
    CHECK(fresnel_clearance(open_r, link) == doctest::Approx(1.0));

    env::RasterEnv wall_r = env::rasterize(walled(), 2.0);
    // 20 m of excess obstruction versus a ~1.6 m Fresnel radius: fully closed.
    CHECK(fresnel_clearance(wall_r, link) == doctest::Approx(-1.0));
}

TEST_CASE("knife_edge_loss reduces to the single-edge curve") {
    Link link{{0, 0, 10}, {100, 0, 10}, 5.9e9};
    CHECK(knife_edge_loss({}, link) == 0.0);

    double lam = link.wavelength_m();
    Obstruction o{40.0, 7.0}; // 7 m above the ray at 40 m out
    double nu = fresnel_nu(7.0, 40.0, 60.0, lam);
    CHECK(knife_edge_loss({o}, link) == doctest::Approx(knife_edge_j(nu)).epsilon(1e-9));

    // Two stacked edges cost at least as much as the dominant one alone.
    Obstruction o2{70.0, 3.0};
    CHECK(knife_edge_loss({o, o2}, link) >= knife_edge_loss({o}, link) - 1e-12);
}

TEST_CASE("oracle path loss equals FSPL on an empty map") {
    env::RasterEnv r = env::rasterize(flat(), 2.0);
    Link link{{50, 100, 10}, {150, 100, 10}, 5.9e9};
    OracleConfig cfg;
    cfg.shadowing_sigma_db = 0.0;
    ChannelSample cs = path_loss(r, link, cfg);
    CHECK(cs.los);
    CHECK(cs.path_loss_db == doctest::Approx(fspl_db(100.0, 5.9e9)).epsilon(1e-12));
    CHECK(cs.paths.empty()); // large-scale call leaves multipath fields empty
}

TEST_CASE("diffraction adds loss behind a wall") {
    env::RasterEnv r = env::rasterize(walled(), 2.0);
    Link link{{50, 100, 10}, {150, 100, 10}, 5.9e9};
    OracleConfig cfg;
    ChannelSample cs = path_loss(r, link, cfg);
    CHECK_FALSE(cs.los);
    CHECK(cs.path_loss_db > fspl_db(100.0, 5.9e9) + 6.0);
}

TEST_CASE("vegetation attenuates by crossed depth") {
    env::Scenario s = flat(10.0);
    env::Vegetation veg;
    veg.polygon = {{3, 0}, {7, 0}, {7, 10}, {3, 10}};
    veg.attenuation_db_per_m = 0.15; // scenario value; the oracle rate wins
    s.vegetation.push_back(veg);
    env::RasterEnv r = env::rasterize(s, 1.0);
    Link link{{0.5, 0.5, 1.5}, {9.5, 0.5, 1.5}, 5.9e9};
    OracleConfig cfg;
    cfg.vegetation_db_per_m = 0.15;
    ChannelSample cs = path_loss(r, link, cfg);
    // Cells ix 3..6 are fully vegetated: 4 m of canopy on a 9 m path.
    double expected = fspl_db(9.0, 5.9e9) + 0.15 * 4.0;
    CHECK(cs.path_loss_db == doctest::Approx(expected).epsilon(1e-9));
    CHECK(cs.los); // vegetation does not break line of sight

    OracleConfig off;
    off.vegetation_db_per_m = 0.0;
    CHECK(path_loss(r, link, off).path_loss_db ==
          doctest::Approx(fspl_db(9.0, 5.9e9)).epsilon(1e-12));
}

TEST_CASE("shadowing field is deterministic with roughly unit variance") {
    double a = shadowing_field({12.3, 45.6}, 25.0, 7);
    CHECK(a == shadowing_field({12.3, 45.6}, 25.0, 7));
    CHECK(a != shadowing_field({12.3, 45.6}, 25.0, 8));

    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (int i = 0; i < 70; ++i) {
        for (int j = 0; j < 70; ++j) {
            double v = shadowing_field({i * 13.37, j * 17.71}, 25.0, 99);
            sum += v;
            sum2 += v * v;
            ++n;
        }
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(var == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("shadowing shifts the oracle output by sigma times the field") {
    env::RasterEnv r = env::rasterize(flat(), 2.0);
    Link link{{50, 100, 10}, {150, 100, 10}, 5.9e9};
    OracleConfig base;
    OracleConfig shadowed;
    shadowed.shadowing_sigma_db = 3.0;
    shadowed.seed = 41;
    double delta = path_loss(r, link, shadowed).path_loss_db -
                   path_loss(r, link, base).path_loss_db;
    double field = shadowing_field(link.rx.xy(), shadowed.shadowing_corr_m, 41);
    CHECK(delta == doctest::Approx(3.0 * field).epsilon(1e-9));
}

TEST_CASE("radio map masks buildings and matches the link oracle") {
    env::Scenario s = walled();
    env::RasterEnv r = env::rasterize(s, 2.0);
    RadioMapConfig mc;
    mc.resolution_m = 4.0;
    mc.rx_height_m = 1.5;
    OracleConfig cfg;
    RadioMapGrid map = radio_map(r, s.tx_sites[0], mc, cfg);
    REQUIRE(map.nx == 50);
    REQUIRE(map.ny == 50);

    // The wall body is masked; open cells carry finite values.
    int masked = 0, valued = 0;
    for (int iy = 0; iy < map.ny; ++iy) {
        for (int ix = 0; ix < map.nx; ++ix) {
            std::size_t i = map.idx(ix, iy);
            if (map.masked[i]) {
                masked++;
            } else {
                valued++;
                CHECK(std::isfinite(map.path_loss_db[i]));
            }
        }
    }
    CHECK(masked > 0);
    CHECK(valued > masked);

    // One spot check against a directly evaluated link at the cell center.
    int cx = 10, cy = 10;
    std::size_t ci = map.idx(cx, cy);
    REQUIRE_FALSE(map.masked[ci]);
    Vec2 center{map.origin.x + (cx + 0.5) * 4.0, map.origin.y + (cy + 0.5) * 4.0};
    Link probe{s.tx_sites[0].position, {center.x, center.y, 1.5}, s.tx_sites[0].frequency_hz};
    ChannelSample cs = path_loss(r, probe, cfg);
    CHECK(map.path_loss_db[ci] == doctest::Approx(cs.path_loss_db).epsilon(1e-12));
    CHECK((map.los[ci] != 0) == cs.los);
}

TEST_CASE("radio map container round trip") {
    env::Scenario s = flat(40.0);
    env::RasterEnv r = env::rasterize(s, 2.0);
    RadioMapConfig mc;
    OracleConfig cfg;
    RadioMapGrid map = radio_map(r, s.tx_sites[0], mc, cfg);
    const char* path = "test_radiomap_roundtrip.bin";
    save_radio_map(map, path);
    RadioMapGrid back = load_radio_map(path);
    CHECK(back.nx == map.nx);
    CHECK(back.ny == map.ny);
    CHECK(back.path_loss_db == map.path_loss_db);
    CHECK(back.los == map.los);
    CHECK(back.masked == map.masked);
    CHECK(back.frequency_hz == map.frequency_hz);

    // Saving the same content twice produces byte-identical files.
    const char* path2 = "test_radiomap_roundtrip2.bin";
    save_radio_map(map, path2);
    CHECK(io::file_hash(path) == io::file_hash(path2));
    std::remove(path);
    std::remove(path2);
}
