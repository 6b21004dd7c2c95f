#include <doctest.h>

#include <cmath>

#include "chanform/ray_launch.hpp"

using namespace chanform;
using namespace chanform::oracle;

namespace {

env::Scenario empty_world(double extent = 240.0) {
    env::Scenario s;
    s.bounds = {{0, 0}, {extent, extent}};
    s.tx_sites.push_back({{20.0, extent / 2, 10.0}, 5.9e9});
    for (const auto& m : env::default_materials()) s.materials[m.id] = m;
    return s;
}

// One long wall (y in [20, 24]) of the given material in a 60 x 40 court.
env::Scenario wall_world(const std::string& material) {
    env::Scenario s;
    s.bounds = {{0, 0}, {60, 40}};
    env::Building b;
    b.footprint = {{2, 20}, {58, 20}, {58, 24}, {2, 24}};
    b.height_m = 10.0;
    b.material = material;
    s.buildings.push_back(b);
    s.tx_sites.push_back({{10.0, 5.0, 2.0}, 5.9e9});
    for (const auto& m : env::default_materials()) s.materials[m.id] = m;
    return s;
}

env::MaterialSpec lossless(double er) {
    return {"test", er, 0.0, 0.0, false};
}

} // namespace

TEST_CASE("reflection magnitude closed forms") {
    // er = 4 lossless at normal incidence: both polarizations give 1/3.
    CHECK(std::abs(fresnel_reflection_magnitude(lossless(4.0), 1.0, 5.9e9) - 1.0 / 3.0) <
          1e-12);
    // Grazing incidence reflects fully.
    CHECK(std::abs(fresnel_reflection_magnitude(lossless(4.0), 0.0, 5.9e9) - 1.0) < 1e-12);
    // Brewster angle for er = 4: cos = 1/sqrt(5); parallel term vanishes and
    // the perpendicular one is 0.6, so the average is exactly 0.3.
    CHECK(std::abs(fresnel_reflection_magnitude(lossless(4.0), 1.0 / std::sqrt(5.0),
                                                5.9e9) -
                   0.3) < 1e-12);
    // Perfect conductors reflect fully at every angle.
    env::MaterialSpec metal{"metal", 1.0, 0.0, 0.05, true};
    CHECK(fresnel_reflection_magnitude(metal, 1.0, 5.9e9) == 1.0);
    CHECK(fresnel_reflection_magnitude(metal, 0.3, 5.9e9) == 1.0);
    // Conductivity only increases |Gamma| at normal incidence.
    env::MaterialSpec lossy{"lossy", 4.0, 0.5, 0.0, false};
    CHECK(fresnel_reflection_magnitude(lossy, 1.0, 5.9e9) >
          fresnel_reflection_magnitude(lossless(4.0), 1.0, 5.9e9));
    CHECK_THROWS_AS(fresnel_reflection_magnitude(lossless(4.0), 1.0, 0.0), Error);
}

TEST_CASE("first_hit marches to the expected voxel and face") {
    env::Scenario s = wall_world("concrete");
    env::VoxelEnv v = env::voxelize(s, 2.0);

    // Straight at the wall from the south: face -y at y = 20.
    RayHit h = first_hit(v, {10, 5, 2}, {0, 1, 0}, 100.0);
    REQUIRE(h.hit);
    CHECK(h.face == env::kFaceNegY);
    CHECK(h.distance_m == doctest::Approx(15.0));
    CHECK(h.iy == 10);
    CHECK(h.ix == 5);
    CHECK(h.iz == 1);

    // Away from the wall: leaves the grid without hitting.
    RayHit miss = first_hit(v, {10, 5, 2}, {0, -1, 0}, 100.0);
    CHECK_FALSE(miss.hit);

    // Range-limited march stops short.
    RayHit short_ray = first_hit(v, {10, 5, 2}, {0, 1, 0}, 10.0);
    CHECK_FALSE(short_ray.hit);

    // Origin outside the grid never hits.
    RayHit outside = first_hit(v, {-5, 5, 2}, {1, 0, 0}, 100.0);
    CHECK_FALSE(outside.hit);
}

TEST_CASE("free space yields exactly the direct path") {
    env::Scenario s = empty_world();
    env::VoxelEnv v = env::voxelize(s, 2.0);
    Link link{{20, 120, 10}, {120, 120, 10}, 5.9e9};
    RayLaunchConfig cfg;
    auto paths = ray_launch(v, link, cfg);
    REQUIRE(paths.size() == 1);
    CHECK(paths[0].interaction_count == 0);
    CHECK(paths[0].delay_s == doctest::Approx(100.0 / kSpeedOfLight).epsilon(1e-12));
    CHECK(paths[0].power_gain_db == doctest::Approx(-40.0).epsilon(1e-12));
    REQUIRE(paths[0].points.size() == 2);
    CHECK(paths[0].points.back().x == doctest::Approx(120.0));

    ChannelSample cs = multipath_sample(v, link, cfg);
    CHECK(cs.los);
    CHECK(cs.path_loss_db == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(cs.rms_delay_spread_s <= 1e-12); // one path: variance is pure rounding
    CHECK(cs.effective_path_count == 1);
}

TEST_CASE("a wall adds a specular bounce with exact bookkeeping") {
    env::Scenario s = wall_world("metal");
    env::VoxelEnv v = env::voxelize(s, 2.0);
    Link link{{10, 5, 2}, {30, 5, 2}, 5.9e9};
    RayLaunchConfig cfg;
    cfg.azimuth_rays = 720;
    cfg.elevation_rays = 9;
    auto paths = ray_launch(v, link, cfg);
    REQUIRE(paths.size() >= 2);

    int direct = 0, bounced = 0;
    double mirror_len = std::hypot(20.0, 30.0); // image of RX across y = 20
    for (const auto& p : paths) {
        if (p.interaction_count == 0) {
            direct++;
            CHECK(p.delay_s == doctest::Approx(20.0 / kSpeedOfLight).epsilon(1e-12));
        } else {
            bounced++;
            REQUIRE(p.interaction_count == 1);
            double len = p.delay_s * kSpeedOfLight;
            CHECK(len > mirror_len - 1.6);
            CHECK(len < mirror_len + 1.6);
            // The bounce point lies on the wall face y = 20.
            REQUIRE(p.points.size() == 3);
            CHECK(p.points[1].y == doctest::Approx(20.0).epsilon(1e-6));
        }
        // Metal walls: amplitude is exactly 0.95 per bounce, so gain and
        // delay are locked together.
        double len = p.delay_s * kSpeedOfLight;
        double expected_gain = -20.0 * std::log10(std::max(len, 1.0)) +
                               20.0 * p.interaction_count * std::log10(0.95);
        CHECK(p.power_gain_db == doctest::Approx(expected_gain).epsilon(1e-9));
    }
    CHECK(direct == 1); // deduplication keeps one direct path
    CHECK(bounced >= 1);

    // Paths arrive sorted by delay.
    for (std::size_t i = 0; i + 1 < paths.size(); ++i) {
        CHECK(paths[i].delay_s <= paths[i + 1].delay_s);
    }

    ChannelSample cs = multipath_sample(v, link, cfg);
    CHECK(cs.los);
    CHECK(cs.effective_path_count >= 2);
    CHECK(cs.rms_delay_spread_s > 0.0);
    // Extra received power cannot exceed the direct-only case.
    CHECK(cs.path_loss_db < 20.0 * std::log10(20.0) + 1e-9);
}

TEST_CASE("reflection amplitude honors the material") {
    Link link{{10, 5, 2}, {30, 5, 2}, 5.9e9};
    RayLaunchConfig cfg;
    cfg.azimuth_rays = 720;

    auto best_bounce = [&](const std::string& mat) {
        env::VoxelEnv v = env::voxelize(wall_world(mat), 2.0);
        double best = -1e30;
        for (const auto& p : ray_launch(v, link, cfg)) {
            if (p.interaction_count == 1) best = std::max(best, p.power_gain_db);
        }
        return best;
    };
    double metal = best_bounce("metal");       // |Gamma| = 1, scatter 0.05
    double concrete = best_bounce("concrete"); // lossy dielectric, scatter 0.20
    CHECK(metal > -1e29);
    CHECK(concrete > -1e29);
    CHECK(metal > concrete + 3.0); // clearly stronger, not a tie
}

TEST_CASE("path budget suppresses long bounces") {
    env::VoxelEnv v = env::voxelize(wall_world("metal"), 2.0);
    Link link{{10, 5, 2}, {30, 5, 2}, 5.9e9};
    RayLaunchConfig cfg;
    cfg.azimuth_rays = 720;
    cfg.max_path_length_m = 25.0; // direct fits (20 m), mirror (36 m) does not
    auto paths = ray_launch(v, link, cfg);
    for (const auto& p : paths) {
        CHECK(p.interaction_count == 0);
        CHECK(p.delay_s * kSpeedOfLight <= 25.0 + 1e-9);
    }
}

TEST_CASE("endpoints inside occupied voxels are rejected") {
    env::VoxelEnv v = env::voxelize(wall_world("concrete"), 2.0);
    Link inside_wall{{10, 21, 2}, {30, 5, 2}, 5.9e9};
    try {
        ray_launch(v, inside_wall, {});
        FAIL("expected invalid_endpoint");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_endpoint);
    }
    Link outside_grid{{10, 5, 2}, {300, 5, 2}, 5.9e9};
    CHECK_THROWS_AS(ray_launch(v, outside_grid, {}), Error);
}

TEST_CASE("pdp synthesis math") {
    std::vector<PathComponent> two{{100e-9, 0.0, 0, {}}, {300e-9, -10.0, 1, {}}};
    PdpResult r = synth_pdp(two, 5e-9, 25.0);
    REQUIRE(r.pdp.size() == 2);
    CHECK(r.pdp[0].first == doctest::Approx(100e-9));
    CHECK(r.pdp[0].second == doctest::Approx(0.0));
    CHECK(r.pdp[1].first == doctest::Approx(300e-9));
    CHECK(r.pdp[1].second == doctest::Approx(-10.0));
    CHECK(r.rms_delay_spread_s == doctest::Approx(5.74959574576069e-8).epsilon(1e-12));
    CHECK(r.effective_path_count == 2);

    // A tighter effective window drops the weak path.
    CHECK(synth_pdp(two, 5e-9, 5.0).effective_path_count == 1);

    // Same-bin powers accumulate linearly.
    std::vector<PathComponent> close{{101e-9, -3.0, 0, {}}, {103e-9, -3.0, 1, {}}};
    PdpResult merged = synth_pdp(close, 5e-9, 25.0);
    REQUIRE(merged.pdp.size() == 1);
    CHECK(merged.pdp[0].second ==
          doctest::Approx(10.0 * std::log10(2.0 * std::pow(10.0, -0.3))).epsilon(1e-12));

    CHECK_THROWS_AS(synth_pdp({}, 5e-9, 25.0), Error);
    CHECK_THROWS_AS(synth_pdp(two, 0.0, 25.0), Error);
}

TEST_CASE("ray launch configuration is validated") {
    env::VoxelEnv v = env::voxelize(empty_world(60.0), 2.0);
    Link link{{10, 30, 5}, {50, 30, 5}, 5.9e9};
    RayLaunchConfig bad;
    bad.max_reflections = 4;
    CHECK_THROWS_AS(ray_launch(v, link, bad), Error);
    RayLaunchConfig zero_capture;
    zero_capture.capture_radius_m = 0.0;
    CHECK_THROWS_AS(ray_launch(v, link, zero_capture), Error);
    Link degenerate{{10, 30, 5}, {10, 30, 5}, 5.9e9};
    CHECK_THROWS_AS(ray_launch(v, degenerate, {}), Error);
}
