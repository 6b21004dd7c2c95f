#include <doctest.h>

#include <cmath>
#include <set>

#include "chanform/features.hpp"
#include "chanform/oracle.hpp"

using namespace chanform;
using namespace chanform::feat;

namespace {

env::Scenario flat(double extent = 200.0) {
    env::Scenario s;
    s.bounds = {{0, 0}, {extent, extent}};
    s.tx_sites.push_back({{extent / 4, extent / 2, 10.0}, 5.9e9});
    for (const auto& m : env::default_materials()) s.materials[m.id] = m;
    return s;
}

env::Scenario walled(const std::string& material = "concrete") {
    env::Scenario s = flat();
    env::Building b;
    b.footprint = {{98, 80}, {102, 80}, {102, 120}, {98, 120}};
    b.height_m = 30.0;
    b.material = material;
    s.buildings.push_back(b);
    return s;
}

} // namespace

TEST_CASE("default schema layout") {
    FeatureSchema s = default_schema();
    // 5 geometric + 3 x 4 semantic + 5 physics + 4 material + 6 texture.
    CHECK(s.size() == 32);
    std::set<std::string> names;
    for (const auto& f : s.features) names.insert(f.name);
    CHECK(names.size() == s.size()); // unique

    CHECK(s.index_of("distance_m") == 0);
    CHECK(s.index_of("log10_distance") == 1);
    CHECK(s.index_of("frequency_hz") == 2);
    CHECK(s.index_of("building_ring_10m") == 5);
    CHECK(s.index_of("nope") == -1);
    CHECK(s.has_group(FeatureGroup::texture));
    CHECK(s.group_indices(FeatureGroup::geometric).size() == 5);
    CHECK(s.group_indices(FeatureGroup::physics).size() == 5);
    CHECK(s.group_indices(FeatureGroup::material).size() == 4);
    CHECK(s.groups_present().size() == 7);

    FeatureConfig with_normals;
    with_normals.include_normal_features = true;
    CHECK(default_schema(with_normals).size() == 34);
}

TEST_CASE("group names round trip") {
    for (FeatureGroup g : kAllGroups) {
        CHECK(group_from_name(group_name(g)) == g);
    }
    CHECK_THROWS_AS(group_from_name("semantic_lava"), Error);
}

TEST_CASE("schema subsets keep canonical order") {
    FeatureConfig cfg;
    FeatureSchema a = schema_for_groups(cfg, {FeatureGroup::geometric, FeatureGroup::physics});
    FeatureSchema b = schema_for_groups(cfg, {FeatureGroup::physics, FeatureGroup::geometric});
    REQUIRE(a.size() == 10);
    REQUIRE(b.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.features[i].name == b.features[i].name);
    CHECK(a.fingerprint() == b.fingerprint());
    CHECK(a.features[0].group == FeatureGroup::geometric);
    CHECK(a.features[9].group == FeatureGroup::physics);
}

TEST_CASE("fingerprint tracks names and knobs") {
    FeatureSchema base = default_schema();
    CHECK(base.fingerprint() == default_schema().fingerprint());

    FeatureConfig wider;
    wider.ring_radii_m = {10.0, 25.0, 80.0};
    CHECK(default_schema(wider).fingerprint() != base.fingerprint());

    FeatureConfig more_rays;
    more_rays.fan_rays = 32;
    CHECK(default_schema(more_rays).fingerprint() != base.fingerprint());

    CHECK(schema_for_groups({}, {FeatureGroup::geometric}).fingerprint() !=
          base.fingerprint());
}

TEST_CASE("schema json round trip") {
    FeatureConfig cfg;
    cfg.include_normal_features = true;
    cfg.ring_radii_m = {8.0, 40.0};
    FeatureSchema s = schema_for_groups(
        cfg, {FeatureGroup::geometric, FeatureGroup::material, FeatureGroup::texture});
    FeatureSchema back = schema_from_json(schema_to_json(s));
    CHECK(back.fingerprint() == s.fingerprint());
    CHECK(back.size() == s.size());
    CHECK_THROWS_AS(schema_from_json("not json"), Error);
}

TEST_CASE("geometric and physics features on an open map") {
    env::Scenario s = flat();
    env::RasterEnv r = env::rasterize(s, 2.0);
    oracle::Link link{{50, 100, 10}, {150, 100, 1.5}, 5.9e9};
    FeatureSchema schema =
        schema_for_groups({}, {FeatureGroup::geometric, FeatureGroup::physics});
    FeatureVector fv = extract_link_features(r, nullptr, link, schema);
    REQUIRE(fv.values.size() == 10);

    auto at = [&](const char* name) { return fv.values[schema.index_of(name)]; };
    CHECK(at("distance_m") == doctest::Approx(link.distance_m()).epsilon(1e-12));
    CHECK(at("log10_distance") ==
          doctest::Approx(std::log10(link.distance_m())).epsilon(1e-12));
    CHECK(at("frequency_hz") == doctest::Approx(5.9e9));
    CHECK(at("tx_height_m") == doctest::Approx(10.0));
    CHECK(at("rx_height_m") == doctest::Approx(1.5));
    CHECK(at("los_flag") == 1.0);
    CHECK(at("fresnel_clearance") == doctest::Approx(1.0));
    CHECK(at("dominant_nu") == doctest::Approx(-3.0)); // clear-path floor
    CHECK(at("obstruction_depth_m") == 0.0);
    CHECK(at("obstruction_count") == 0.0);
}

TEST_CASE("physics features flag an obstructed link") {
    env::RasterEnv r = env::rasterize(walled(), 2.0);
    oracle::Link link{{50, 100, 10}, {150, 100, 10}, 5.9e9};
    FeatureSchema schema = schema_for_groups({}, {FeatureGroup::physics});
    FeatureVector fv = extract_link_features(r, nullptr, link, schema);
    auto at = [&](const char* name) { return fv.values[schema.index_of(name)]; };
    CHECK(at("los_flag") == 0.0);
    CHECK(at("fresnel_clearance") == doctest::Approx(-1.0));
    CHECK(at("dominant_nu") > 5.0); // 20 m of excess at mid-span
    CHECK(at("obstruction_depth_m") > 10.0);
    CHECK(at("obstruction_count") >= 1.0);
}

TEST_CASE("semantic rings and corridors saturate on a solid map") {
    env::Scenario s = flat();
    env::Building b;
    b.footprint = {{0, 0}, {200, 0}, {200, 200}, {0, 200}};
    b.height_m = 10.0;
    b.material = "brick";
    s.buildings.push_back(b);
    env::RasterEnv r = env::rasterize(s, 2.0);
    oracle::Link link{{50, 100, 20}, {150, 100, 20}, 5.9e9};
    FeatureSchema schema = schema_for_groups(
        {}, {FeatureGroup::semantic_building, FeatureGroup::semantic_road,
             FeatureGroup::semantic_vegetation});
    FeatureVector fv = extract_link_features(r, nullptr, link, schema);
    auto at = [&](const char* name) { return fv.values[schema.index_of(name)]; };
    CHECK(at("building_ring_10m") == doctest::Approx(1.0));
    CHECK(at("building_ring_25m") == doctest::Approx(1.0));
    CHECK(at("building_ring_50m") == doctest::Approx(1.0));
    CHECK(at("building_corridor") == doctest::Approx(1.0));
    CHECK(at("road_ring_10m") == doctest::Approx(0.0));
    CHECK(at("vegetation_corridor") == doctest::Approx(0.0));
}

TEST_CASE("texture features read the noise channel") {
    env::Scenario s = flat();
    env::RasterEnv r = env::rasterize(s, 2.0);
    oracle::Link link{{50, 100, 10}, {150, 100, 1.5}, 5.9e9};
    FeatureSchema schema = schema_for_groups({}, {FeatureGroup::texture});

    // Without noise the texture channel is all zero.
    FeatureVector quiet = extract_link_features(r, nullptr, link, schema);
    for (double v : quiet.values) CHECK(v == 0.0);

    env::RasterEnv noisy = env::add_texture_noise(r, 5, [](double) { return 2.0; });
    FeatureVector loud = extract_link_features(noisy, nullptr, link, schema);
    auto at = [&](const char* name) { return loud.values[schema.index_of(name)]; };
    CHECK(at("texture_corridor_std") > 0.0);
    CHECK(at("texture_rx") != 0.0);
    // Extraction is deterministic.
    FeatureVector again = extract_link_features(noisy, nullptr, link, schema);
    CHECK(again.values == loud.values);
}

TEST_CASE("material fan summarizes the nearest walls") {
    env::Scenario s = walled("metal");
    env::RasterEnv r = env::rasterize(s, 2.0);
    env::VoxelEnv v = env::voxelize(s, 2.0);
    // RX 10 m south of the wall: a fat sector of the fan hits metal.
    oracle::Link link{{50, 100, 10}, {100, 70, 1.5}, 5.9e9};
    FeatureConfig cfg;
    FeatureSchema schema = schema_for_groups(cfg, {FeatureGroup::material});
    FeatureVector fv = extract_link_features(r, &v, link, schema);
    auto at = [&](const char* name) { return fv.values[schema.index_of(name)]; };
    CHECK(at("wall_hit_fraction") > 0.0);
    CHECK(at("wall_hit_fraction") < 1.0);
    // Every hit wall is a perfect conductor: |Gamma| is exactly 1 and the
    // scattering coefficient is the metal's 0.05.
    CHECK(at("wall_gamma_mean") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(at("wall_scattering_mean") == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(at("wall_hit_distance_m") > 0.0);
    CHECK(at("wall_hit_distance_m") < cfg.fan_range_m);

    // No walls in range: fraction 0 and the distance saturates at the range.
    oracle::Link farlink{{50, 100, 10}, {30, 30, 1.5}, 5.9e9};
    FeatureVector none = extract_link_features(r, &v, farlink, schema);
    CHECK(none.values[schema.index_of("wall_hit_fraction")] == 0.0);
    CHECK(none.values[schema.index_of("wall_hit_distance_m")] ==
          doctest::Approx(cfg.fan_range_m));
    CHECK(none.values[schema.index_of("wall_gamma_mean")] == 0.0);

    // Normal-orientation features stay in [0, 1].
    FeatureConfig ncfg;
    ncfg.include_normal_features = true;
    FeatureSchema nschema = schema_for_groups(ncfg, {FeatureGroup::material});
    FeatureVector nfv = extract_link_features(r, &v, link, nschema);
    double align = nfv.values[nschema.index_of("wall_normal_tx_alignment")];
    double inc = nfv.values[nschema.index_of("wall_incidence_cos")];
    CHECK(align >= 0.0);
    CHECK(align <= 1.0);
    CHECK(inc > 0.0);
    CHECK(inc <= 1.0);
}

TEST_CASE("material group without voxels is a missing modality") {
    env::RasterEnv r = env::rasterize(flat(), 2.0);
    oracle::Link link{{50, 100, 10}, {150, 100, 1.5}, 5.9e9};
    FeatureSchema schema = schema_for_groups({}, {FeatureGroup::material});
    try {
        extract_link_features(r, nullptr, link, schema);
        FAIL("expected missing_modality");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::missing_modality);
    }
}

TEST_CASE("links outside the raster are rejected") {
    env::RasterEnv r = env::rasterize(flat(), 2.0);
    oracle::Link link{{50, 100, 10}, {250, 100, 1.5}, 5.9e9};
    FeatureSchema schema = schema_for_groups({}, {FeatureGroup::geometric});
    try {
        extract_link_features(r, nullptr, link, schema);
        FAIL("expected out_of_bounds");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::out_of_bounds);
    }
}
