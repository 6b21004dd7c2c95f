#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "chanform/geometry.hpp"

namespace chanform::env {

struct MaterialSpec {
    std::string id;
    double relative_permittivity = 1.0;
    double conductivity_s_per_m = 0.0;
    double scattering_coefficient = 0.0; // fraction of amplitude lost per bounce
    bool perfect_conductor = false;
};

// Defaults: concrete, brick, metal. Metal is treated as a perfect conductor.
std::vector<MaterialSpec> default_materials();

struct Building {
    Polygon footprint;      // simple polygon, CCW
    double height_m = 10.0;
    std::string material = "concrete";
};

struct Road {
    std::vector<Vec2> centerline;
    double width_m = 8.0;
};

struct Vegetation {
    Polygon polygon;
    double attenuation_db_per_m = 0.15;
};

struct TxSite {
    Vec3 position;
    double frequency_hz = 5.9e9;
};

struct Scenario {
    Rect bounds;
    std::vector<Building> buildings;
    std::vector<Road> roads;
    std::vector<Vegetation> vegetation;
    std::vector<TxSite> tx_sites;
    std::map<std::string, MaterialSpec> materials;
    std::int64_t seed = 0;

    // Throws ErrorKind::validation on any broken invariant (geometry out of
    // bounds, unknown material reference, non-simple footprint, f <= 0).
    void validate() const;
};

struct GeneratorConfig {
    double extent_m = 240.0;          // square area side
    double margin_m = 20.0;           // keep-out ring inside the bounds
    int building_count = 18;
    double building_min_side_m = 8.0;
    double building_max_side_m = 26.0;
    double building_min_height_m = 8.0;
    double building_max_height_m = 24.0;
    double building_max_rotation_deg = 30.0;
    int road_count = 3;
    double road_min_width_m = 6.0;
    double road_max_width_m = 10.0;
    int vegetation_count = 5;
    double vegetation_min_radius_m = 4.0;
    double vegetation_max_radius_m = 10.0;
    double vegetation_attenuation_db_per_m = 0.15;
    int tx_count = 1;
    double tx_min_height_m = 10.0;
    double tx_max_height_m = 18.0;
    double frequency_hz = 5.9e9;
    std::vector<std::string> material_pool = {"concrete", "brick", "metal"};
    int max_tries_per_item = 200;
};

// Deterministic in (seed, config). Buildings never overlap each other or
// roads; throws ErrorKind::placement_failure once retries are exhausted.
Scenario generate_scenario(std::int64_t seed, const GeneratorConfig& config);

std::string scenario_to_json(const Scenario& s);
Scenario scenario_from_json(const std::string& text);
void save_scenario(const Scenario& s, const std::string& path);
Scenario load_scenario(const std::string& path);

} // namespace chanform::env
