#include "chanform/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chanform/common.hpp"
#include "chanform/rng.hpp"

using nlohmann::json;

namespace chanform::env {

std::vector<MaterialSpec> default_materials() {
    return {
        {"concrete", 5.31, 0.48, 0.20, false},
        {"brick", 3.91, 0.04, 0.30, false},
        {"metal", 1.0, 0.0, 0.05, true},
    };
}

void Scenario::validate() const {
    require(bounds.width() > 0 && bounds.height() > 0, ErrorKind::validation,
            "scenario bounds are empty");
    for (const auto& b : buildings) {
        require(b.footprint.size() >= 3 && polygon_is_simple(b.footprint),
                ErrorKind::validation, "building footprint is not a simple polygon");
        require(b.height_m > 0, ErrorKind::validation, "building height must be positive");
        require(materials.count(b.material) == 1, ErrorKind::validation,
                "building references unknown material '" + b.material + "'");
        for (const Vec2& p : b.footprint) {
            require(bounds.contains(p), ErrorKind::validation,
                    "building footprint outside scenario bounds");
        }
    }
    for (const auto& r : roads) {
        require(r.centerline.size() >= 2, ErrorKind::validation, "road needs >= 2 points");
        require(r.width_m > 0, ErrorKind::validation, "road width must be positive");
        for (const Vec2& p : r.centerline) {
            require(bounds.contains(p), ErrorKind::validation,
                    "road centerline outside scenario bounds");
        }
    }
    for (const auto& v : vegetation) {
        require(v.polygon.size() >= 3 && polygon_is_simple(v.polygon),
                ErrorKind::validation, "vegetation polygon is not simple");
        require(v.attenuation_db_per_m >= 0, ErrorKind::validation,
                "vegetation attenuation must be >= 0");
        for (const Vec2& p : v.polygon) {
            require(bounds.contains(p), ErrorKind::validation,
                    "vegetation polygon outside scenario bounds");
        }
    }
    require(!tx_sites.empty(), ErrorKind::validation, "scenario has no TX sites");
    for (const auto& t : tx_sites) {
        require(t.frequency_hz > 0, ErrorKind::validation, "TX frequency must be positive");
        require(bounds.contains(t.position.xy()), ErrorKind::validation,
                "TX position outside scenario bounds");
    }
}

namespace {

bool building_clear(const Polygon& candidate, const Scenario& s) {
    for (const auto& b : s.buildings) {
        if (polygons_overlap(candidate, b.footprint)) return false;
    }
    for (const auto& r : s.roads) {
        if (polygon_polyline_distance(candidate, r.centerline) < r.width_m * 0.5) {
            return false;
        }
    }
    return true;
}

Polygon make_blob(const Vec2& c, double radius, Rng& rng) {
    // Irregular convex-ish polygon: jittered radii over 7 angles.
    Polygon poly;
    int sides = 7;
    for (int i = 0; i < sides; ++i) {
        double ang = 2.0 * M_PI * i / sides;
        double r = radius * rng.uniform(0.65, 1.0);
        poly.push_back({c.x + r * std::cos(ang), c.y + r * std::sin(ang)});
    }
    return poly;
}

} // namespace

Scenario generate_scenario(std::int64_t seed, const GeneratorConfig& cfg) {
    require(cfg.extent_m > 2 * cfg.margin_m, ErrorKind::validation,
            "generator extent must exceed twice the margin");
    require(cfg.building_count >= 0 && cfg.tx_count >= 1, ErrorKind::validation,
            "generator counts invalid");

    Scenario s;
    s.seed = seed;
    s.bounds = {{0.0, 0.0}, {cfg.extent_m, cfg.extent_m}};
    for (const auto& m : default_materials()) s.materials[m.id] = m;

    Rng rng(static_cast<std::uint64_t>(seed) ^ 0xC0FFEE123456789ull);
    Rect inner = s.bounds.shrunk(cfg.margin_m);

    // Roads first; buildings are rejected against them, which leaves open
    // corridors through the built-up area.
    for (int i = 0; i < cfg.road_count; ++i) {
        Road r;
        r.width_m = rng.uniform(cfg.road_min_width_m, cfg.road_max_width_m);
        bool horizontal = rng.uniform() < 0.5;
        double offset = rng.uniform(inner.lo.y, inner.hi.y);
        double wobble = rng.uniform(-15.0, 15.0);
        if (horizontal) {
            r.centerline = {{inner.lo.x, offset},
                            {0.5 * (inner.lo.x + inner.hi.x), std::clamp(offset + wobble, inner.lo.y, inner.hi.y)},
                            {inner.hi.x, offset}};
        } else {
            offset = rng.uniform(inner.lo.x, inner.hi.x);
            r.centerline = {{offset, inner.lo.y},
                            {std::clamp(offset + wobble, inner.lo.x, inner.hi.x), 0.5 * (inner.lo.y + inner.hi.y)},
                            {offset, inner.hi.y}};
        }
        s.roads.push_back(r);
    }

    for (int i = 0; i < cfg.building_count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_tries_per_item; ++attempt) {
            double hx = 0.5 * rng.uniform(cfg.building_min_side_m, cfg.building_max_side_m);
            double hy = 0.5 * rng.uniform(cfg.building_min_side_m, cfg.building_max_side_m);
            double angle = rng.uniform(0.0, cfg.building_max_rotation_deg) * M_PI / 180.0;
            Vec2 c{rng.uniform(inner.lo.x + hx, inner.hi.x - hx),
                   rng.uniform(inner.lo.y + hy, inner.hi.y - hy)};
            Polygon poly = make_rectangle(c, hx, hy, angle);
            Rect bb = polygon_bbox(poly);
            if (!inner.contains(bb.lo) || !inner.contains(bb.hi)) continue;
            if (!building_clear(poly, s)) continue;
            Building b;
            b.footprint = poly;
            b.height_m = rng.uniform(cfg.building_min_height_m, cfg.building_max_height_m);
            b.material = cfg.material_pool[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(cfg.material_pool.size()) - 1))];
            s.buildings.push_back(b);
            placed = true;
            break;
        }
        if (!placed) {
            fail(ErrorKind::placement_failure,
                 "could not place building " + std::to_string(i) + " after " +
                     std::to_string(cfg.max_tries_per_item) + " tries");
        }
    }

    for (int i = 0; i < cfg.vegetation_count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_tries_per_item; ++attempt) {
            double radius = rng.uniform(cfg.vegetation_min_radius_m, cfg.vegetation_max_radius_m);
            Vec2 c{rng.uniform(inner.lo.x + radius, inner.hi.x - radius),
                   rng.uniform(inner.lo.y + radius, inner.hi.y - radius)};
            Polygon poly = make_blob(c, radius, rng);
            bool clear = true;
            for (const auto& b : s.buildings) {
                if (polygons_overlap(poly, b.footprint)) { clear = false; break; }
            }
            if (clear) {
                for (const auto& r : s.roads) {
                    if (polygon_polyline_distance(poly, r.centerline) < r.width_m * 0.5) {
                        clear = false;
                        break;
                    }
                }
            }
            if (!clear) continue;
            s.vegetation.push_back({poly, cfg.vegetation_attenuation_db_per_m});
            placed = true;
            break;
        }
        if (!placed) {
            fail(ErrorKind::placement_failure,
                 "could not place vegetation patch " + std::to_string(i));
        }
    }

    for (int i = 0; i < cfg.tx_count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < cfg.max_tries_per_item; ++attempt) {
            Vec2 c{rng.uniform(inner.lo.x, inner.hi.x), rng.uniform(inner.lo.y, inner.hi.y)};
            bool inside_building = false;
            for (const auto& b : s.buildings) {
                if (point_in_polygon(c, b.footprint)) { inside_building = true; break; }
            }
            if (inside_building) continue;
            double h = rng.uniform(cfg.tx_min_height_m, cfg.tx_max_height_m);
            s.tx_sites.push_back({{c.x, c.y, h}, cfg.frequency_hz});
            placed = true;
            break;
        }
        if (!placed) fail(ErrorKind::placement_failure, "could not place TX site");
    }

    s.validate();
    return s;
}

namespace {

json vec2_to_json(const Vec2& p) { return json::array({p.x, p.y}); }

Vec2 vec2_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json polygon_to_json(const Polygon& poly) {
    json arr = json::array();
    for (const Vec2& p : poly) arr.push_back(vec2_to_json(p));
    return arr;
}

Polygon polygon_from_json(const json& j) {
    Polygon poly;
    for (const auto& p : j) poly.push_back(vec2_from_json(p));
    return poly;
}

} // namespace

std::string scenario_to_json(const Scenario& s) {
    json j;
    j["format_version"] = 1;
    j["seed"] = s.seed;
    j["bounds"] = {{"lo", vec2_to_json(s.bounds.lo)}, {"hi", vec2_to_json(s.bounds.hi)}};
    json mats = json::array();
    for (const auto& [id, m] : s.materials) {
        mats.push_back({{"id", m.id},
                        {"relative_permittivity", m.relative_permittivity},
                        {"conductivity_s_per_m", m.conductivity_s_per_m},
                        {"scattering_coefficient", m.scattering_coefficient},
                        {"perfect_conductor", m.perfect_conductor}});
    }
    j["materials"] = mats;
    json blds = json::array();
    for (const auto& b : s.buildings) {
        blds.push_back({{"footprint", polygon_to_json(b.footprint)},
                        {"height_m", b.height_m},
                        {"material", b.material}});
    }
    j["buildings"] = blds;
    json roads = json::array();
    for (const auto& r : s.roads) {
        roads.push_back({{"centerline", polygon_to_json(r.centerline)},
                         {"width_m", r.width_m}});
    }
    j["roads"] = roads;
    json veg = json::array();
    for (const auto& v : s.vegetation) {
        veg.push_back({{"polygon", polygon_to_json(v.polygon)},
                       {"attenuation_db_per_m", v.attenuation_db_per_m}});
    }
    j["vegetation"] = veg;
    json txs = json::array();
    for (const auto& t : s.tx_sites) {
        txs.push_back({{"position", json::array({t.position.x, t.position.y, t.position.z})},
                       {"frequency_hz", t.frequency_hz}});
    }
    j["tx_sites"] = txs;
    return j.dump(2) + "\n";
}

Scenario scenario_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::io, std::string("scenario JSON parse failed: ") + e.what());
    }
    try {
        int version = j.at("format_version").get<int>();
        require(version == 1, ErrorKind::validation,
                "unsupported scenario format_version " + std::to_string(version));
        Scenario s;
        s.seed = j.value("seed", std::int64_t{0});
        s.bounds.lo = vec2_from_json(j.at("bounds").at("lo"));
        s.bounds.hi = vec2_from_json(j.at("bounds").at("hi"));
        for (const auto& m : j.at("materials")) {
            MaterialSpec spec;
            spec.id = m.at("id").get<std::string>();
            spec.relative_permittivity = m.at("relative_permittivity").get<double>();
            spec.conductivity_s_per_m = m.at("conductivity_s_per_m").get<double>();
            spec.scattering_coefficient = m.at("scattering_coefficient").get<double>();
            spec.perfect_conductor = m.value("perfect_conductor", false);
            s.materials[spec.id] = spec;
        }
        for (const auto& b : j.at("buildings")) {
            s.buildings.push_back({polygon_from_json(b.at("footprint")),
                                   b.at("height_m").get<double>(),
                                   b.at("material").get<std::string>()});
        }
        for (const auto& r : j.at("roads")) {
            s.roads.push_back({polygon_from_json(r.at("centerline")),
                               r.at("width_m").get<double>()});
        }
        for (const auto& v : j.at("vegetation")) {
            s.vegetation.push_back({polygon_from_json(v.at("polygon")),
                                    v.at("attenuation_db_per_m").get<double>()});
        }
        for (const auto& t : j.at("tx_sites")) {
            const auto& p = t.at("position");
            s.tx_sites.push_back({{p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()},
                                  t.at("frequency_hz").get<double>()});
        }
        s.validate();
        return s;
    } catch (const json::exception& e) {
        fail(ErrorKind::validation, std::string("scenario JSON missing field: ") + e.what());
    }
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << scenario_to_json(s);
    require(out.good(), ErrorKind::io, "write failed for '" + path + "'");
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorKind::io, "cannot open scenario file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return scenario_from_json(ss.str());
}

} // namespace chanform::env
