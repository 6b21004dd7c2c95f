#include "chanform/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chanform/oracle.hpp"
#include "chanform/ray_launch.hpp"
#include "chanform/rng.hpp"

namespace chanform::feat {

using json = nlohmann::json;

const char* group_name(FeatureGroup g) {
    switch (g) {
        case FeatureGroup::geometric: return "geometric";
        case FeatureGroup::semantic_building: return "semantic_building";
        case FeatureGroup::semantic_road: return "semantic_road";
        case FeatureGroup::semantic_vegetation: return "semantic_vegetation";
        case FeatureGroup::physics: return "physics";
        case FeatureGroup::material: return "material";
        case FeatureGroup::texture: return "texture";
    }
    fail(ErrorKind::validation, "invalid feature group");
}

FeatureGroup group_from_name(const std::string& name) {
    for (FeatureGroup g : kAllGroups) {
        if (name == group_name(g)) return g;
    }
    fail(ErrorKind::validation, "unknown feature group '" + name + "'");
}

int FeatureSchema::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

std::vector<std::size_t> FeatureSchema::group_indices(FeatureGroup g) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].group == g) out.push_back(i);
    }
    return out;
}

bool FeatureSchema::has_group(FeatureGroup g) const {
    return std::any_of(features.begin(), features.end(),
                       [&](const FeatureDef& f) { return f.group == g; });
}

std::vector<FeatureGroup> FeatureSchema::groups_present() const {
    std::vector<FeatureGroup> out;
    for (FeatureGroup g : kAllGroups) {
        if (has_group(g)) out.push_back(g);
    }
    return out;
}

std::uint64_t FeatureSchema::fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& f : features) {
        h = hash_string(f.name, h);
        h = hash_string(group_name(f.group), h);
    }
    std::vector<double> knobs = config.ring_radii_m;
    knobs.push_back(config.ring_samples);
    knobs.push_back(config.corridor_samples_along);
    knobs.push_back(config.corridor_samples_across);
    knobs.push_back(config.fan_rays);
    knobs.push_back(config.fan_range_m);
    knobs.push_back(config.include_normal_features ? 1.0 : 0.0);
    return hash_doubles(knobs, h);
}

namespace {

std::string radius_tag(double r) {
    std::ostringstream os;
    os << r;
    return os.str();
}

void append_group(FeatureSchema& s, FeatureGroup g) {
    const FeatureConfig& c = s.config;
    auto add = [&](const std::string& name) { s.features.push_back({name, g}); };
    switch (g) {
        case FeatureGroup::geometric:
            add("distance_m");
            add("log10_distance");
            add("frequency_hz");
            add("tx_height_m");
            add("rx_height_m");
            break;
        case FeatureGroup::semantic_building:
        case FeatureGroup::semantic_road:
        case FeatureGroup::semantic_vegetation: {
            std::string cls = g == FeatureGroup::semantic_building ? "building"
                              : g == FeatureGroup::semantic_road   ? "road"
                                                                   : "vegetation";
            for (double r : c.ring_radii_m) add(cls + "_ring_" + radius_tag(r) + "m");
            add(cls + "_corridor");
            break;
        }
        case FeatureGroup::physics:
            add("los_flag");
            add("fresnel_clearance");
            add("dominant_nu");
            add("obstruction_depth_m");
            add("obstruction_count");
            break;
        case FeatureGroup::material:
            add("wall_gamma_mean");
            add("wall_scattering_mean");
            add("wall_hit_fraction");
            add("wall_hit_distance_m");
            if (c.include_normal_features) {
                add("wall_normal_tx_alignment");
                add("wall_incidence_cos");
            }
            break;
        case FeatureGroup::texture:
            for (double r : c.ring_radii_m) add("texture_ring_" + radius_tag(r) + "m");
            add("texture_corridor_mean");
            add("texture_corridor_std");
            add("texture_rx");
            break;
    }
}

} // namespace

FeatureSchema default_schema(const FeatureConfig& cfg) {
    return schema_for_groups(cfg, {kAllGroups, kAllGroups + std::size(kAllGroups)});
}

FeatureSchema schema_for_groups(const FeatureConfig& cfg,
                                const std::vector<FeatureGroup>& groups) {
    require(!groups.empty(), ErrorKind::validation, "schema needs at least one group");
    require(!cfg.ring_radii_m.empty() && cfg.ring_samples >= 1 &&
                cfg.corridor_samples_along >= 1 && cfg.corridor_samples_across >= 1 &&
                cfg.fan_rays >= 1 && cfg.fan_range_m > 0,
            ErrorKind::validation, "invalid feature config");
    FeatureSchema s;
    s.config = cfg;
    // Canonical group order regardless of the order requested.
    for (FeatureGroup g : kAllGroups) {
        if (std::find(groups.begin(), groups.end(), g) != groups.end()) append_group(s, g);
    }
    require(!s.features.empty(), ErrorKind::validation, "no known groups requested");
    return s;
}

std::string schema_to_json(const FeatureSchema& s) {
    json j;
    j["features"] = json::array();
    for (const auto& f : s.features) {
        j["features"].push_back({{"name", f.name}, {"group", group_name(f.group)}});
    }
    j["config"] = {
        {"ring_radii_m", s.config.ring_radii_m},
        {"ring_samples", s.config.ring_samples},
        {"corridor_samples_along", s.config.corridor_samples_along},
        {"corridor_samples_across", s.config.corridor_samples_across},
        {"fan_rays", s.config.fan_rays},
        {"fan_range_m", s.config.fan_range_m},
        {"include_normal_features", s.config.include_normal_features},
    };
    return j.dump();
}

FeatureSchema schema_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::io, std::string("bad schema JSON: ") + e.what());
    }
    FeatureSchema s;
    try {
        for (const auto& f : j.at("features")) {
            s.features.push_back(
                {f.at("name").get<std::string>(), group_from_name(f.at("group"))});
        }
        const auto& c = j.at("config");
        s.config.ring_radii_m = c.at("ring_radii_m").get<std::vector<double>>();
        s.config.ring_samples = c.at("ring_samples").get<int>();
        s.config.corridor_samples_along = c.at("corridor_samples_along").get<int>();
        s.config.corridor_samples_across = c.at("corridor_samples_across").get<int>();
        s.config.fan_rays = c.at("fan_rays").get<int>();
        s.config.fan_range_m = c.at("fan_range_m").get<double>();
        s.config.include_normal_features = c.at("include_normal_features").get<bool>();
    } catch (const json::exception& e) {
        fail(ErrorKind::schema_mismatch, std::string("bad schema fields: ") + e.what());
    }
    require(!s.features.empty(), ErrorKind::schema_mismatch, "schema has no features");
    return s;
}

namespace {

bool world_in_bounds(const env::RasterEnv& r, const Vec2& p) {
    return p.x >= r.origin.x && p.x < r.origin.x + r.width() && p.y >= r.origin.y &&
           p.y < r.origin.y + r.height_extent();
}

double channel_at(const env::RasterEnv& r, env::Channel c, const Vec2& p) {
    int ix, iy;
    r.cell_of(p, ix, iy);
    return r.channel(c)[r.idx(ix, iy)];
}

// Mean of a channel over ring_samples points on the circle of the given
// radius around center; points outside the raster are skipped.
double ring_mean(const env::RasterEnv& r, env::Channel c, const Vec2& center,
                 double radius, int samples) {
    double sum = 0.0;
    int used = 0;
    for (int k = 0; k < samples; ++k) {
        double a = 2.0 * M_PI * (k + 0.5) / samples;
        Vec2 p{center.x + radius * std::cos(a), center.y + radius * std::sin(a)};
        if (!world_in_bounds(r, p)) continue;
        sum += channel_at(r, c, p);
        used++;
    }
    return used > 0 ? sum / used : 0.0;
}

struct CorridorSampler {
    std::vector<Vec2> points;

    CorridorSampler(const env::RasterEnv& r, const oracle::Link& link, int n_along, int n_across) {
        Vec2 a = link.tx.xy();
        Vec2 b = link.rx.xy();
        Vec2 axis = b - a;
        double len = axis.norm();
        Vec2 u = len > 1e-12 ? axis * (1.0 / len) : Vec2{1, 0};
        Vec2 perp{-u.y, u.x};
        // Corridor half-width: the first Fresnel-zone radius at mid-path
        // (never narrower than one cell so coarse grids still sample).
        double half = oracle::fresnel_radius(link.distance_m() / 2.0,
                                             link.distance_m() / 2.0, link.wavelength_m());
        half = std::max(half, r.resolution_m * 0.5);
        for (int j = 0; j < n_along; ++j) {
            double t = (j + 0.5) / n_along;
            Vec2 on_axis = a + axis * t;
            for (int l = 0; l < n_across; ++l) {
                double w = ((l + 0.5) / n_across * 2.0 - 1.0) * half;
                Vec2 p = on_axis + perp * w;
                if (world_in_bounds(r, p)) points.push_back(p);
            }
        }
    }

    double mean(const env::RasterEnv& r, env::Channel c) const {
        if (points.empty()) return 0.0;
        double s = 0.0;
        for (const Vec2& p : points) s += channel_at(r, c, p);
        return s / points.size();
    }

    std::pair<double, double> mean_std(const env::RasterEnv& r, env::Channel c) const {
        if (points.empty()) return {0.0, 0.0};
        double s = 0.0, s2 = 0.0;
        for (const Vec2& p : points) {
            double v = channel_at(r, c, p);
            s += v;
            s2 += v * v;
        }
        double m = s / points.size();
        return {m, std::sqrt(std::max(0.0, s2 / points.size() - m * m))};
    }
};

} // namespace

FeatureVector extract_link_features(const env::RasterEnv& raster,
                                    const env::VoxelEnv* voxels, const oracle::Link& link,
                                    const FeatureSchema& schema) {
    link.validate();
    require(world_in_bounds(raster, link.tx.xy()) && world_in_bounds(raster, link.rx.xy()),
            ErrorKind::out_of_bounds, "link endpoints must lie inside the raster");
    const FeatureConfig& cfg = schema.config;
    std::map<std::string, double> vals;

    std::optional<CorridorSampler> corridor;
    auto need_corridor = [&]() -> CorridorSampler& {
        if (!corridor) {
            corridor.emplace(raster, link, cfg.corridor_samples_along,
                             cfg.corridor_samples_across);
        }
        return *corridor;
    };

    if (schema.has_group(FeatureGroup::geometric)) {
        vals["distance_m"] = link.distance_m();
        vals["log10_distance"] = std::log10(link.distance_m());
        vals["frequency_hz"] = link.frequency_hz;
        vals["tx_height_m"] = link.tx.z;
        vals["rx_height_m"] = link.rx.z;
    }

    auto semantic = [&](FeatureGroup g, env::Channel c, const std::string& cls) {
        if (!schema.has_group(g)) return;
        for (double r : cfg.ring_radii_m) {
            vals[cls + "_ring_" + radius_tag(r) + "m"] =
                ring_mean(raster, c, link.rx.xy(), r, cfg.ring_samples);
        }
        vals[cls + "_corridor"] = need_corridor().mean(raster, c);
    };
    semantic(FeatureGroup::semantic_building, env::Channel::building, "building");
    semantic(FeatureGroup::semantic_road, env::Channel::road, "road");
    semantic(FeatureGroup::semantic_vegetation, env::Channel::vegetation, "vegetation");

    if (schema.has_group(FeatureGroup::physics)) {
        oracle::LosResult los = oracle::los_test(raster, link);
        vals["los_flag"] = los.los ? 1.0 : 0.0;
        vals["fresnel_clearance"] = oracle::fresnel_clearance(raster, link);
        double nu = -3.0; // clear-path floor
        double depth = 0.0;
        double d = link.ground_distance_m();
        for (const auto& ob : los.obstructions) {
            double d1 = std::max(ob.distance_m, 0.1);
            double d2 = std::max(d - ob.distance_m, 0.1);
            nu = std::max(nu, oracle::fresnel_nu(ob.excess_m, d1, d2, link.wavelength_m()));
            depth += ob.excess_m;
        }
        vals["dominant_nu"] = nu;
        vals["obstruction_depth_m"] = depth;
        vals["obstruction_count"] = static_cast<double>(los.obstructions.size());
    }

    if (schema.has_group(FeatureGroup::material)) {
        require(voxels != nullptr, ErrorKind::missing_modality,
                "material features need a voxel grid");
        double gamma_sum = 0.0, scat_sum = 0.0, dist_sum = 0.0;
        double align_sum = 0.0, incid_sum = 0.0;
        int hits = 0;
        for (int k = 0; k < cfg.fan_rays; ++k) {
            double a = 2.0 * M_PI * (k + 0.5) / cfg.fan_rays;
            Vec3 dir{std::cos(a), std::sin(a), 0.0};
            oracle::RayHit h = oracle::first_hit(*voxels, link.rx, dir, cfg.fan_range_m);
            if (!h.hit) continue;
            hits++;
            const env::MaterialSpec& mat = voxels->materials.at(
                static_cast<std::size_t>(voxels->material[voxels->idx(h.ix, h.iy, h.iz)]));
            Vec3 n = env::face_normal(h.face);
            double cos_inc = std::abs(dir.dot(n));
            gamma_sum +=
                oracle::fresnel_reflection_magnitude(mat, cos_inc, link.frequency_hz);
            scat_sum += mat.scattering_coefficient;
            dist_sum += h.distance_m;
            Vec3 hit_point = link.rx + dir * h.distance_m;
            Vec3 to_tx = link.tx - hit_point;
            double tl = to_tx.norm();
            if (tl > 1e-12) align_sum += std::abs(n.dot(to_tx * (1.0 / tl)));
            incid_sum += cos_inc;
        }
        vals["wall_gamma_mean"] = hits ? gamma_sum / hits : 0.0;
        vals["wall_scattering_mean"] = hits ? scat_sum / hits : 0.0;
        vals["wall_hit_fraction"] = static_cast<double>(hits) / cfg.fan_rays;
        vals["wall_hit_distance_m"] = hits ? dist_sum / hits : cfg.fan_range_m;
        if (cfg.include_normal_features) {
            vals["wall_normal_tx_alignment"] = hits ? align_sum / hits : 0.0;
            vals["wall_incidence_cos"] = hits ? incid_sum / hits : 0.0;
        }
    }

    if (schema.has_group(FeatureGroup::texture)) {
        for (double r : cfg.ring_radii_m) {
            vals["texture_ring_" + radius_tag(r) + "m"] = ring_mean(
                raster, env::Channel::texture, link.rx.xy(), r, cfg.ring_samples);
        }
        auto [m, sd] = need_corridor().mean_std(raster, env::Channel::texture);
        vals["texture_corridor_mean"] = m;
        vals["texture_corridor_std"] = sd;
        vals["texture_rx"] = channel_at(raster, env::Channel::texture, link.rx.xy());
    }

    FeatureVector fv;
    fv.link = link;
    fv.values.reserve(schema.size());
    for (const auto& f : schema.features) {
        auto it = vals.find(f.name);
        require(it != vals.end(), ErrorKind::schema_mismatch,
                "schema feature '" + f.name + "' has no extractor");
        require(std::isfinite(it->second), ErrorKind::validation,
                "non-finite feature value for '" + f.name + "'");
        fv.values.push_back(it->second);
    }
    return fv;
}

} // namespace chanform::feat
