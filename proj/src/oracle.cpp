#include "chanform/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "chanform/grid_io.hpp"
#include "chanform/rng.hpp"

using nlohmann::json;

namespace chanform::oracle {

double fspl_db(double distance_m, double frequency_hz) {
    require(distance_m > 1e-9, ErrorKind::degenerate_link, "distance must be positive");
    require(frequency_hz > 0, ErrorKind::validation, "frequency must be positive");
    return 20.0 * std::log10(distance_m) + 20.0 * std::log10(frequency_hz) - 147.55;
}

double knife_edge_j(double nu) {
    if (nu <= -0.78) return 0.0;
    double t = nu - 0.1;
    return 6.9 + 20.0 * std::log10(std::sqrt(t * t + 1.0) + t);
}

double fresnel_nu(double excess_m, double d1_m, double d2_m, double wavelength_m) {
    d1_m = std::max(d1_m, 1e-6);
    d2_m = std::max(d2_m, 1e-6);
    return excess_m * std::sqrt(2.0 * (d1_m + d2_m) / (wavelength_m * d1_m * d2_m));
}

double fresnel_radius(double d1_m, double d2_m, double wavelength_m) {
    d1_m = std::max(d1_m, 1e-6);
    d2_m = std::max(d2_m, 1e-6);
    return std::sqrt(wavelength_m * d1_m * d2_m / (d1_m + d2_m));
}

std::vector<CellCrossing> walk_cells(const env::RasterEnv& r, const Vec2& a, const Vec2& b) {
    auto inside = [&](const Vec2& p) {
        return p.x >= r.origin.x - 1e-9 && p.x <= r.origin.x + r.width() + 1e-9 &&
               p.y >= r.origin.y - 1e-9 && p.y <= r.origin.y + r.height_extent() + 1e-9;
    };
    require(inside(a) && inside(b), ErrorKind::out_of_bounds,
            "link endpoint outside raster bounds");

    std::vector<CellCrossing> out;
    int ix, iy, jx, jy;
    r.cell_of(a, ix, iy);
    r.cell_of(b, jx, jy);
    Vec2 d = b - a;
    double len = d.norm();
    if (len < 1e-12 || (ix == jx && iy == jy)) {
        out.push_back({ix, iy, 0.0, 1.0});
        return out;
    }

    const double inf = std::numeric_limits<double>::infinity();
    int step_x = d.x > 0 ? 1 : (d.x < 0 ? -1 : 0);
    int step_y = d.y > 0 ? 1 : (d.y < 0 ? -1 : 0);
    double tdx = step_x != 0 ? r.resolution_m / std::abs(d.x) : inf;
    double tdy = step_y != 0 ? r.resolution_m / std::abs(d.y) : inf;
    double cx = r.origin.x + ix * r.resolution_m;
    double cy = r.origin.y + iy * r.resolution_m;
    double tmax_x = inf;
    double tmax_y = inf;
    if (step_x > 0) tmax_x = (cx + r.resolution_m - a.x) / d.x;
    if (step_x < 0) tmax_x = (cx - a.x) / d.x;
    if (step_y > 0) tmax_y = (cy + r.resolution_m - a.y) / d.y;
    if (step_y < 0) tmax_y = (cy - a.y) / d.y;

    double t = 0.0;
    for (;;) {
        double tnext = std::min({tmax_x, tmax_y, 1.0});
        out.push_back({ix, iy, t, tnext});
        if ((ix == jx && iy == jy) || tnext >= 1.0) break;
        if (tmax_x <= tmax_y) {
            ix += step_x;
            t = tmax_x;
            tmax_x += tdx;
        } else {
            iy += step_y;
            t = tmax_y;
            tmax_y += tdy;
        }
        if (!r.in_bounds(ix, iy)) break;
    }
    return out;
}

namespace {

double line_height(const Link& link, double t) {
    return link.tx.z + t * (link.rx.z - link.tx.z);
}

} // namespace

LosResult los_test(const env::RasterEnv& r, const Link& link) {
    link.validate();
    auto cells = walk_cells(r, link.tx.xy(), link.rx.xy());
    LosResult result;
    double d2 = link.ground_distance_m();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i == 0 || i + 1 == cells.size()) continue; // endpoint cells
        const CellCrossing& c = cells[i];
        double hc = r.height[r.idx(c.ix, c.iy)];
        if (hc <= 0.0) continue;
        double tm = 0.5 * (c.t0 + c.t1);
        double excess = hc - line_height(link, tm);
        if (excess > 0.0) {
            result.obstructions.push_back({tm * d2, excess});
        }
    }
    result.los = result.obstructions.empty();
    return result;
}

double fresnel_clearance(const env::RasterEnv& r, const Link& link) {
    link.validate();
    auto cells = walk_cells(r, link.tx.xy(), link.rx.xy());
    double d2 = link.ground_distance_m();
    double lambda = link.wavelength_m();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i == 0 || i + 1 == cells.size()) continue;
        const CellCrossing& c = cells[i];
        double hc = r.height[r.idx(c.ix, c.iy)];
        if (hc <= 0.0) continue;
        double tm = 0.5 * (c.t0 + c.t1);
        double s = tm * d2;
        double r1 = std::max(fresnel_radius(s, d2 - s, lambda), 1e-9);
        best = std::min(best, (line_height(link, tm) - hc) / r1);
    }
    return std::clamp(best, -1.0, 1.0);
}

namespace {

struct Edge {
    double s; // along-track distance from TX
    double h; // absolute height
};

double deygout(const std::vector<Edge>& edges, double s_l, double h_l, double s_r,
               double h_r, double lambda, int depth) {
    double best_nu = -std::numeric_limits<double>::infinity();
    std::size_t best = edges.size();
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (edges[i].s <= s_l + 1e-9 || edges[i].s >= s_r - 1e-9) continue;
        double span = s_r - s_l;
        double h_ref = h_l + (edges[i].s - s_l) / span * (h_r - h_l);
        double nu = fresnel_nu(edges[i].h - h_ref, edges[i].s - s_l, s_r - edges[i].s, lambda);
        if (nu > best_nu) {
            best_nu = nu;
            best = i;
        }
    }
    if (best == edges.size() || best_nu <= -0.78) return 0.0;
    double loss = knife_edge_j(best_nu);
    if (depth > 1) {
        loss += deygout(edges, s_l, h_l, edges[best].s, edges[best].h, lambda, depth - 1);
        loss += deygout(edges, edges[best].s, edges[best].h, s_r, h_r, lambda, depth - 1);
    }
    return loss;
}

} // namespace

double knife_edge_loss(const std::vector<Obstruction>& obstructions, const Link& link,
                       int max_depth) {
    link.validate();
    require(max_depth >= 1, ErrorKind::validation, "diffraction depth must be >= 1");
    if (obstructions.empty()) return 0.0;
    double d2 = link.ground_distance_m();
    require(d2 > 1e-9, ErrorKind::degenerate_link, "vertical link has no diffraction profile");
    std::vector<Edge> edges;
    edges.reserve(obstructions.size());
    for (const auto& o : obstructions) {
        require(o.distance_m > 0 && o.distance_m < d2, ErrorKind::validation,
                "obstruction outside the link span");
        double t = o.distance_m / d2;
        edges.push_back({o.distance_m, line_height(link, t) + o.excess_m});
    }
    return deygout(edges, 0.0, link.tx.z, d2, link.rx.z, link.wavelength_m(), max_depth);
}

double shadowing_field(const Vec2& pos, double corr_length_m, std::uint64_t seed) {
    double L = std::max(corr_length_m, 0.1);
    double u = pos.x / L;
    double v = pos.y / L;
    auto i0 = static_cast<std::int64_t>(std::floor(u));
    auto j0 = static_cast<std::int64_t>(std::floor(v));
    double fu = u - static_cast<double>(i0);
    double fv = v - static_cast<double>(j0);
    double w00 = (1 - fu) * (1 - fv);
    double w10 = fu * (1 - fv);
    double w01 = (1 - fu) * fv;
    double w11 = fu * fv;
    double num = w00 * hash_normal(seed, i0, j0, 0x5ADu) +
                 w10 * hash_normal(seed, i0 + 1, j0, 0x5ADu) +
                 w01 * hash_normal(seed, i0, j0 + 1, 0x5ADu) +
                 w11 * hash_normal(seed, i0 + 1, j0 + 1, 0x5ADu);
    double norm = std::sqrt(w00 * w00 + w10 * w10 + w01 * w01 + w11 * w11);
    // Normalized interpolation keeps the field unit-variance everywhere.
    return norm > 0 ? num / norm : 0.0;
}

ChannelSample path_loss(const env::RasterEnv& r, const Link& link, const OracleConfig& cfg) {
    link.validate();
    ChannelSample cs;
    double pl = fspl_db(link.distance_m(), link.frequency_hz);

    LosResult los = los_test(r, link);
    cs.los = los.los;
    pl += knife_edge_loss(los.obstructions, link, cfg.deygout_depth);

    if (cfg.vegetation_db_per_m > 0.0) {
        auto cells = walk_cells(r, link.tx.xy(), link.rx.xy());
        double d2 = link.ground_distance_m();
        double veg_len = 0.0;
        for (const auto& c : cells) {
            veg_len += (c.t1 - c.t0) * d2 * r.vegetation[r.idx(c.ix, c.iy)];
        }
        pl += cfg.vegetation_db_per_m * veg_len;
    }

    if (cfg.shadowing_sigma_db > 0.0) {
        pl += cfg.shadowing_sigma_db *
              shadowing_field(link.rx.xy(), cfg.shadowing_corr_m, cfg.seed);
    }

    cs.path_loss_db = pl;
    return cs;
}

RadioMapGrid radio_map(const env::RasterEnv& r, const env::TxSite& tx,
                       const RadioMapConfig& map_cfg, const OracleConfig& cfg) {
    double res = map_cfg.resolution_m > 0 ? map_cfg.resolution_m : r.resolution_m;
    RadioMapGrid map;
    map.resolution_m = res;
    map.nx = std::max(1, static_cast<int>(std::ceil(r.width() / res - 1e-9)));
    map.ny = std::max(1, static_cast<int>(std::ceil(r.height_extent() / res - 1e-9)));
    map.origin = r.origin;
    map.tx_position = tx.position;
    map.frequency_hz = tx.frequency_hz;
    map.rx_height_m = map_cfg.rx_height_m;
    std::size_t n = static_cast<std::size_t>(map.nx) * map.ny;
    map.path_loss_db.assign(n, 0.0);
    map.los.assign(n, 0);
    map.masked.assign(n, 0);

    parallel_for(static_cast<std::size_t>(map.ny), [&](std::size_t row) {
        int iy = static_cast<int>(row);
        for (int ix = 0; ix < map.nx; ++ix) {
            std::size_t i = map.idx(ix, iy);
            Vec2 c{map.origin.x + (ix + 0.5) * res, map.origin.y + (iy + 0.5) * res};
            int rx_ix, rx_iy;
            r.cell_of(c, rx_ix, rx_iy);
            if (r.building[r.idx(rx_ix, rx_iy)] >= 0.5) {
                map.masked[i] = 1;
                continue;
            }
            Link link{tx.position, {c.x, c.y, map_cfg.rx_height_m}, tx.frequency_hz};
            if (link.distance_m() < 1e-9) {
                map.masked[i] = 1;
                continue;
            }
            ChannelSample cs = path_loss(r, link, cfg);
            map.path_loss_db[i] = cs.path_loss_db;
            map.los[i] = cs.los ? 1 : 0;
        }
    });
    return map;
}

void radio_map_to_csv(const RadioMapGrid& map, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << "ix,iy,x,y,path_loss_db,los,masked\n";
    for (int iy = 0; iy < map.ny; ++iy) {
        for (int ix = 0; ix < map.nx; ++ix) {
            std::size_t i = map.idx(ix, iy);
            out << ix << ',' << iy << ',' << map.origin.x + (ix + 0.5) * map.resolution_m
                << ',' << map.origin.y + (iy + 0.5) * map.resolution_m << ','
                << map.path_loss_db[i] << ',' << static_cast<int>(map.los[i]) << ','
                << static_cast<int>(map.masked[i]) << '\n';
        }
    }
}

void save_radio_map(const RadioMapGrid& map, const std::string& path) {
    json h;
    h["format_version"] = 1;
    h["kind"] = "radiomap";
    h["resolution_m"] = map.resolution_m;
    h["nx"] = map.nx;
    h["ny"] = map.ny;
    h["origin"] = {map.origin.x, map.origin.y};
    h["tx_position"] = {map.tx_position.x, map.tx_position.y, map.tx_position.z};
    h["frequency_hz"] = map.frequency_hz;
    h["rx_height_m"] = map.rx_height_m;
    std::size_t n = map.path_loss_db.size();
    io::Container c;
    c.magic = "CHFRMAP1";
    c.blocks.resize(3);
    c.blocks[0] = map.path_loss_db;
    c.blocks[1].resize(n);
    c.blocks[2].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        c.blocks[1][i] = map.los[i];
        c.blocks[2][i] = map.masked[i];
    }
    h["blocks"] = json::array({json{{"name", "path_loss_db"}, {"count", n}},
                               json{{"name", "los"}, {"count", n}},
                               json{{"name", "masked"}, {"count", n}}});
    c.header_json = h.dump();
    io::write_container(path, c);
}

RadioMapGrid load_radio_map(const std::string& path) {
    io::Container c = io::read_container(path, "CHFRMAP1");
    json h = json::parse(c.header_json);
    RadioMapGrid map;
    map.resolution_m = h.at("resolution_m").get<double>();
    map.nx = h.at("nx").get<int>();
    map.ny = h.at("ny").get<int>();
    map.origin = {h.at("origin").at(0).get<double>(), h.at("origin").at(1).get<double>()};
    map.tx_position = {h.at("tx_position").at(0).get<double>(),
                       h.at("tx_position").at(1).get<double>(),
                       h.at("tx_position").at(2).get<double>()};
    map.frequency_hz = h.at("frequency_hz").get<double>();
    map.rx_height_m = h.at("rx_height_m").get<double>();
    map.path_loss_db = c.blocks.at(0);
    std::size_t n = map.path_loss_db.size();
    map.los.resize(n);
    map.masked.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        map.los[i] = static_cast<std::uint8_t>(c.blocks.at(1)[i]);
        map.masked[i] = static_cast<std::uint8_t>(c.blocks.at(2)[i]);
    }
    return map;
}

std::string channel_sample_to_json(const ChannelSample& cs) {
    json j;
    j["path_loss_db"] = cs.path_loss_db;
    j["los"] = cs.los;
    j["rms_delay_spread_s"] = cs.rms_delay_spread_s;
    j["effective_path_count"] = cs.effective_path_count;
    json paths = json::array();
    for (const auto& p : cs.paths) {
        json points = json::array();
        for (const auto& pt : p.points) points.push_back({pt.x, pt.y, pt.z});
        paths.push_back({{"delay_s", p.delay_s},
                         {"power_gain_db", p.power_gain_db},
                         {"interaction_count", p.interaction_count},
                         {"points", points}});
    }
    j["paths"] = paths;
    json pdp = json::array();
    for (const auto& [delay, power] : cs.pdp) pdp.push_back({delay, power});
    j["pdp"] = pdp;
    return j.dump(2) + "\n";
}

void channel_sample_to_csv(const ChannelSample& cs, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << "delay_s,power_gain_db,interaction_count\n";
    for (const auto& p : cs.paths) {
        out << p.delay_s << ',' << p.power_gain_db << ',' << p.interaction_count << '\n';
    }
}

} // namespace chanform::oracle
