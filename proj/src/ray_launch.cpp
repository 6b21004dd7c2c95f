#include "chanform/ray_launch.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>

#include "chanform/rng.hpp"

namespace chanform::oracle {

double fresnel_reflection_magnitude(const env::MaterialSpec& mat, double cos_theta,
                                    double frequency_hz) {
    require(frequency_hz > 0, ErrorKind::validation, "frequency must be positive");
    cos_theta = std::clamp(std::abs(cos_theta), 0.0, 1.0);
    if (mat.perfect_conductor) return 1.0;
    std::complex<double> eps(mat.relative_permittivity,
                             -mat.conductivity_s_per_m /
                                 (2.0 * M_PI * frequency_hz * kVacuumPermittivity));
    double sin2 = 1.0 - cos_theta * cos_theta;
    std::complex<double> root = std::sqrt(eps - sin2);
    std::complex<double> g_perp = (cos_theta - root) / (cos_theta + root);
    std::complex<double> g_par = (eps * cos_theta - root) / (eps * cos_theta + root);
    return 0.5 * (std::abs(g_perp) + std::abs(g_par));
}

namespace {

struct Interaction {
    int ix, iy, iz;
    env::FaceBit face;
    Vec3 point;
};

struct Candidate {
    double miss_m;
    PathComponent path;
};

std::uint64_t signature(const std::vector<Interaction>& hits) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& it : hits) {
        h = hash_combine(h, static_cast<std::uint64_t>(it.ix) * 73856093ull);
        h = hash_combine(h, static_cast<std::uint64_t>(it.iy) * 19349663ull);
        h = hash_combine(h, static_cast<std::uint64_t>(it.iz) * 83492791ull);
        h = hash_combine(h, static_cast<std::uint64_t>(it.face));
    }
    return h;
}

struct MarchResult {
    bool hit = false;
    int ix = 0, iy = 0, iz = 0;
    env::FaceBit face = env::kFacePosX;
    double travel_m = 0.0; // distance along the ray to the hit / exit
};

// 3D DDA from p along unit dir, at most max_travel meters. Returns the first
// occupied voxel boundary crossed, or travel to grid exit / budget.
MarchResult march(const env::VoxelEnv& v, const Vec3& p, const Vec3& dir,
                  double max_travel) {
    MarchResult res;
    int ix, iy, iz;
    if (!v.voxel_of(p, ix, iy, iz)) {
        res.travel_m = 0.0; // already outside: free flight
        return res;
    }
    const double inf = std::numeric_limits<double>::infinity();
    double size = v.voxel_size_m;
    int sx = dir.x > 0 ? 1 : (dir.x < 0 ? -1 : 0);
    int sy = dir.y > 0 ? 1 : (dir.y < 0 ? -1 : 0);
    int sz = dir.z > 0 ? 1 : (dir.z < 0 ? -1 : 0);
    double tdx = sx != 0 ? size / std::abs(dir.x) : inf;
    double tdy = sy != 0 ? size / std::abs(dir.y) : inf;
    double tdz = sz != 0 ? size / std::abs(dir.z) : inf;
    double bx = v.origin.x + ix * size;
    double by = v.origin.y + iy * size;
    double bz = iz * size;
    double tx = inf, ty = inf, tz = inf;
    if (sx > 0) tx = (bx + size - p.x) / dir.x;
    if (sx < 0) tx = (bx - p.x) / dir.x;
    if (sy > 0) ty = (by + size - p.y) / dir.y;
    if (sy < 0) ty = (by - p.y) / dir.y;
    if (sz > 0) tz = (bz + size - p.z) / dir.z;
    if (sz < 0) tz = (bz - p.z) / dir.z;

    for (;;) {
        double tmin = std::min({tx, ty, tz});
        if (tmin > max_travel) {
            res.travel_m = max_travel;
            return res;
        }
        int axis;
        if (tx <= ty && tx <= tz) axis = 0;
        else if (ty <= tz) axis = 1;
        else axis = 2;
        if (axis == 0) { ix += sx; tx += tdx; }
        else if (axis == 1) { iy += sy; ty += tdy; }
        else { iz += sz; tz += tdz; }
        if (!v.in_bounds(ix, iy, iz)) {
            res.travel_m = tmin; // left the grid: free space beyond
            return res;
        }
        if (v.occupancy[v.idx(ix, iy, iz)]) {
            res.hit = true;
            res.ix = ix;
            res.iy = iy;
            res.iz = iz;
            if (axis == 0) res.face = sx > 0 ? env::kFaceNegX : env::kFacePosX;
            else if (axis == 1) res.face = sy > 0 ? env::kFaceNegY : env::kFacePosY;
            else res.face = sz > 0 ? env::kFaceNegZ : env::kFacePosZ;
            res.travel_m = tmin;
            return res;
        }
    }
}

} // namespace

RayHit first_hit(const env::VoxelEnv& v, const Vec3& origin, const Vec3& dir_unit,
                 double max_range_m) {
    MarchResult m = march(v, origin, dir_unit, max_range_m);
    RayHit out;
    out.hit = m.hit;
    out.distance_m = m.travel_m;
    out.ix = m.ix;
    out.iy = m.iy;
    out.iz = m.iz;
    out.face = m.face;
    return out;
}

std::vector<PathComponent> ray_launch(const env::VoxelEnv& v, const Link& link,
                                      const RayLaunchConfig& cfg) {
    link.validate();
    require(cfg.max_reflections >= 0 && cfg.max_reflections <= 3, ErrorKind::validation,
            "max_reflections must be in [0, 3]");
    require(cfg.azimuth_rays >= 1 && cfg.elevation_rays >= 1, ErrorKind::validation,
            "ray counts must be >= 1");
    require(cfg.capture_radius_m > 0, ErrorKind::validation, "capture radius must be positive");
    int ix, iy, iz;
    require(v.voxel_of(link.tx, ix, iy, iz), ErrorKind::invalid_endpoint,
            "TX outside the voxel grid");
    require(!v.occupancy[v.idx(ix, iy, iz)], ErrorKind::invalid_endpoint,
            "TX inside an occupied voxel");
    require(v.voxel_of(link.rx, ix, iy, iz), ErrorKind::invalid_endpoint,
            "RX outside the voxel grid");
    require(!v.occupancy[v.idx(ix, iy, iz)], ErrorKind::invalid_endpoint,
            "RX inside an occupied voxel");

    std::map<std::pair<int, std::uint64_t>, Candidate> found;

    auto record = [&](const std::vector<Interaction>& hits, double total_len,
                      double amplitude, double miss, const Vec3& capture_point) {
        PathComponent pc;
        pc.delay_s = total_len / kSpeedOfLight;
        pc.power_gain_db = -20.0 * std::log10(std::max(total_len, 1.0)) +
                           20.0 * std::log10(std::max(amplitude, 1e-300));
        pc.interaction_count = static_cast<int>(hits.size());
        pc.points.push_back(link.tx);
        for (const auto& h : hits) pc.points.push_back(h.point);
        pc.points.push_back(capture_point);
        std::pair<int, std::uint64_t> key{pc.interaction_count, signature(hits)};
        auto it = found.find(key);
        if (it == found.end() || miss < it->second.miss_m) {
            found[key] = {miss, pc};
        }
    };

    // Exact direct-path test first.
    {
        Vec3 d = link.rx - link.tx;
        double dist = d.norm();
        Vec3 u = d * (1.0 / dist);
        MarchResult m = march(v, link.tx, u, dist - 1e-9);
        if (!m.hit) {
            record({}, dist, 1.0, 0.0, link.rx);
        }
    }

    for (int ei = 0; ei < cfg.elevation_rays; ++ei) {
        double el = ((ei + 0.5) / cfg.elevation_rays - 0.5) * M_PI * (170.0 / 180.0);
        for (int ai = 0; ai < cfg.azimuth_rays; ++ai) {
            double az = 2.0 * M_PI * ai / cfg.azimuth_rays;
            Vec3 dir{std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
            Vec3 pos = link.tx;
            double traveled = 0.0;
            double amplitude = 1.0;
            std::vector<Interaction> hits;

            for (int bounce = 0; bounce <= cfg.max_reflections; ++bounce) {
                double budget = cfg.max_path_length_m - traveled;
                if (budget <= 0 || amplitude < 1e-6) break;
                MarchResult m = march(v, pos, dir, budget);

                // Capture test on this free-flight segment. Once the ray has
                // left the grid nothing can block it, so the final segment
                // extends to the full budget.
                double seg_len = m.hit ? m.travel_m : budget;
                Vec3 to_rx = link.rx - pos;
                double t_closest = std::clamp(to_rx.dot(dir), 0.0, seg_len);
                Vec3 closest = pos + dir * t_closest;
                double miss = (link.rx - closest).norm();
                if (miss <= cfg.capture_radius_m) {
                    record(hits, traveled + t_closest, amplitude, miss, closest);
                }
                if (!m.hit) break;

                Vec3 n = env::face_normal(m.face);
                Vec3 hit_point = pos + dir * m.travel_m;
                double cos_theta = std::abs(dir.dot(n));
                const env::MaterialSpec& mat =
                    v.materials.at(static_cast<std::size_t>(v.material[v.idx(m.ix, m.iy, m.iz)]));
                amplitude *= fresnel_reflection_magnitude(mat, cos_theta, link.frequency_hz) *
                             (1.0 - mat.scattering_coefficient);
                hits.push_back({m.ix, m.iy, m.iz, m.face, hit_point});
                traveled += m.travel_m;
                dir = dir - n * (2.0 * dir.dot(n));
                pos = hit_point + n * 1e-7; // step off the face into free space
            }
        }
    }

    std::vector<PathComponent> paths;
    paths.reserve(found.size());
    for (auto& [key, cand] : found) paths.push_back(std::move(cand.path));
    std::sort(paths.begin(), paths.end(), [](const PathComponent& a, const PathComponent& b) {
        if (a.delay_s != b.delay_s) return a.delay_s < b.delay_s;
        return a.power_gain_db > b.power_gain_db;
    });
    return paths;
}

PdpResult synth_pdp(const std::vector<PathComponent>& paths, double bin_width_s,
                    double effective_threshold_db) {
    require(!paths.empty(), ErrorKind::no_path, "cannot synthesize a PDP from zero paths");
    require(bin_width_s > 0, ErrorKind::validation, "PDP bin width must be positive");

    PdpResult out;
    std::map<std::int64_t, double> bins; // bin index -> linear power
    double p_sum = 0.0, pt_sum = 0.0, pt2_sum = 0.0;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (const auto& p : paths) {
        double lin = std::pow(10.0, p.power_gain_db / 10.0);
        bins[static_cast<std::int64_t>(std::floor(p.delay_s / bin_width_s))] += lin;
        p_sum += lin;
        pt_sum += lin * p.delay_s;
        pt2_sum += lin * p.delay_s * p.delay_s;
        best_gain = std::max(best_gain, p.power_gain_db);
    }
    for (const auto& [bin, lin] : bins) {
        out.pdp.emplace_back(bin * bin_width_s, 10.0 * std::log10(lin));
    }
    double mean = pt_sum / p_sum;
    out.rms_delay_spread_s = std::sqrt(std::max(0.0, pt2_sum / p_sum - mean * mean));
    for (const auto& p : paths) {
        if (p.power_gain_db >= best_gain - effective_threshold_db) out.effective_path_count++;
    }
    return out;
}

ChannelSample multipath_sample(const env::VoxelEnv& v, const Link& link,
                               const RayLaunchConfig& cfg, double bin_width_s,
                               double effective_threshold_db) {
    ChannelSample cs;
    cs.paths = ray_launch(v, link, cfg);
    if (cs.paths.empty()) {
        cs.los = false;
        cs.path_loss_db = 0.0;
        cs.rms_delay_spread_s = 0.0;
        cs.effective_path_count = 0;
        return cs;
    }
    PdpResult pdp = synth_pdp(cs.paths, bin_width_s, effective_threshold_db);
    cs.pdp = pdp.pdp;
    cs.rms_delay_spread_s = pdp.rms_delay_spread_s;
    cs.effective_path_count = pdp.effective_path_count;
    cs.los = false;
    for (const auto& p : cs.paths) {
        if (p.interaction_count == 0) { cs.los = true; break; }
    }
    double total_lin = 0.0;
    for (const auto& p : cs.paths) total_lin += std::pow(10.0, p.power_gain_db / 10.0);
    cs.path_loss_db = -10.0 * std::log10(total_lin);
    return cs;
}

} // namespace chanform::oracle
