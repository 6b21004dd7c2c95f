#include "chanform/raster.hpp"

#include <algorithm>
#include <cmath>

#include "chanform/common.hpp"
#include "chanform/rng.hpp"

namespace chanform::env {

void RasterEnv::cell_of(const Vec2& p, int& ix, int& iy) const {
    ix = static_cast<int>(std::floor((p.x - origin.x) / resolution_m));
    iy = static_cast<int>(std::floor((p.y - origin.y) / resolution_m));
    ix = std::clamp(ix, 0, nx - 1);
    iy = std::clamp(iy, 0, ny - 1);
}

const std::vector<double>& RasterEnv::channel(Channel c) const {
    switch (c) {
        case Channel::building: return building;
        case Channel::road: return road;
        case Channel::vegetation: return vegetation;
        case Channel::open: return open;
        case Channel::height: return height;
        case Channel::texture: return texture;
    }
    fail(ErrorKind::validation, "unknown channel");
}

std::vector<double>& RasterEnv::channel(Channel c) {
    return const_cast<std::vector<double>&>(
        static_cast<const RasterEnv*>(this)->channel(c));
}

double TextureAmplitude::operator()(double g) const {
    return base * std::pow(reference_resolution_m / std::max(g, 1e-9), exponent);
}

RasterEnv rasterize(const Scenario& s, double resolution_m, std::size_t max_cells) {
    require(resolution_m > 0, ErrorKind::validation, "raster resolution must be positive");
    s.validate();

    double w = s.bounds.width();
    double h = s.bounds.height();
    auto cells_along = [&](double extent) {
        return std::max<std::int64_t>(
            1, static_cast<std::int64_t>(std::ceil(extent / resolution_m - 1e-9)));
    };
    std::int64_t nx = cells_along(w);
    std::int64_t ny = cells_along(h);
    require(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) <= max_cells,
            ErrorKind::grid_too_large,
            "raster of " + std::to_string(nx * ny) + " cells exceeds cap of " +
                std::to_string(max_cells));

    RasterEnv r;
    r.resolution_m = resolution_m;
    r.nx = static_cast<int>(nx);
    r.ny = static_cast<int>(ny);
    r.origin = s.bounds.lo;
    std::size_t n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    r.building.assign(n, 0.0);
    r.road.assign(n, 0.0);
    r.vegetation.assign(n, 0.0);
    r.open.assign(n, 1.0);
    r.height.assign(n, 0.0);
    r.texture.assign(n, 0.0);

    // Bounding boxes keep the per-cell tests local to each shape.
    for (const auto& b : s.buildings) {
        Rect bb = polygon_bbox(b.footprint);
        int x0, y0, x1, y1;
        r.cell_of(bb.lo, x0, y0);
        r.cell_of(bb.hi, x1, y1);
        for (int iy = y0; iy <= y1; ++iy) {
            for (int ix = x0; ix <= x1; ++ix) {
                Vec2 c = r.cell_center(ix, iy);
                if (!point_in_polygon(c, b.footprint)) continue;
                std::size_t i = r.idx(ix, iy);
                r.building[i] = 1.0;
                r.height[i] = std::max(r.height[i], b.height_m);
            }
        }
    }
    for (const auto& road : s.roads) {
        Rect bb = polygon_bbox(road.centerline);
        double half = road.width_m * 0.5;
        bb.lo = bb.lo - Vec2{half, half};
        bb.hi = bb.hi + Vec2{half, half};
        int x0, y0, x1, y1;
        r.cell_of(bb.lo, x0, y0);
        r.cell_of(bb.hi, x1, y1);
        for (int iy = y0; iy <= y1; ++iy) {
            for (int ix = x0; ix <= x1; ++ix) {
                std::size_t i = r.idx(ix, iy);
                if (r.building[i] > 0.0) continue; // priority: building first
                Vec2 c = r.cell_center(ix, iy);
                for (std::size_t sgm = 0; sgm + 1 < road.centerline.size(); ++sgm) {
                    if (segment_point_distance(road.centerline[sgm],
                                               road.centerline[sgm + 1], c) <= half) {
                        r.road[i] = 1.0;
                        break;
                    }
                }
            }
        }
    }
    for (const auto& v : s.vegetation) {
        Rect bb = polygon_bbox(v.polygon);
        int x0, y0, x1, y1;
        r.cell_of(bb.lo, x0, y0);
        r.cell_of(bb.hi, x1, y1);
        for (int iy = y0; iy <= y1; ++iy) {
            for (int ix = x0; ix <= x1; ++ix) {
                std::size_t i = r.idx(ix, iy);
                if (r.building[i] > 0.0 || r.road[i] > 0.0) continue;
                if (point_in_polygon(r.cell_center(ix, iy), v.polygon)) {
                    r.vegetation[i] = 1.0;
                }
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        r.open[i] = (r.building[i] > 0.0 || r.road[i] > 0.0 || r.vegetation[i] > 0.0)
                        ? 0.0
                        : 1.0;
    }
    return r;
}

RasterEnv add_texture_noise(const RasterEnv& raster, std::uint64_t seed,
                            const std::function<double(double)>& amplitude_of_resolution) {
    RasterEnv out = raster;
    double amp = amplitude_of_resolution(raster.resolution_m);
    require(amp >= 0, ErrorKind::validation, "texture amplitude must be >= 0");
    for (int iy = 0; iy < out.ny; ++iy) {
        for (int ix = 0; ix < out.nx; ++ix) {
            out.texture[out.idx(ix, iy)] = amp * hash_normal(seed, ix, iy, 0x7e87u);
        }
    }
    return out;
}

namespace {

// 1D overlap of target cell t (width gt) with source cell s (width gs).
double overlap_1d(std::int64_t t, double gt, std::int64_t s, double gs) {
    double lo = std::max(t * gt, s * gs);
    double hi = std::min((t + 1) * gt, (s + 1) * gs);
    return std::max(0.0, hi - lo);
}

} // namespace

RasterEnv resample(const RasterEnv& src, double new_resolution_m, std::size_t max_cells) {
    require(new_resolution_m > 0, ErrorKind::validation, "resolution must be positive");

    double w = src.nx * src.resolution_m;
    double h = src.ny * src.resolution_m;
    std::int64_t nx = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::ceil(w / new_resolution_m - 1e-9)));
    std::int64_t ny = std::max<std::int64_t>(
        1, static_cast<std::int64_t>(std::ceil(h / new_resolution_m - 1e-9)));
    require(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) <= max_cells,
            ErrorKind::grid_too_large, "resample target grid exceeds cell cap");

    RasterEnv out;
    out.resolution_m = new_resolution_m;
    out.nx = static_cast<int>(nx);
    out.ny = static_cast<int>(ny);
    out.origin = src.origin;
    std::size_t n = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    out.building.assign(n, 0.0);
    out.road.assign(n, 0.0);
    out.vegetation.assign(n, 0.0);
    out.open.assign(n, 0.0);
    out.height.assign(n, 0.0);
    out.texture.assign(n, 0.0);

    bool coarsening = new_resolution_m >= src.resolution_m;
    double gs = src.resolution_m;
    double gt = new_resolution_m;

    for (int ty = 0; ty < out.ny; ++ty) {
        std::int64_t sy0 = static_cast<std::int64_t>(std::floor(ty * gt / gs + 1e-12));
        std::int64_t sy1 = static_cast<std::int64_t>(std::ceil((ty + 1) * gt / gs - 1e-12)) - 1;
        sy0 = std::clamp<std::int64_t>(sy0, 0, src.ny - 1);
        sy1 = std::clamp<std::int64_t>(sy1, 0, src.ny - 1);
        for (int tx = 0; tx < out.nx; ++tx) {
            std::int64_t sx0 = static_cast<std::int64_t>(std::floor(tx * gt / gs + 1e-12));
            std::int64_t sx1 = static_cast<std::int64_t>(std::ceil((tx + 1) * gt / gs - 1e-12)) - 1;
            sx0 = std::clamp<std::int64_t>(sx0, 0, src.nx - 1);
            sx1 = std::clamp<std::int64_t>(sx1, 0, src.nx - 1);

            double total = 0.0;
            double acc_b = 0.0, acc_r = 0.0, acc_v = 0.0, acc_o = 0.0, acc_t = 0.0;
            double hmax = 0.0;
            for (std::int64_t sy = sy0; sy <= sy1; ++sy) {
                double oy = overlap_1d(ty, gt, sy, gs);
                if (oy <= 1e-12) continue;
                for (std::int64_t sx = sx0; sx <= sx1; ++sx) {
                    double ox = overlap_1d(tx, gt, sx, gs);
                    if (ox <= 1e-12) continue;
                    double area = ox * oy;
                    std::size_t si = src.idx(static_cast<int>(sx), static_cast<int>(sy));
                    total += area;
                    acc_b += area * src.building[si];
                    acc_r += area * src.road[si];
                    acc_v += area * src.vegetation[si];
                    acc_o += area * src.open[si];
                    acc_t += area * src.texture[si];
                    hmax = std::max(hmax, src.height[si]);
                }
            }
            std::size_t ti = out.idx(tx, ty);
            if (total > 0.0) {
                out.building[ti] = acc_b / total;
                out.road[ti] = acc_r / total;
                out.vegetation[ti] = acc_v / total;
                out.open[ti] = acc_o / total;
                out.texture[ti] = acc_t / total;
            }
            if (coarsening) {
                out.height[ti] = hmax;
            } else {
                // nearest-neighbour by target cell center
                Vec2 c = out.cell_center(tx, ty);
                int ix, iy;
                src.cell_of(c, ix, iy);
                out.height[ti] = src.height[src.idx(ix, iy)];
            }
        }
    }
    return out;
}

} // namespace chanform::env
