#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "chanform/geometry.hpp"
#include "chanform/scenario.hpp"

namespace chanform::env {

// Semantic channel ids used across raster exports and feature extraction.
enum class Channel { building, road, vegetation, open, height, texture };

// 2.5D grid over scenario bounds. Semantic channels are fractional in
// [0, 1] (rasterize emits hard 0/1, resample produces area averages) and
// sum to <= 1 + 1e-9 per cell. height is the tallest covering building in
// meters; texture is a free-form noise channel.
struct RasterEnv {
    double resolution_m = 1.0;
    int nx = 0;
    int ny = 0;
    Vec2 origin; // world position of cell (0,0) low corner

    std::vector<double> building;
    std::vector<double> road;
    std::vector<double> vegetation;
    std::vector<double> open;
    std::vector<double> height;
    std::vector<double> texture;

    std::size_t idx(int ix, int iy) const {
        return static_cast<std::size_t>(iy) * nx + ix;
    }
    bool in_bounds(int ix, int iy) const {
        return ix >= 0 && ix < nx && iy >= 0 && iy < ny;
    }
    Vec2 cell_center(int ix, int iy) const {
        return {origin.x + (ix + 0.5) * resolution_m,
                origin.y + (iy + 0.5) * resolution_m};
    }
    // Cell containing a world point; clamped to the grid.
    void cell_of(const Vec2& p, int& ix, int& iy) const;
    double width() const { return nx * resolution_m; }
    double height_extent() const { return ny * resolution_m; }
    const std::vector<double>& channel(Channel c) const;
    std::vector<double>& channel(Channel c);
};

inline constexpr std::size_t kDefaultMaxRasterCells = 64u * 1024u * 1024u / 8u;

// Cell-center point sampling: a cell is building/road/vegetation exactly when
// its center lies inside the corresponding geometry, with priority
// building > road > vegetation > open. Throws grid_too_large when
// nx * ny would exceed max_cells.
RasterEnv rasterize(const Scenario& s, double resolution_m,
                    std::size_t max_cells = kDefaultMaxRasterCells);

// Overwrites the texture channel with an iid per-cell Gaussian field of
// standard deviation amplitude_of_resolution(resolution). Other channels are
// untouched. Deterministic in (seed, cell index).
RasterEnv add_texture_noise(const RasterEnv& raster, std::uint64_t seed,
                            const std::function<double(double)>& amplitude_of_resolution);

// Power-law amplitude profile: base * (reference / g)^exponent.
struct TextureAmplitude {
    double base = 1.0;
    double reference_resolution_m = 4.0;
    double exponent = 1.0;
    double operator()(double g) const;
};

// Semantic and texture channels are area-averaged; height is max-pooled when
// coarsening and nearest-sampled when refining.
RasterEnv resample(const RasterEnv& raster, double new_resolution_m,
                   std::size_t max_cells = kDefaultMaxRasterCells);

} // namespace chanform::env
