#pragma once

#include <cstdint>
#include <vector>

#include "chanform/channel.hpp"
#include "chanform/raster.hpp"

namespace chanform::oracle {

// Free-space path loss, dB. d in meters, f in Hz.
double fspl_db(double distance_m, double frequency_hz);

// Single knife-edge diffraction loss for Fresnel parameter nu; 0 below -0.78.
double knife_edge_j(double nu);

// Fresnel diffraction parameter for an edge with excess height h above the
// direct ray, at distances d1/d2 from the terminals.
double fresnel_nu(double excess_m, double d1_m, double d2_m, double wavelength_m);

// First Fresnel zone radius at distances d1/d2 from the terminals.
double fresnel_radius(double d1_m, double d2_m, double wavelength_m);

// One cell crossed by the ground track of a link: parametric [t0, t1] along
// the 2D segment.
struct CellCrossing {
    int ix;
    int iy;
    double t0;
    double t1;
};

// 2D DDA grid walk of the TX->RX ground segment, in traversal order.
// Endpoints must be inside the raster bounds.
std::vector<CellCrossing> walk_cells(const env::RasterEnv& r, const Vec2& a, const Vec2& b);

struct Obstruction {
    double distance_m; // along-track ground distance from TX
    double excess_m;   // cell height minus direct-ray height at that point
};

struct LosResult {
    bool los = true;
    std::vector<Obstruction> obstructions; // cells whose height exceeds the ray
};

// Terrain cut along the link: blocked when any crossed cell's height exceeds
// the straight TX-RX line. Cells containing the endpoints are skipped so a
// terminal mounted on a rooftop does not shadow itself.
LosResult los_test(const env::RasterEnv& r, const Link& link);

// min over crossed obstacle cells of (ray height - cell height) / r1,
// clamped to [-1, +1]; +1 over an empty raster.
double fresnel_clearance(const env::RasterEnv& r, const Link& link);

// Multi-edge diffraction loss via recursive dominant-edge decomposition,
// depth-limited. Returns 0 dB for an empty obstruction list.
double knife_edge_loss(const std::vector<Obstruction>& obstructions, const Link& link,
                       int max_depth = 3);

// Spatially correlated unit-variance Gaussian field: normalized bilinear
// interpolation of a hashed lattice with spacing corr_length.
double shadowing_field(const Vec2& pos, double corr_length_m, std::uint64_t seed);

struct OracleConfig {
    double shadowing_sigma_db = 0.0;
    double shadowing_corr_m = 25.0;
    double vegetation_db_per_m = 0.15;
    std::uint64_t seed = 0;
    int deygout_depth = 3;
};

// Large-scale path loss: free space + knife-edge diffraction + vegetation
// attenuation + (optional) correlated log-normal shadowing keyed to the RX
// ground position. Fills path_loss_db and los only.
ChannelSample path_loss(const env::RasterEnv& r, const Link& link, const OracleConfig& cfg);

struct RadioMapConfig {
    double resolution_m = 0.0; // 0 = use raster resolution
    double rx_height_m = 1.5;
};

// Dense path-loss map for one TX. Cells inside buildings are masked out.
// Cell evaluation order never affects values (parallel-safe).
RadioMapGrid radio_map(const env::RasterEnv& r, const env::TxSite& tx,
                       const RadioMapConfig& map_cfg, const OracleConfig& cfg);

void radio_map_to_csv(const RadioMapGrid& map, const std::string& path);
void save_radio_map(const RadioMapGrid& map, const std::string& path);
RadioMapGrid load_radio_map(const std::string& path);
std::string channel_sample_to_json(const ChannelSample& cs);
void channel_sample_to_csv(const ChannelSample& cs, const std::string& path);

} // namespace chanform::oracle
