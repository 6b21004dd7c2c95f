#pragma once

#include <vector>

#include "chanform/channel.hpp"
#include "chanform/voxel.hpp"

namespace chanform::oracle {

// Polarization-averaged |reflection coefficient| for a wall of the given
// material at incidence cosine cos_theta (angle from the surface normal).
double fresnel_reflection_magnitude(const env::MaterialSpec& mat, double cos_theta,
                                    double frequency_hz);

struct RayHit {
    bool hit = false;
    double distance_m = 0.0;
    int ix = 0, iy = 0, iz = 0;
    env::FaceBit face = env::kFacePosX;
};

// First occupied voxel along a straight ray from origin, up to max_range_m.
// An origin outside the grid never hits anything.
RayHit first_hit(const env::VoxelEnv& v, const Vec3& origin, const Vec3& dir_unit,
                 double max_range_m);

struct RayLaunchConfig {
    int azimuth_rays = 36;
    int elevation_rays = 9;
    int max_reflections = 2;      // hard cap 3
    double capture_radius_m = 1.5;
    double max_path_length_m = 2000.0;
};

// Deterministic shooting-and-bouncing ray launch on the voxel grid. The
// direct TX->RX path is tested exactly first; launched rays reflect
// specularly off exposed voxel faces with per-bounce |Gamma| * (1 - S)
// amplitude scaling. Paths are deduplicated by their interaction-face
// signature (keeping the closest capture) and emitted sorted by delay then
// gain. Endpoints inside occupied voxels raise invalid_endpoint.
std::vector<PathComponent> ray_launch(const env::VoxelEnv& v, const Link& link,
                                      const RayLaunchConfig& cfg);

struct PdpResult {
    std::vector<std::pair<double, double>> pdp; // (bin start delay s, power dB)
    double rms_delay_spread_s = 0.0;
    int effective_path_count = 0;
};

// Bins path powers into a delay profile (linear power accumulation) and
// derives power-weighted RMS delay spread plus the count of paths within
// effective_threshold_db of the strongest. Empty path list raises no_path.
PdpResult synth_pdp(const std::vector<PathComponent>& paths, double bin_width_s = 5e-9,
                    double effective_threshold_db = 25.0);

// Convenience: full small-scale sample (paths + PDP + derived stats).
ChannelSample multipath_sample(const env::VoxelEnv& v, const Link& link,
                               const RayLaunchConfig& cfg, double bin_width_s = 5e-9,
                               double effective_threshold_db = 25.0);

} // namespace chanform::oracle
