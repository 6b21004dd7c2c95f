#pragma once

#include <cstdint>
#include <vector>

#include "chanform/common.hpp"
#include "chanform/geometry.hpp"

namespace chanform::oracle {

struct Link {
    Vec3 tx;
    Vec3 rx;
    double frequency_hz = 5.9e9;

    double distance_m() const { return (rx - tx).norm(); }
    double ground_distance_m() const { return (rx.xy() - tx.xy()).norm(); }
    double wavelength_m() const { return kSpeedOfLight / frequency_hz; }
    void validate() const {
        require(frequency_hz > 0, ErrorKind::validation, "link frequency must be positive");
        require(distance_m() > 1e-9, ErrorKind::degenerate_link,
                "link endpoints coincide");
    }
};

struct PathComponent {
    double delay_s = 0.0;
    double power_gain_db = 0.0;      // relative to 1 m free-space reference, <= 0
    int interaction_count = 0;
    std::vector<Vec3> points;        // tx, reflection points..., capture point
};

// One link's channel state. Large-scale calls fill path_loss_db/los only and
// leave the multipath fields empty.
struct ChannelSample {
    double path_loss_db = 0.0;
    bool los = true;
    std::vector<PathComponent> paths;
    std::vector<std::pair<double, double>> pdp; // (bin start delay s, power dB)
    double rms_delay_spread_s = 0.0;
    int effective_path_count = 0;
};

struct RadioMapGrid {
    double resolution_m = 1.0;
    int nx = 0;
    int ny = 0;
    Vec2 origin;
    Vec3 tx_position;
    double frequency_hz = 0.0;
    double rx_height_m = 1.5;
    std::vector<double> path_loss_db;
    std::vector<std::uint8_t> los;
    std::vector<std::uint8_t> masked; // 1 = cell inside a building, no value

    std::size_t idx(int ix, int iy) const {
        return static_cast<std::size_t>(iy) * nx + ix;
    }
};

} // namespace chanform::oracle
