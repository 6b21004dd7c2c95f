#pragma once

#include <optional>
#include <utility>

#include "chanform/model.hpp"

namespace chanform::model {

struct TrainConfig {
    double learning_rate = 3e-3;
    int epochs = 60;
    int batch_size = 64;
    std::uint64_t seed = 1;
    LossConfig loss;
    bool freeze_extractor = false;
    std::optional<double> early_stop_rmse; // stop once val (or train) RMSE dips below
    double val_fraction = 0.15;            // rows held out for per-epoch validation
};

struct HeadMetrics {
    double rmse_pl = 0.0;
    double los_accuracy = 1.0;
    double rmse_log_ds = 0.0;
    double rmse_log_count = 0.0;
};

struct EpochStats {
    HeadMetrics train;
    HeadMetrics val;
    LossBreakdown batch_mean;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    int epochs_run = 0;
    int threshold_epoch = -1; // 1-based epoch where early_stop_rmse was met
    double wall_ms = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t final_param_hash = 0;
};

// Seeded mini-batch Adam over the three-term loss. Throws divergence when the
// loss stops being finite. The input model is taken by value; the trained
// copy is returned.
std::pair<ModelParams, TrainReport> train(ModelParams model, const feat::Dataset& d,
                                          const TrainConfig& cfg);

// train() with freeze_extractor forced on and schema compatibility enforced;
// theta_f is bit-identical afterwards.
std::pair<ModelParams, TrainReport> finetune(const ModelParams& pretrained,
                                             const feat::Dataset& target,
                                             TrainConfig cfg);

struct Metrics {
    double rmse_pl = 0.0;
    double rmse_pl_los = 0.0;
    double rmse_pl_nlos = 0.0;
    double mae_pl = 0.0;
    double los_accuracy = 0.0;
    double rmse_log_ds = 0.0;
    double rmse_count = 0.0;
    std::size_t n = 0, n_los = 0, n_nlos = 0;
};

Metrics evaluate(const ModelParams& m, const feat::Dataset& d);

// Hash of the frozen extractor block (freeze-contract checks).
std::uint64_t extractor_hash(const ModelParams& m);

// Model-predicted area map on the oracle's grid layout: same masking, same
// cell centers, values from forward() per cell.
oracle::RadioMapGrid predict_radio_map(const ModelParams& m, const env::RasterEnv& raster,
                                       const env::VoxelEnv* voxels, const env::TxSite& tx,
                                       const oracle::RadioMapConfig& map_cfg);

} // namespace chanform::model
