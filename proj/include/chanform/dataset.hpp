#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "chanform/features.hpp"
#include "chanform/oracle.hpp"
#include "chanform/ray_launch.hpp"

namespace chanform::feat {

struct Labels {
    double path_loss_db = 0.0;
    double los = 0.0; // 0/1
    double rms_delay_spread_s = 0.0;
    double effective_path_count = 1.0;
};

struct NormStats {
    bool normalized = false;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::uint8_t> constant_flag; // std clamped to 1 for these

    double denorm(std::size_t j, double v) const { return v * stddev[j] + mean[j]; }
    double norm(std::size_t j, double v) const { return (v - mean[j]) / stddev[j]; }
};

struct Dataset {
    FeatureSchema schema;
    std::size_t n_rows = 0;
    std::vector<double> x; // row-major, n_rows x schema.size()
    std::vector<Labels> labels;
    std::vector<oracle::Link> links;
    std::vector<std::int32_t> scenario_ids;
    NormStats stats;
    std::string provenance_json = "{}";

    std::size_t dim() const { return schema.size(); }
    double* row(std::size_t i) { return x.data() + i * dim(); }
    const double* row(std::size_t i) const { return x.data() + i * dim(); }
    double at(std::size_t i, std::size_t j) const { return x[i * dim() + j]; }
    void validate() const;
    std::uint64_t content_hash() const;
};

struct LinkSampler {
    int links_per_scenario = 100;
    double rx_height_m = 1.5;
    double min_distance_m = 20.0;
    double max_distance_m = 180.0;
    std::uint64_t seed = 1;
    int max_tries_per_link = 500;
};

// One scenario prepared for dataset building. Oracle labels always come from
// label_raster; features are read from feature_raster, which experiments may
// resample or corrupt independently of the labels.
struct ScenarioEnv {
    env::Scenario scenario;
    env::RasterEnv label_raster;
    env::RasterEnv feature_raster;
    std::optional<env::VoxelEnv> voxels;
    int scenario_id = 0;
};

struct DatasetBuildConfig {
    oracle::OracleConfig oracle;
    oracle::RayLaunchConfig ray;
    bool multipath_labels = true; // delay spread + path count via ray launch
    bool pl_from_ray = false;     // regress ray-launch total power instead of the raster oracle
    double pdp_bin_s = 5e-9;
    double effective_threshold_db = 25.0;
};

struct EnvBuildConfig {
    double label_resolution_m = 1.0;
    double feature_resolution_m = 1.0;
    double voxel_size_m = 2.0;
    bool build_voxels = true;
    std::optional<env::TextureAmplitude> texture; // seeded per scenario when set
    std::uint64_t texture_seed = 7;
};

std::vector<ScenarioEnv> make_envs(const std::vector<env::Scenario>& scenarios,
                                   const EnvBuildConfig& cfg);

Dataset build_dataset(const std::vector<ScenarioEnv>& envs, const LinkSampler& sampler,
                      const FeatureSchema& schema, const DatasetBuildConfig& cfg);
Dataset build_dataset(const std::vector<env::Scenario>& scenarios, const LinkSampler& sampler,
                      const FeatureSchema& schema, const DatasetBuildConfig& cfg,
                      const EnvBuildConfig& env_cfg);

// Z-score per feature; constant columns get stddev clamped to 1 and a flag.
Dataset normalize(const Dataset& d);
// Apply externally computed stats (train-set stats on a test set).
Dataset apply_normalization(const Dataset& d, const NormStats& stats);

Dataset select_groups(const Dataset& d, const std::vector<FeatureGroup>& groups);

// Rows whose scenario id satisfies `keep`.
Dataset filter_scenarios(const Dataset& d, const std::vector<std::int32_t>& keep);

// Recompute one raster-derived feature group from a rigidly shifted copy of
// each feature raster (translation of magnitude shift_m, direction seeded).
// All other columns are copied bit-identically. Raw datasets only.
Dataset misalign(const Dataset& d, const std::vector<ScenarioEnv>& envs,
                 FeatureGroup group, double shift_m, std::uint64_t seed);

void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);
void dataset_to_csv(const Dataset& d, const std::string& path);

} // namespace chanform::feat
