#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "chanform/dataset.hpp"
#include "chanform/explain.hpp"
#include "chanform/train.hpp"

namespace chanform::xp {

// One long-format table entry. `seed` is the repeat index's actual seed so a
// report is self-describing; medians are taken per (condition, metric).
struct MetricRow {
    std::string condition;
    std::string metric;
    std::uint64_t seed = 0;
    double value = 0.0;
};

struct ExperimentReport {
    std::string id;
    std::string config_json = "{}";
    std::vector<std::uint64_t> seeds;
    std::vector<MetricRow> table;
    std::vector<std::pair<std::string, bool>> verdicts;
    double wall_ms = 0.0;

    void add(const std::string& condition, const std::string& metric,
             std::uint64_t seed, double value);
    std::vector<double> values(const std::string& condition, const std::string& metric) const;
    // Median over the repeats of one (condition, metric) cell; throws
    // ErrorKind::validation when the cell is absent.
    double median(const std::string& condition, const std::string& metric) const;
    bool verdict(const std::string& name) const;
    bool all_pass() const;
};

double median_of(std::vector<double> v);

std::string report_to_json(const ExperimentReport& r);
std::string report_to_csv(const ExperimentReport& r); // long format: condition,metric,seed,value
// Content hash excluding wall-clock (reproducibility checks).
std::uint64_t report_hash(const ExperimentReport& r);

// ---------------------------------------------------------------------------
// Experiment configs. Defaults are sized for desk-scale runs; every knob that
// shapes a verdict is recorded in the report's config snapshot.
// ---------------------------------------------------------------------------

struct RepeatPolicy {
    std::uint64_t base_seed = 2026;
    int repeats = 3;

    std::uint64_t seed_for(int k) const;
};

struct Granularity2dConfig {
    RepeatPolicy repeat;
    std::vector<double> levels_m{0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
    double label_resolution_m = 0.5;
    int scenario_count = 5;
    int holdout_scenarios = 1;
    int links_per_scenario = 220;
    env::TextureAmplitude texture{0.06, 4.0, 2.0};
    // Meters of sensed surface height per texture unit. A survey cannot
    // separate micro-relief (roof tiles, clutter) from structure, so the
    // height map handed to feature extraction is height + coupling * texture;
    // labels always come from the clean truth raster. 0 disables the effect.
    double texture_height_coupling_m = 1.0;
    double shadowing_sigma_db = 1.0;
    model::TrainConfig train;
    double min_gap_db = 0.2; // interior minimum must beat both ends by this

    Granularity2dConfig();
};

struct Granularity3dConfig {
    RepeatPolicy repeat;
    std::vector<double> voxel_sizes_m{4.0, 2.0, 1.0, 0.5};
    int probe_count = 48;
    oracle::RayLaunchConfig ray;
    double tie_tolerance = 1e-9;

    Granularity3dConfig();
};

struct SemanticAblationConfig {
    RepeatPolicy repeat;
    int scenario_count = 7;
    int holdout_scenarios = 2;
    int links_per_scenario = 220;
    double shadowing_sigma_db = 2.0;
    model::TrainConfig train;

    SemanticAblationConfig();
};

struct PhysicsAblationConfig {
    RepeatPolicy repeat;
    int scenario_count = 4;
    int holdout_scenarios = 1;
    int links_per_scenario = 150;
    double voxel_size_m = 2.0;
    oracle::RayLaunchConfig ray;
    model::TrainConfig train;

    PhysicsAblationConfig();
};

struct MisalignmentConfig {
    RepeatPolicy repeat;
    int scenario_count = 6;
    int holdout_scenarios = 2;
    int links_per_scenario = 220;
    double shift_m = 5.0;
    double shadowing_sigma_db = 1.5;
    model::TrainConfig train;

    MisalignmentConfig();
};

struct TransferConfig {
    RepeatPolicy repeat;
    int source_scenarios = 6;
    int source_links_per_scenario = 350;
    int target_train_links = 320;
    int target_test_links = 280;
    double shadowing_sigma_db = 2.0;
    model::TrainConfig pretrain;
    model::TrainConfig adapt; // shared by fine-tune and from-scratch arms
    double threshold_margin_db = 0.05;
    double epoch_ratio = 0.5;
    double final_gap_db = 0.2;

    TransferConfig();
};

struct ExplanationGuidedConfig {
    RepeatPolicy repeat;
    int scenario_count = 6;
    int holdout_scenarios = 2;
    int links_per_scenario = 250;
    double shadowing_sigma_db = 1.5;
    double lambda_expl = 0.15;
    model::TrainConfig train; // lambda_expl overridden per condition
    double rmse_tolerance_db = 0.1;

    ExplanationGuidedConfig();
};

ExperimentReport run_granularity_2d(const Granularity2dConfig& cfg = {});
ExperimentReport run_granularity_3d(const Granularity3dConfig& cfg = {});
ExperimentReport run_semantic_ablation(const SemanticAblationConfig& cfg = {});
ExperimentReport run_physics_ablation(const PhysicsAblationConfig& cfg = {});
ExperimentReport run_misalignment(const MisalignmentConfig& cfg = {});
ExperimentReport run_transfer(const TransferConfig& cfg = {});
ExperimentReport run_explanation_guided(const ExplanationGuidedConfig& cfg = {});

// Dispatch by id: granularity2d, granularity3d, semantic, physics,
// misalignment, transfer, explanation. Throws ErrorKind::usage on unknown id.
ExperimentReport run_experiment(const std::string& id);
std::vector<std::string> experiment_ids();

} // namespace chanform::xp
