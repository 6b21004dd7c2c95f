#include "chanform/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "chanform/rng.hpp"

namespace chanform::xp {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Report plumbing
// ---------------------------------------------------------------------------

void ExperimentReport::add(const std::string& condition, const std::string& metric,
                           std::uint64_t seed, double value) {
    table.push_back({condition, metric, seed, value});
}

std::vector<double> ExperimentReport::values(const std::string& condition,
                                             const std::string& metric) const {
    std::vector<double> out;
    for (const MetricRow& row : table) {
        if (row.condition == condition && row.metric == metric) out.push_back(row.value);
    }
    return out;
}

double median_of(std::vector<double> v) {
    require(!v.empty(), ErrorKind::validation, "median of empty set");
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double ExperimentReport::median(const std::string& condition, const std::string& metric) const {
    std::vector<double> v = values(condition, metric);
    require(!v.empty(), ErrorKind::validation,
            "no metric rows for " + condition + "/" + metric);
    return median_of(std::move(v));
}

bool ExperimentReport::verdict(const std::string& name) const {
    for (const auto& [n, pass] : verdicts) {
        if (n == name) return pass;
    }
    fail(ErrorKind::validation, "unknown verdict: " + name);
}

bool ExperimentReport::all_pass() const {
    if (verdicts.empty()) return false;
    for (const auto& [n, pass] : verdicts) {
        if (!pass) return false;
    }
    return true;
}

namespace {

json report_json_core(const ExperimentReport& r, bool with_wall) {
    json j;
    j["id"] = r.id;
    j["config"] = json::parse(r.config_json);
    j["seeds"] = r.seeds;
    json rows = json::array();
    for (const MetricRow& row : r.table) {
        rows.push_back({{"condition", row.condition},
                        {"metric", row.metric},
                        {"seed", row.seed},
                        {"value", row.value}});
    }
    j["table"] = rows;
    json verdicts = json::array();
    for (const auto& [name, pass] : r.verdicts) {
        verdicts.push_back({{"name", name}, {"pass", pass}});
    }
    j["verdicts"] = verdicts;
    if (with_wall) j["wall_ms"] = r.wall_ms;
    return j;
}

} // namespace

std::string report_to_json(const ExperimentReport& r) {
    return report_json_core(r, true).dump(2);
}

std::string report_to_csv(const ExperimentReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "condition,metric,seed,value\n";
    for (const MetricRow& row : r.table) {
        out << row.condition << ',' << row.metric << ',' << row.seed << ',' << row.value
            << '\n';
    }
    return out.str();
}

std::uint64_t report_hash(const ExperimentReport& r) {
    std::string body = report_json_core(r, false).dump();
    return hash_string(body, 0x9e77);
}

// ---------------------------------------------------------------------------
// Shared scaffolding
// ---------------------------------------------------------------------------

std::uint64_t RepeatPolicy::seed_for(int k) const {
    return hash_combine(base_seed, 0xbeef00ull + static_cast<std::uint64_t>(k));
}

namespace {

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         t0)
            .count();
    }
};

using feat::Dataset;
using feat::FeatureGroup;

std::int64_t scenario_seed(std::uint64_t repeat_seed, int i) {
    return static_cast<std::int64_t>(
        hash_combine(repeat_seed, 0x5ce0ull + static_cast<std::uint64_t>(i)) &
        0x7fffffffffffull);
}

std::vector<env::Scenario> suite(int count, std::uint64_t repeat_seed,
                                 const env::GeneratorConfig& gen) {
    std::vector<env::Scenario> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        out.push_back(env::generate_scenario(scenario_seed(repeat_seed, i), gen));
    }
    return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& d, int scenario_count,
                                          int holdout) {
    require(holdout > 0 && holdout < scenario_count, ErrorKind::validation,
            "holdout must leave at least one scenario on each side");
    std::vector<std::int32_t> tr, te;
    for (int i = 0; i < scenario_count; ++i) {
        (i < scenario_count - holdout ? tr : te).push_back(i);
    }
    return {feat::filter_scenarios(d, tr), feat::filter_scenarios(d, te)};
}

struct FitResult {
    model::ModelParams m;
    model::TrainReport report;
    model::Metrics test;
    Dataset test_norm;
};

FitResult fit_eval(const Dataset& train_raw, const Dataset& test_raw,
                   const model::ArchConfig& arch, model::TrainConfig tcfg,
                   std::uint64_t model_seed) {
    Dataset tr = feat::normalize(train_raw);
    Dataset te = feat::apply_normalization(test_raw, tr.stats);
    model::ModelParams m0 = model::init_model(tr.schema, arch, model_seed);
    auto trained = model::train(std::move(m0), tr, tcfg);
    FitResult r;
    r.m = std::move(trained.first);
    r.report = std::move(trained.second);
    r.test_norm = std::move(te);
    r.test = model::evaluate(r.m, r.test_norm);
    return r;
}

std::string level_name(const std::string& prefix, double v, const std::string& suffix) {
    std::ostringstream out;
    out << prefix << v << suffix;
    return out.str();
}

json train_json(const model::TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"val_fraction", c.val_fraction},
            {"lambda_phys", c.loss.lambda_phys},
            {"lambda_expl", c.loss.lambda_expl}};
}

json repeat_json(const RepeatPolicy& p) {
    return {{"base_seed", p.base_seed}, {"repeats", p.repeats}};
}

// 52-bit hash of the train+test link sets, exactly representable as a double
// so it can live in the metrics table.
double link_split_hash(const Dataset& train, const Dataset& test) {
    std::vector<double> v;
    v.reserve((train.links.size() + test.links.size()) * 7 + 1);
    auto push = [&](const oracle::Link& l) {
        v.insert(v.end(), {l.tx.x, l.tx.y, l.tx.z, l.rx.x, l.rx.y, l.rx.z, l.frequency_hz});
    };
    for (const auto& l : train.links) push(l);
    v.push_back(std::numeric_limits<double>::max()); // separator
    for (const auto& l : test.links) push(l);
    return static_cast<double>(hash_doubles(v, 0x51137ull) >> 12);
}

std::vector<FeatureGroup> with_geo(std::initializer_list<FeatureGroup> extra) {
    std::vector<FeatureGroup> g{FeatureGroup::geometric};
    g.insert(g.end(), extra.begin(), extra.end());
    return g;
}

} // namespace

// ---------------------------------------------------------------------------
// 2D granularity sweep
// ---------------------------------------------------------------------------

Granularity2dConfig::Granularity2dConfig() {
    train.epochs = 55;
    train.learning_rate = 3e-3;
    train.batch_size = 64;
    train.loss.lambda_expl = 0.0;
}

ExperimentReport run_granularity_2d(const Granularity2dConfig& cfg) {
    Timer timer;
    std::vector<double> levels = cfg.levels_m;
    std::sort(levels.begin(), levels.end());
    require(levels.size() >= 3, ErrorKind::validation, "need at least 3 resolution levels");
    require(levels.front() > 0, ErrorKind::validation, "resolutions must be positive");

    ExperimentReport r;
    r.id = "granularity2d";
    {
        json snap;
        snap["levels_m"] = levels;
        snap["label_resolution_m"] = cfg.label_resolution_m;
        snap["scenario_count"] = cfg.scenario_count;
        snap["holdout_scenarios"] = cfg.holdout_scenarios;
        snap["links_per_scenario"] = cfg.links_per_scenario;
        snap["texture"] = {{"base", cfg.texture.base},
                           {"reference_resolution_m", cfg.texture.reference_resolution_m},
                           {"exponent", cfg.texture.exponent}};
        snap["texture_height_coupling_m"] = cfg.texture_height_coupling_m;
        snap["shadowing_sigma_db"] = cfg.shadowing_sigma_db;
        snap["min_gap_db"] = cfg.min_gap_db;
        snap["train"] = train_json(cfg.train);
        snap["repeat"] = repeat_json(cfg.repeat);
        r.config_json = snap.dump();
    }

    feat::FeatureConfig fcfg;
    feat::FeatureSchema schema = feat::schema_for_groups(
        fcfg, {FeatureGroup::geometric, FeatureGroup::semantic_building,
               FeatureGroup::semantic_road, FeatureGroup::semantic_vegetation,
               FeatureGroup::physics, FeatureGroup::texture});

    env::GeneratorConfig gen;

    for (int k = 0; k < cfg.repeat.repeats; ++k) {
        std::uint64_t sk = cfg.repeat.seed_for(k);
        r.seeds.push_back(sk);

        std::vector<env::Scenario> scen = suite(cfg.scenario_count, sk, gen);
        std::vector<env::RasterEnv> labels;
        labels.reserve(scen.size());
        for (const auto& s : scen) labels.push_back(env::rasterize(s, cfg.label_resolution_m));

        feat::LinkSampler sampler;
        sampler.links_per_scenario = cfg.links_per_scenario;
        sampler.seed = hash_combine(sk, 2);

        feat::DatasetBuildConfig dcfg;
        dcfg.multipath_labels = false;
        dcfg.oracle.shadowing_sigma_db = cfg.shadowing_sigma_db;
        dcfg.oracle.seed = hash_combine(sk, 3);

        for (double g : levels) {
            std::vector<feat::ScenarioEnv> envs;
            envs.reserve(scen.size());
            for (std::size_t i = 0; i < scen.size(); ++i) {
                feat::ScenarioEnv e;
                e.scenario = scen[i];
                e.scenario_id = static_cast<int>(i);
                e.label_raster = labels[i];
                e.feature_raster = (g == cfg.label_resolution_m)
                                       ? labels[i]
                                       : env::resample(labels[i], g);
                std::uint64_t tex_seed = hash_combine(
                    hash_combine(sk, 4), static_cast<std::uint64_t>(scen[i].seed));
                e.feature_raster = env::add_texture_noise(
                    e.feature_raster, tex_seed, [&](double res) { return cfg.texture(res); });
                if (cfg.texture_height_coupling_m != 0.0) {
                    // Sensed surface: micro-relief rides on top of structure.
                    auto& fr = e.feature_raster;
                    for (std::size_t c = 0; c < fr.height.size(); ++c) {
                        fr.height[c] = std::max(
                            0.0, fr.height[c] + cfg.texture_height_coupling_m * fr.texture[c]);
                    }
                }
                envs.push_back(std::move(e));
            }
            Dataset d = feat::build_dataset(envs, sampler, schema, dcfg);
            auto [traw, teraw] = split_holdout(d, cfg.scenario_count, cfg.holdout_scenarios);

            model::ArchConfig arch;
            model::TrainConfig tcfg = cfg.train;
            tcfg.seed = hash_combine(sk, 5);
            FitResult fr = fit_eval(traw, teraw, arch, tcfg, hash_combine(sk, 6));

            std::string cond = level_name("res_", g, "m");
            r.add(cond, "rmse_pl_test", sk, fr.test.rmse_pl);
            r.add(cond, "los_accuracy_test", sk, fr.test.los_accuracy);
            r.add(cond, "rmse_pl_train_final", sk,
                  fr.report.epochs.empty() ? 0.0
                                           : fr.report.epochs.back().train.rmse_pl);
        }
    }

    std::vector<double> med;
    med.reserve(levels.size());
    for (double g : levels) med.push_back(r.median(level_name("res_", g, "m"), "rmse_pl_test"));
    double best_interior = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < med.size(); ++i) best_interior = std::min(best_interior, med[i]);
    bool beats_finest = best_interior <= med.front() - cfg.min_gap_db;
    bool beats_coarsest = best_interior <= med.back() - cfg.min_gap_db;
    r.verdicts = {{"interior_beats_finest", beats_finest},
                  {"interior_beats_coarsest", beats_coarsest},
                  {"u_shape", beats_finest && beats_coarsest}};
    r.wall_ms = timer.ms();
    return r;
}

// ---------------------------------------------------------------------------
// 3D granularity sweep
// ---------------------------------------------------------------------------

Granularity3dConfig::Granularity3dConfig() {
    ray.azimuth_rays = 360;
    ray.elevation_rays = 61;
    ray.max_reflections = 2;
    ray.capture_radius_m = 2.0;
    ray.max_path_length_m = 400.0;
}

namespace {

// Street canyon with deliberately off-grid wall coordinates so that every
// voxel size quantizes the geometry differently, plus a metal block jutting
// into the street to shadow part of the probe line.
env::Scenario make_canyon() {
    env::Scenario s;
    s.bounds = {{0.0, 0.0}, {60.0, 60.0}};
    auto rect = [](double x0, double x1, double y0, double y1) {
        return Polygon{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};
    };
    env::Building south{rect(5.3, 54.7, 12.3, 24.6), 21.0, "concrete"};
    env::Building north{rect(5.3, 54.7, 35.4, 47.8), 21.0, "brick"};
    env::Building jut{rect(30.3, 36.7, 23.9, 29.3), 21.0, "metal"};
    s.buildings = {south, north, jut};
    s.tx_sites = {{{8.2, 30.1, 6.0}, 5.9e9}};
    for (const env::MaterialSpec& m : env::default_materials()) s.materials[m.id] = m;
    s.seed = 3001;
    s.validate();
    return s;
}

// A probe is usable at every voxel size <= 4 m when its cell center can never
// fall inside a footprint: stay clear of each footprint's bbox by > half the
// coarsest voxel diagonal per axis.
bool probe_clear(const env::Scenario& s, const Vec2& p, double margin) {
    for (const env::Building& b : s.buildings) {
        Rect box = polygon_bbox(b.footprint);
        if (p.x >= box.lo.x - margin && p.x <= box.hi.x + margin &&
            p.y >= box.lo.y - margin && p.y <= box.hi.y + margin) {
            return false;
        }
    }
    return true;
}

std::vector<Vec3> canyon_probes(const env::Scenario& s, std::uint64_t seed) {
    const double margin = 2.55;
    std::vector<Vec2> bases;
    for (int i = 0; i < 10; ++i) {
        double x = 14.0 + 4.0 * i;
        for (double y : {28.3, 30.1, 31.9}) {
            if (probe_clear(s, {x, y}, margin)) bases.push_back({x, y});
        }
    }
    Rng rng(hash_combine(seed, 11));
    std::vector<Vec3> probes;
    probes.reserve(bases.size());
    for (const Vec2& b : bases) {
        Vec2 p = b;
        for (int t = 0; t < 8; ++t) {
            Vec2 cand{b.x + rng.uniform(-0.45, 0.45), b.y + rng.uniform(-0.45, 0.45)};
            if (probe_clear(s, cand, margin)) {
                p = cand;
                break;
            }
        }
        probes.push_back({p.x, p.y, 1.5});
    }
    return probes;
}

} // namespace

ExperimentReport run_granularity_3d(const Granularity3dConfig& cfg) {
    Timer timer;
    std::vector<double> sizes = cfg.voxel_sizes_m;
    std::sort(sizes.begin(), sizes.end(), std::greater<>());
    require(sizes.size() >= 2, ErrorKind::validation, "need at least 2 voxel sizes");
    require(sizes.back() > 0, ErrorKind::validation, "voxel sizes must be positive");

    ExperimentReport r;
    r.id = "granularity3d";
    {
        json snap;
        snap["voxel_sizes_m"] = sizes;
        snap["probe_count"] = cfg.probe_count;
        snap["tie_tolerance"] = cfg.tie_tolerance;
        snap["ray"] = {{"azimuth_rays", cfg.ray.azimuth_rays},
                       {"elevation_rays", cfg.ray.elevation_rays},
                       {"max_reflections", cfg.ray.max_reflections},
                       {"capture_radius_m", cfg.ray.capture_radius_m},
                       {"max_path_length_m", cfg.ray.max_path_length_m}};
        snap["repeat"] = repeat_json(cfg.repeat);
        r.config_json = snap.dump();
    }

    env::Scenario scenario = make_canyon();
    const Vec3 tx = scenario.tx_sites[0].position;
    const double freq = scenario.tx_sites[0].frequency_hz;

    std::vector<env::VoxelEnv> grids;
    grids.reserve(sizes.size());
    for (double g : sizes) grids.push_back(env::voxelize(scenario, g));

    bool delays_ok = true;

    for (int k = 0; k < cfg.repeat.repeats; ++k) {
        std::uint64_t sk = cfg.repeat.seed_for(k);
        r.seeds.push_back(sk);
        std::vector<Vec3> probes = canyon_probes(scenario, sk);
        if (static_cast<int>(probes.size()) > cfg.probe_count) {
            probes.resize(cfg.probe_count);
        }

        std::vector<std::vector<oracle::ChannelSample>> samples(sizes.size());
        for (std::size_t li = 0; li < sizes.size(); ++li) {
            samples[li].resize(probes.size());
            const env::VoxelEnv& vox = grids[li];
            parallel_for(probes.size(), [&, li](std::size_t p) {
                oracle::Link link{tx, probes[p], freq};
                samples[li][p] =
                    oracle::multipath_sample(vox, link, cfg.ray);
            });
        }

        for (std::size_t li = 0; li < sizes.size(); ++li) {
            for (std::size_t p = 0; p < probes.size(); ++p) {
                double d = (probes[p] - tx).norm();
                for (const oracle::PathComponent& pc : samples[li][p].paths) {
                    if (pc.delay_s < d / kSpeedOfLight - 1e-12) delays_ok = false;
                }
            }
        }

        const std::vector<oracle::ChannelSample>& ref = samples.back(); // finest
        auto power_of = [](const oracle::ChannelSample& s) {
            return s.paths.empty() ? 300.0 : s.path_loss_db;
        };
        for (std::size_t li = 0; li < sizes.size(); ++li) {
            double power_err = 0.0, count_err = 0.0;
            for (std::size_t p = 0; p < probes.size(); ++p) {
                power_err += std::abs(power_of(samples[li][p]) - power_of(ref[p]));
                count_err += std::abs(
                    static_cast<double>(samples[li][p].effective_path_count) -
                    static_cast<double>(ref[p].effective_path_count));
            }
            power_err /= probes.size();
            count_err /= probes.size();
            std::string cond = level_name("voxel_", sizes[li], "m");
            r.add(cond, "total_power_mae_db", sk, power_err);
            r.add(cond, "path_count_mae", sk, count_err);
            r.add(cond, "combined_error", sk, power_err + count_err);
        }
    }

    std::vector<double> med;
    med.reserve(sizes.size());
    for (double g : sizes) med.push_back(r.median(level_name("voxel_", g, "m"), "combined_error"));
    bool monotone = true;
    for (std::size_t i = 0; i + 1 < med.size(); ++i) {
        if (med[i + 1] > med[i] + cfg.tie_tolerance) monotone = false;
    }
    bool finest_zero = med.back() <= 1e-12;
    r.verdicts = {{"monotone_nonincreasing", monotone},
                  {"finest_self_error_zero", finest_zero},
                  {"delays_lower_bounded", delays_ok}};
    r.wall_ms = timer.ms();
    return r;
}

// ---------------------------------------------------------------------------
// Semantic ablation
// ---------------------------------------------------------------------------

SemanticAblationConfig::SemanticAblationConfig() {
    train.epochs = 40;
    train.learning_rate = 3e-3;
    train.loss.lambda_expl = 0.0;
}

ExperimentReport run_semantic_ablation(const SemanticAblationConfig& cfg) {
    Timer timer;
    ExperimentReport r;
    r.id = "semantic";
    {
        json snap;
        snap["scenario_count"] = cfg.scenario_count;
        snap["holdout_scenarios"] = cfg.holdout_scenarios;
        snap["links_per_scenario"] = cfg.links_per_scenario;
        snap["shadowing_sigma_db"] = cfg.shadowing_sigma_db;
        snap["train"] = train_json(cfg.train);
        snap["repeat"] = repeat_json(cfg.repeat);
        r.config_json = snap.dump();
    }

    env::GeneratorConfig gen;
    gen.building_count = 20;
    gen.road_count = 4;
    gen.road_min_width_m = 8.0;
    gen.road_max_width_m = 12.0;
    gen.vegetation_count = 4;
    gen.vegetation_min_radius_m = 4.0;
    gen.vegetation_max_radius_m = 8.0;

    feat::FeatureConfig fcfg;
    feat::FeatureSchema schema = feat::schema_for_groups(
        fcfg, {FeatureGroup::geometric, FeatureGroup::semantic_building,
               FeatureGroup::semantic_road, FeatureGroup::semantic_vegetation});

    const std::vector<std::pair<std::string, std::vector<FeatureGroup>>> conditions = {
        {"geometric", with_geo({})},
        {"geometric+building", with_geo({FeatureGroup::semantic_building})},
        {"geometric+road", with_geo({FeatureGroup::semantic_road})},
        {"geometric+vegetation", with_geo({FeatureGroup::semantic_vegetation})},
    };

    for (int k = 0; k < cfg.repeat.repeats; ++k) {
        std::uint64_t sk = cfg.repeat.seed_for(k);
        r.seeds.push_back(sk);

        std::vector<env::Scenario> scen = suite(cfg.scenario_count, sk, gen);
        feat::LinkSampler sampler;
        sampler.links_per_scenario = cfg.links_per_scenario;
        sampler.seed = hash_combine(sk, 2);

        feat::DatasetBuildConfig dcfg;
        dcfg.multipath_labels = false;
        dcfg.oracle.shadowing_sigma_db = cfg.shadowing_sigma_db;
        dcfg.oracle.vegetation_db_per_m = 0.05;
        dcfg.oracle.seed = hash_combine(sk, 3);

        feat::EnvBuildConfig env_cfg;
        env_cfg.build_voxels = false;
        Dataset d = feat::build_dataset(scen, sampler, schema, dcfg, env_cfg);
        auto [traw, teraw] = split_holdout(d, cfg.scenario_count, cfg.holdout_scenarios);

        for (const auto& [name, groups] : conditions) {
            Dataset tr_c = feat::select_groups(traw, groups);
            Dataset te_c = feat::select_groups(teraw, groups);
            model::ArchConfig arch;
            model::TrainConfig tcfg = cfg.train;
            tcfg.seed = hash_combine(sk, 5);
            FitResult fr = fit_eval(tr_c, te_c, arch, tcfg, hash_combine(sk, 6));
            r.add(name, "rmse_pl_test", sk, fr.test.rmse_pl);
            r.add(name, "split_hash", sk, link_split_hash(tr_c, te_c));
            r.add(name, "n_features", sk, static_cast<double>(tr_c.dim()));
        }
    }

    double base = r.median("geometric", "rmse_pl_test");
    double red_b = base - r.median("geometric+building", "rmse_pl_test");
    double red_r = base - r.median("geometric+road", "rmse_pl_test");
    double red_v = base - r.median("geometric+vegetation", "rmse_pl_test");

    bool splits_identical = true;
    for (std::uint64_t sk : r.seeds) {
        double ref = -1.0;
        for (const MetricRow& row : r.table) {
            if (row.metric != "split_hash" || row.seed != sk) continue;
            if (ref < 0) {
                ref = row.value;
            } else if (row.value != ref) {
                splits_identical = false;
            }
        }
    }

    r.verdicts = {{"building_beats_baseline", red_b > 0.0},
                  {"ordering_building_road_vegetation", red_b > red_r && red_r > red_v},
                  {"splits_identical", splits_identical}};
    r.wall_ms = timer.ms();
    return r;
}

// ---------------------------------------------------------------------------
// Physics (material) ablation on ray-launch labels
// ---------------------------------------------------------------------------

PhysicsAblationConfig::PhysicsAblationConfig() {
    ray.azimuth_rays = 360;
    ray.elevation_rays = 21;
    ray.max_reflections = 2;
    ray.capture_radius_m = 2.0;
    ray.max_path_length_m = 500.0;
    train.epochs = 50;
    train.learning_rate = 3e-3;
    train.loss.lambda_expl = 0.0;
}

ExperimentReport run_physics_ablation(const PhysicsAblationConfig& cfg) {
    Timer timer;
    ExperimentReport r;
    r.id = "physics";
    {
        json snap;
        snap["scenario_count"] = cfg.scenario_count;
        snap["holdout_scenarios"] = cfg.holdout_scenarios;
        snap["links_per_scenario"] = cfg.links_per_scenario;
        snap["voxel_size_m"] = cfg.voxel_size_m;
        snap["ray"] = {{"azimuth_rays", cfg.ray.azimuth_rays},
                       {"elevation_rays", cfg.ray.elevation_rays},
                       {"max_reflections", cfg.ray.max_reflections},
                       {"capture_radius_m", cfg.ray.capture_radius_m}};
        snap["train"] = train_json(cfg.train);
        snap["repeat"] = repeat_json(cfg.repeat);
        r.config_json = snap.dump();
    }

    env::GeneratorConfig gen;
    gen.extent_m = 160.0;
    gen.margin_m = 15.0;
    gen.building_count = 16;
    gen.building_min_side_m = 14.0;
    gen.building_max_side_m = 34.0;
    gen.building_min_height_m = 14.0;
    gen.building_max_height_m = 30.0;
    gen.building_max_rotation_deg = 20.0;
    gen.road_count = 2;
    gen.vegetation_count = 0;
    gen.tx_min_height_m = 8.0;
    gen.tx_max_height_m = 12.0;

    feat::FeatureConfig fcfg_plain;
    feat::FeatureSchema schema_mat = feat::schema_for_groups(
        fcfg_plain, {FeatureGroup::geometric, FeatureGroup::material});
    feat::FeatureConfig fcfg_norm = fcfg_plain;
    fcfg_norm.include_normal_features = true;
    feat::FeatureSchema schema_norm = feat::schema_for_groups(
        fcfg_norm, {FeatureGroup::geometric, FeatureGroup::material});

    for (int k = 0; k < cfg.repeat.repeats; ++k) {
        std::uint64_t sk = cfg.repeat.seed_for(k);
        r.seeds.push_back(sk);

        std::vector<env::Scenario> scen = suite(cfg.scenario_count, sk, gen);
        feat::LinkSampler sampler;
        sampler.links_per_scenario = cfg.links_per_scenario;
        sampler.min_distance_m = 15.0;
        sampler.max_distance_m = 90.0;
        sampler.seed = hash_combine(sk, 2);

        feat::DatasetBuildConfig dcfg;
        dcfg.multipath_labels = true;
        dcfg.pl_from_ray = true;
        dcfg.ray = cfg.ray;
        dcfg.oracle.seed = hash_combine(sk, 3);

        feat::EnvBuildConfig env_cfg;
        env_cfg.build_voxels = true;
        env_cfg.voxel_size_m = cfg.voxel_size_m;

        Dataset d_mat = feat::build_dataset(scen, sampler, schema_mat, dcfg, env_cfg);
        Dataset d_norm = feat::build_dataset(scen, sampler, schema_norm, dcfg, env_cfg);

        struct Cond {
            std::string name;
            Dataset data;
        };
        std::vector<Cond> conds;
        conds.push_back({"geometric", feat::select_groups(d_mat, {FeatureGroup::geometric})});
        conds.push_back({"geometric+material", d_mat});
        conds.push_back({"geometric+material+normals", d_norm});

        for (Cond& c : conds) {
            auto [traw, teraw] = split_holdout(c.data, cfg.scenario_count, cfg.holdout_scenarios);
            model::ArchConfig arch;
            model::TrainConfig tcfg = cfg.train;
            tcfg.seed = hash_combine(sk, 5);
            FitResult fr = fit_eval(traw, teraw, arch, tcfg, hash_combine(sk, 6));
            r.add(c.name, "rmse_pl_test", sk, fr.test.rmse_pl);
            r.add(c.name, "n_features", sk, static_cast<double>(c.data.dim()));
            for (FeatureGroup g : c.data.schema.groups_present()) {
                r.add(c.name, std::string("n_features_") + feat::group_name(g), sk,
                      static_cast<double>(c.data.schema.group_indices(g).size()));
            }
        }
    }

    double geo = r.median("geometric", "rmse_pl_test");
    double mat = r.median("geometric+material", "rmse_pl_test");
    r.verdicts = {{"material_beats_geometry", mat < geo}};
    r.wall_ms = timer.ms();
    return r;
}

// ---------------------------------------------------------------------------
// Modality misalignment
// ---------------------------------------------------------------------------

MisalignmentConfig::MisalignmentConfig() {
    train.epochs = 70;
    train.learning_rate = 5e-3;
    train.loss.lambda_expl = 0.0;
}

ExperimentReport run_misalignment(const MisalignmentConfig& cfg) {
    Timer timer;
    ExperimentReport r;
    r.id = "misalignment";
    {
        json snap;
        snap["scenario_count"] = cfg.scenario_count;
        snap["holdout_scenarios"] = cfg.holdout_scenarios;
        snap["links_per_scenario"] = cfg.links_per_scenario;
        snap["shift_m"] = cfg.shift_m;
        snap["shadowing_sigma_db"] = cfg.shadowing_sigma_db;
        snap["train"] = train_json(cfg.train);
        snap["repeat"] = repeat_json(cfg.repeat);
        r.config_json = snap.dump();
    }

    env::GeneratorConfig gen;
    gen.building_count = 26;
    gen.building_min_side_m = 10.0;
    gen.building_max_side_m = 30.0;
    gen.building_min_height_m = 12.0;
    gen.building_max_height_m = 30.0;
    gen.road_count = 3;
    gen.vegetation_count = 3;
    gen.tx_min_height_m = 14.0;
    gen.tx_max_height_m = 20.0;

    const std::vector<FeatureGroup> semantic_groups = {FeatureGroup::semantic_building,
                                                       FeatureGroup::semantic_road,
                                                       FeatureGroup::semantic_vegetation};
    feat::FeatureConfig fcfg;
    std::vector<FeatureGroup> all = with_geo({FeatureGroup::semantic_building,
                                              FeatureGroup::semantic_road,
                                              FeatureGroup::semantic_vegetation});
    feat::FeatureSchema schema = feat::schema_for_groups(fcfg, all);

    for (int k = 0; k < cfg.repeat.repeats; ++k) {
        std::uint64_t sk = cfg.repeat.seed_for(k);
        r.seeds.push_back(sk);

        std::vector<env::Scenario> scen = suite(cfg.scenario_count, sk, gen);
        feat::EnvBuildConfig env_cfg;
        env_cfg.build_voxels = false;
        std::vector<feat::ScenarioEnv> envs = feat::make_envs(scen, env_cfg);

        feat::LinkSampler sampler;
        sampler.links_per_scenario = cfg.links_per_scenario;
        sampler.min_distance_m = 95.0;
        sampler.max_distance_m = 115.0;
        sampler.seed = hash_combine(sk, 2);

        feat::DatasetBuildConfig dcfg;
        dcfg.multipath_labels = false;
        dcfg.oracle.shadowing_sigma_db = cfg.shadowing_sigma_db;
        dcfg.oracle.shadowing_corr_m = 30.0;
        dcfg.oracle.vegetation_db_per_m = 0.08;
        dcfg.oracle.seed = hash_combine(sk, 3);

        Dataset d = feat::build_dataset(envs, sampler, schema, dcfg);
        Dataset d_mis = d;
        for (FeatureGroup g : semantic_groups) {
            d_mis = feat::misalign(d_mis, envs, g, cfg.shift_m, hash_combine(sk, 0x111));
        }

        struct Cond {
            std::string name;
            Dataset data;
        };
        std::vector<Cond> conds;
        conds.push_back({"semantic_only", feat::select_groups(d, semantic_groups)});
        conds.push_back({"geometric_only", feat::select_groups(d, {FeatureGroup::geometric})});
        conds.push_back({"combined_aligned", d});
        conds.push_back({"combined_misaligned", d_mis});

        for (Cond& c : conds) {
            auto [traw, teraw] = split_holdout(c.data, cfg.scenario_count, cfg.holdout_scenarios);
            model::ArchConfig arch;
            model::TrainConfig tcfg = cfg.train;
            tcfg.seed = hash_combine(sk, 5);
            FitResult fr = fit_eval(traw, teraw, arch, tcfg, hash_combine(sk, 6));
            r.add(c.name, "rmse_pl_test", sk, fr.test.rmse_pl);
        }
    }

    double sem = r.median("semantic_only", "rmse_pl_test");
    double mis = r.median("combined_misaligned", "rmse_pl_test");
    double ali = r.median("combined_aligned", "rmse_pl_test");
    r.verdicts = {{"misaligned_combined_worse_than_semantic", mis > sem},
                  {"aligned_combined_not_worse", ali <= sem + 0.1}};
    r.wall_ms = timer.ms();
    return r;
}

// ---------------------------------------------------------------------------
// Transfer: fine-tune with frozen extractor vs from scratch
// ---------------------------------------------------------------------------

TransferConfig::TransferConfig() {
    pretrain.epochs = 30;
    pretrain.learning_rate = 3e-3;
    pretrain.val_fraction = 0.1;
    pretrain.loss.lambda_expl = 0.0;
    adapt.epochs = 60;
    adapt.learning_rate = 3e-3;
    adapt.batch_size = 32;
    adapt.val_fraction = 0.2;
    adapt.loss.lambda_expl = 0.0;
}

namespace {

int epochs_to_threshold(const model::TrainReport& rep, double threshold) {
    for (std::size_t i = 0; i < rep.epochs.size(); ++i) {
        if (rep.epochs[i].val.rmse_pl <= threshold) return static_cast<int>(i) + 1;
    }
    return static_cast<int>(rep.epochs.size());
}

double min_val_rmse(const model::TrainReport& rep) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : rep.epochs) best = std::min(best, e.val.rmse_pl);
    return best;
}

} // namespace

ExperimentReport run_transfer(const TransferConfig& cfg) {
    Timer timer;
    ExperimentReport r;
    r.id = "transfer";
    {
        json snap;
        snap["source_scenarios"] = cfg.source_scenarios;
        snap["source_links_per_scenario"] = cfg.source_links_per_scenario;
        snap["target_train_links"] = cfg.target_train_links;
        snap["target_test_links"] = cfg.target_test_links;
        snap["shadowing_sigma_db"] = cfg.shadowing_sigma_db;
        snap["threshold_margin_db"] = cfg.threshold_margin_db;
        snap["epoch_ratio"] = cfg.epoch_ratio;
        snap["final_gap_db"] = cfg.final_gap_db;
        snap["pretrain"] = train_json(cfg.pretrain);
        snap["adapt"] = train_json(cfg.adapt);
        snap["repeat"] = repeat_json(cfg.repeat);
        r.config_json = snap.dump();
    }

    env::GeneratorConfig gen;
    gen.vegetation_count = 4;

    feat::FeatureConfig fcfg;
    feat::FeatureSchema schema = feat::schema_for_groups(
        fcfg, {FeatureGroup::geometric, FeatureGroup::semantic_building,
               FeatureGroup::semantic_road, FeatureGroup::semantic_vegetation,
               FeatureGroup::physics});

    for (int k = 0; k < cfg.repeat.repeats; ++k) {
        std::uint64_t sk = cfg.repeat.seed_for(k);
        r.seeds.push_back(sk);

        feat::DatasetBuildConfig dcfg;
        dcfg.multipath_labels = false;
        dcfg.oracle.shadowing_sigma_db = cfg.shadowing_sigma_db;
        dcfg.oracle.seed = hash_combine(sk, 3);
        feat::EnvBuildConfig env_cfg;
        env_cfg.build_voxels = false;

        // Source suite and pre-training.
        std::vector<env::Scenario> sources = suite(cfg.source_scenarios, sk, gen);
        feat::LinkSampler src_sampler;
        src_sampler.links_per_scenario = cfg.source_links_per_scenario;
        src_sampler.seed = hash_combine(sk, 2);
        Dataset source_raw = feat::build_dataset(sources, src_sampler, schema, dcfg, env_cfg);
        Dataset source = feat::normalize(source_raw);

        model::ArchConfig arch;
        model::TrainConfig pre_cfg = cfg.pretrain;
        pre_cfg.seed = hash_combine(sk, 5);
        model::ModelParams m0 = model::init_model(source.schema, arch, hash_combine(sk, 6));
        auto pre = model::train(std::move(m0), source, pre_cfg);
        std::uint64_t frozen_before = model::extractor_hash(pre.first);

        // Target scenario: unseen generator seed.
        env::Scenario target = env::generate_scenario(
            static_cast<std::int64_t>(hash_combine(sk, 0x7a46ull) & 0x7fffffffffffull), gen);
        std::vector<env::Scenario> target_vec{target};

        feat::LinkSampler t_train = src_sampler;
        t_train.links_per_scenario = cfg.target_train_links;
        t_train.seed = hash_combine(sk, 23);
        feat::LinkSampler t_test = src_sampler;
        t_test.links_per_scenario = cfg.target_test_links;
        t_test.seed = hash_combine(sk, 24);

        Dataset target_train_raw = feat::build_dataset(target_vec, t_train, schema, dcfg, env_cfg);
        Dataset target_test_raw = feat::build_dataset(target_vec, t_test, schema, dcfg, env_cfg);
        Dataset target_train = feat::normalize(target_train_raw);
        Dataset target_test = feat::apply_normalization(target_test_raw, target_train.stats);

        model::TrainConfig adapt_cfg = cfg.adapt;
        adapt_cfg.seed = hash_combine(sk, 7);

        auto ft = model::finetune(pre.first, target_train, adapt_cfg);
        model::ModelParams scratch0 = model::init_model(target_train.schema, arch,
                                                        hash_combine(sk, 31));
        auto sc = model::train(std::move(scratch0), target_train, adapt_cfg);

        double threshold = std::max(min_val_rmse(ft.second), min_val_rmse(sc.second)) +
                           cfg.threshold_margin_db;
        int e_ft = epochs_to_threshold(ft.second, threshold);
        int e_sc = epochs_to_threshold(sc.second, threshold);
        double final_ft = model::evaluate(ft.first, target_test).rmse_pl;
        double final_sc = model::evaluate(sc.first, target_test).rmse_pl;
        bool frozen = model::extractor_hash(ft.first) == frozen_before;

        r.add("finetune", "epochs_to_threshold", sk, static_cast<double>(e_ft));
        r.add("scratch", "epochs_to_threshold", sk, static_cast<double>(e_sc));
        r.add("finetune", "final_rmse_test", sk, final_ft);
        r.add("scratch", "final_rmse_test", sk, final_sc);
        r.add("finetune", "min_val_rmse", sk, min_val_rmse(ft.second));
        r.add("scratch", "min_val_rmse", sk, min_val_rmse(sc.second));
        r.add("finetune", "threshold_db", sk, threshold);
        r.add("finetune", "extractor_frozen", sk, frozen ? 1.0 : 0.0);
        r.add("finetune", "wall_ms_train", sk, ft.second.wall_ms);
        r.add("scratch", "wall_ms_train", sk, sc.second.wall_ms);
    }

    bool all_frozen = true;
    for (double v : r.values("finetune", "extractor_frozen")) {
        if (v != 1.0) all_frozen = false;
    }
    double med_eft = r.median("finetune", "epochs_to_threshold");
    double med_esc = r.median("scratch", "epochs_to_threshold");
    double med_fft = r.median("finetune", "final_rmse_test");
    double med_fsc = r.median("scratch", "final_rmse_test");
    r.verdicts = {{"finetune_halves_epochs", med_eft <= cfg.epoch_ratio * med_esc},
                  {"final_rmse_close", med_fft <= med_fsc + cfg.final_gap_db},
                  {"extractor_frozen", all_frozen}};
    r.wall_ms = timer.ms();
    return r;
}

// ---------------------------------------------------------------------------
// Explanation-guided training
// ---------------------------------------------------------------------------

ExplanationGuidedConfig::ExplanationGuidedConfig() {
    train.epochs = 45;
    train.learning_rate = 3e-3;
}

ExperimentReport run_explanation_guided(const ExplanationGuidedConfig& cfg) {
    Timer timer;
    ExperimentReport r;
    r.id = "explanation";
    {
        json snap;
        snap["scenario_count"] = cfg.scenario_count;
        snap["holdout_scenarios"] = cfg.holdout_scenarios;
        snap["links_per_scenario"] = cfg.links_per_scenario;
        snap["shadowing_sigma_db"] = cfg.shadowing_sigma_db;
        snap["lambda_expl"] = cfg.lambda_expl;
        snap["rmse_tolerance_db"] = cfg.rmse_tolerance_db;
        snap["train"] = train_json(cfg.train);
        snap["repeat"] = repeat_json(cfg.repeat);
        r.config_json = snap.dump();
    }
    require(cfg.lambda_expl > 0.0, ErrorKind::validation,
            "lambda_expl must be positive for the supervised arm");

    env::GeneratorConfig gen;
    gen.building_count = 24;
    gen.building_min_height_m = 10.0;
    gen.building_max_height_m = 28.0;
    gen.tx_min_height_m = 10.0;
    gen.tx_max_height_m = 14.0;
    gen.vegetation_count = 4;

    feat::FeatureConfig fcfg;
    feat::FeatureSchema schema = feat::schema_for_groups(
        fcfg, {FeatureGroup::geometric, FeatureGroup::semantic_building,
               FeatureGroup::semantic_road, FeatureGroup::semantic_vegetation,
               FeatureGroup::physics, FeatureGroup::texture});

    for (int k = 0; k < cfg.repeat.repeats; ++k) {
        std::uint64_t sk = cfg.repeat.seed_for(k);
        r.seeds.push_back(sk);

        std::vector<env::Scenario> scen = suite(cfg.scenario_count, sk, gen);
        feat::LinkSampler sampler;
        sampler.links_per_scenario = cfg.links_per_scenario;
        sampler.seed = hash_combine(sk, 2);

        feat::DatasetBuildConfig dcfg;
        dcfg.multipath_labels = false;
        dcfg.oracle.shadowing_sigma_db = cfg.shadowing_sigma_db;
        dcfg.oracle.vegetation_db_per_m = 0.1;
        dcfg.oracle.seed = hash_combine(sk, 3);

        feat::EnvBuildConfig env_cfg;
        env_cfg.build_voxels = false;
        env_cfg.texture = env::TextureAmplitude{1.0, 4.0, 0.0}; // flat distractor noise
        env_cfg.texture_seed = hash_combine(sk, 4);

        Dataset d = feat::build_dataset(scen, sampler, schema, dcfg, env_cfg);
        auto [traw, teraw] = split_holdout(d, cfg.scenario_count, cfg.holdout_scenarios);

        for (double lambda : {0.0, cfg.lambda_expl}) {
            model::ArchConfig arch;
            model::TrainConfig tcfg = cfg.train;
            tcfg.loss.lambda_expl = lambda;
            tcfg.seed = hash_combine(sk, 5);
            FitResult fr = fit_eval(traw, teraw, arch, tcfg, hash_combine(sk, 6));

            std::vector<std::size_t> nlos_rows;
            for (std::size_t i = 0; i < fr.test_norm.n_rows; ++i) {
                if (fr.test_norm.labels[i].los < 0.5) nlos_rows.push_back(i);
            }
            double mass = nlos_rows.empty()
                              ? 0.0
                              : explain::relevant_mass(fr.m, fr.test_norm, nlos_rows);
            explain::PerturbationCurve del = explain::deletion_curve(fr.m, fr.test_norm);
            double rise = del.rmse_db[4] - del.rmse_db[0]; // fraction 0.2 vs 0

            std::string cond = lambda > 0 ? "lambda_expl" : "lambda0";
            r.add(cond, "rmse_pl_test", sk, fr.test.rmse_pl);
            r.add(cond, "relevant_mass_nlos", sk, mass);
            r.add(cond, "deletion_rise_020", sk, rise);
            r.add(cond, "n_nlos_test", sk, static_cast<double>(nlos_rows.size()));
        }
    }

    double rmse0 = r.median("lambda0", "rmse_pl_test");
    double rmse1 = r.median("lambda_expl", "rmse_pl_test");
    double mass0 = r.median("lambda0", "relevant_mass_nlos");
    double mass1 = r.median("lambda_expl", "relevant_mass_nlos");
    double rise0 = r.median("lambda0", "deletion_rise_020");
    double rise1 = r.median("lambda_expl", "deletion_rise_020");
    r.verdicts = {{"rmse_preserved", rmse1 <= rmse0 + cfg.rmse_tolerance_db},
                  {"relevant_mass_increases", mass1 > mass0},
                  {"deletion_rise_steeper", rise1 > rise0}};
    r.wall_ms = timer.ms();
    return r;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

std::vector<std::string> experiment_ids() {
    return {"granularity2d", "granularity3d", "semantic",     "physics",
            "misalignment",  "transfer",      "explanation"};
}

ExperimentReport run_experiment(const std::string& id) {
    if (id == "granularity2d") return run_granularity_2d();
    if (id == "granularity3d") return run_granularity_3d();
    if (id == "semantic") return run_semantic_ablation();
    if (id == "physics") return run_physics_ablation();
    if (id == "misalignment") return run_misalignment();
    if (id == "transfer") return run_transfer();
    if (id == "explanation") return run_explanation_guided();
    fail(ErrorKind::usage, "unknown experiment id: " + id +
                               " (expected one of granularity2d granularity3d semantic "
                               "physics misalignment transfer explanation)");
}

} // namespace chanform::xp
