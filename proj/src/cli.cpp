#include "chanform/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "chanform/dataset.hpp"
#include "chanform/experiments.hpp"
#include "chanform/explain.hpp"
#include "chanform/grid_io.hpp"
#include "chanform/model.hpp"
#include "chanform/oracle.hpp"
#include "chanform/rng.hpp"
#include "chanform/scenario.hpp"
#include "chanform/train.hpp"

namespace chanform::cli {

using nlohmann::json;

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::placement_failure: return "placement_failure";
        case ErrorKind::grid_too_large: return "grid_too_large";
        case ErrorKind::out_of_bounds: return "out_of_bounds";
        case ErrorKind::invalid_endpoint: return "invalid_endpoint";
        case ErrorKind::missing_modality: return "missing_modality";
        case ErrorKind::schema_mismatch: return "schema_mismatch";
        case ErrorKind::no_path: return "no_path";
        case ErrorKind::degenerate_link: return "degenerate_link";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::io: return "io";
        case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

namespace {

int exit_code_for(ErrorKind kind) {
    if (kind == ErrorKind::usage) return 1;
    if (kind == ErrorKind::divergence) return 3;
    return 2;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::io, "cannot open for writing: " + path);
    f << text;
    f.flush();
    require(f.good(), ErrorKind::io, "write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::io, "cannot open: " + path);
    std::ostringstream out;
    out << f.rdbuf();
    return out.str();
}

// Every artifact-producing command drops its resolved configuration next to
// the artifact so the run can be reproduced from the snapshot alone.
void write_snapshot(const json& snap, const std::string& out_path) {
    write_text(out_path + ".config.json", snap.dump(2) + "\n");
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            fail(ErrorKind::usage, "not an integer list: " + text);
        }
    }
    require(!out.empty(), ErrorKind::usage, "empty integer list");
    return out;
}

std::vector<feat::FeatureGroup> parse_groups(const std::string& text) {
    std::vector<feat::FeatureGroup> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(feat::group_from_name(item));
    }
    require(!out.empty(), ErrorKind::usage, "empty feature group list");
    return out;
}

Vec3 vec3_of(const std::vector<double>& v) {
    require(v.size() == 3, ErrorKind::usage, "expected 3 coordinates");
    return {v[0], v[1], v[2]};
}

feat::Dataset load_normalized_for(const model::ModelParams& m, const std::string& path) {
    feat::Dataset d = feat::load_dataset(path);
    require(d.schema.fingerprint() == m.schema_fingerprint, ErrorKind::schema_mismatch,
            "dataset schema does not match the model checkpoint");
    if (!d.stats.normalized) d = feat::apply_normalization(d, m.stats);
    return d;
}

// --- option bags (kept alive by shared_ptr captures) -----------------------

struct GenOpts {
    std::int64_t seed = 1;
    std::string out;
    env::GeneratorConfig gen;
};

struct RasterOpts {
    std::string scenario, out;
    double resolution = 1.0;
    double texture_base = 0.0, texture_ref = 4.0, texture_exp = 1.0;
    std::uint64_t texture_seed = 7;
};

struct VoxelOpts {
    std::string scenario, out;
    double voxel = 2.0;
};

struct OracleLinkOpts {
    std::string scenario, out, format = "json";
    double resolution = 1.0;
    std::vector<double> tx, rx;
    double frequency = 5.9e9;
    double sigma = 0.0, corr = 25.0, veg = 0.15;
    std::uint64_t seed = 0;
};

struct OracleMapOpts {
    std::string scenario, out, csv;
    double resolution = 1.0, map_resolution = 0.0, rx_height = 1.5;
    int tx_index = 0;
    double sigma = 0.0, corr = 25.0, veg = 0.15;
    std::uint64_t seed = 0;
};

struct DatasetOpts {
    std::vector<std::string> scenario_files;
    int generate = 0;
    std::uint64_t gen_seed = 1;
    double extent = 240.0;
    int buildings = 18, roads = 3, vegetation = 5;
    std::string out;
    std::string groups = "all";
    bool normals = false;
    int links = 100;
    double min_distance = 20.0, max_distance = 180.0, rx_height = 1.5;
    std::uint64_t sampler_seed = 1;
    double label_resolution = 1.0, feature_resolution = 1.0, voxel = 2.0;
    bool no_voxels = false;
    double texture_base = 0.0, texture_ref = 4.0, texture_exp = 1.0;
    std::uint64_t texture_seed = 7;
    double sigma = 0.0, corr = 25.0, veg = 0.15;
    std::uint64_t oracle_seed = 0;
    bool no_multipath = false, ray_power = false, do_normalize = false;
    int az = 36, el = 9, reflections = 2;
    double capture = 1.5;
};

struct TrainOpts {
    std::string dataset, out, report;
    int epochs = 60, batch = 64;
    double lr = 3e-3, val_fraction = 0.15;
    std::uint64_t train_seed = 1, model_seed = 7;
    double lambda_phys = 0.1, lambda_expl = 0.05;
    double early_stop = 0.0;
    bool freeze = false, no_model_aided = false;
    std::string extractor = "48,48", heads = "24";
    double init_frequency = 5.9e9;
};

struct FinetuneOpts {
    std::string model, dataset, out, report;
    int epochs = 60, batch = 32;
    double lr = 3e-3, val_fraction = 0.2;
    std::uint64_t seed = 1;
    double lambda_phys = 0.1, lambda_expl = 0.0;
};

struct PredictOpts {
    std::string model, dataset, out, format = "json";
};

struct RadioMapOpts {
    std::string model, scenario, out, csv;
    double resolution = 1.0, map_resolution = 0.0, rx_height = 1.5, voxel = 2.0;
    bool no_voxels = false;
    int tx_index = 0;
};

struct SaliencyOpts {
    std::string model, dataset, out, format = "json";
    std::size_t row = 0;
};

struct CurvesOpts {
    std::string model, dataset, out, format = "json";
};

struct RankOpts {
    std::string model, dataset, out, format = "json";
};

struct ExperimentOpts {
    std::string id;
    std::string out_dir = ".";
};

struct SummarizeOpts {
    std::vector<std::string> files;
    std::string format = "json";
};

json oracle_snap(double sigma, double corr, double veg, std::uint64_t seed) {
    return {{"shadowing_sigma_db", sigma},
            {"shadowing_corr_m", corr},
            {"vegetation_db_per_m", veg},
            {"seed", seed}};
}

oracle::OracleConfig oracle_cfg_of(double sigma, double corr, double veg,
                                   std::uint64_t seed) {
    oracle::OracleConfig c;
    c.shadowing_sigma_db = sigma;
    c.shadowing_corr_m = corr;
    c.vegetation_db_per_m = veg;
    c.seed = seed;
    return c;
}

// --- command bodies --------------------------------------------------------

void cmd_scenario_gen(const GenOpts& o) {
    env::Scenario s = env::generate_scenario(o.seed, o.gen);
    env::save_scenario(s, o.out);
    json snap{{"command", "scenario gen"},
              {"seed", o.seed},
              {"extent_m", o.gen.extent_m},
              {"building_count", o.gen.building_count},
              {"road_count", o.gen.road_count},
              {"vegetation_count", o.gen.vegetation_count},
              {"tx_count", o.gen.tx_count},
              {"frequency_hz", o.gen.frequency_hz},
              {"out", o.out}};
    write_snapshot(snap, o.out);
    std::cout << "scenario: " << s.buildings.size() << " buildings, " << s.roads.size()
              << " roads, " << s.vegetation.size() << " vegetation patches -> " << o.out
              << "\n";
}

void cmd_raster(const RasterOpts& o) {
    env::Scenario s = env::load_scenario(o.scenario);
    env::RasterEnv r = env::rasterize(s, o.resolution);
    if (o.texture_base > 0.0) {
        env::TextureAmplitude amp{o.texture_base, o.texture_ref, o.texture_exp};
        r = env::add_texture_noise(r, o.texture_seed,
                                   [&](double g) { return amp(g); });
    }
    io::save_raster(r, o.out);
    json snap{{"command", "raster"},
              {"scenario", o.scenario},
              {"resolution_m", o.resolution},
              {"texture_base", o.texture_base},
              {"texture_seed", o.texture_seed},
              {"out", o.out}};
    write_snapshot(snap, o.out);
    std::cout << "raster: " << r.nx << "x" << r.ny << " cells at " << r.resolution_m
              << " m -> " << o.out << "\n";
}

void cmd_voxelize(const VoxelOpts& o) {
    env::Scenario s = env::load_scenario(o.scenario);
    env::VoxelEnv v = env::voxelize(s, o.voxel);
    io::save_voxels(v, o.out);
    json snap{{"command", "voxelize"},
              {"scenario", o.scenario},
              {"voxel_size_m", o.voxel},
              {"out", o.out}};
    write_snapshot(snap, o.out);
    std::cout << "voxels: " << v.nx << "x" << v.ny << "x" << v.nz << " at "
              << v.voxel_size_m << " m -> " << o.out << "\n";
}

void cmd_oracle_link(const OracleLinkOpts& o) {
    env::Scenario s = env::load_scenario(o.scenario);
    env::RasterEnv r = env::rasterize(s, o.resolution);
    oracle::Link link{vec3_of(o.tx), vec3_of(o.rx), o.frequency};
    oracle::ChannelSample cs =
        oracle::path_loss(r, link, oracle_cfg_of(o.sigma, o.corr, o.veg, o.seed));
    std::string body;
    if (o.format == "csv") {
        std::ostringstream out;
        out.precision(17);
        out << "path_loss_db,los,distance_m,fspl_db\n"
            << cs.path_loss_db << ',' << (cs.los ? 1 : 0) << ',' << link.distance_m()
            << ',' << oracle::fspl_db(link.distance_m(), link.frequency_hz) << '\n';
        body = out.str();
    } else {
        json j{{"path_loss_db", cs.path_loss_db},
               {"los", cs.los},
               {"distance_m", link.distance_m()},
               {"fspl_db", oracle::fspl_db(link.distance_m(), link.frequency_hz)}};
        body = j.dump(2) + "\n";
    }
    if (o.out.empty()) {
        std::cout << body;
    } else {
        write_text(o.out, body);
        json snap{{"command", "oracle link"}, {"scenario", o.scenario},
                  {"resolution_m", o.resolution}, {"tx", o.tx},
                  {"rx", o.rx},                   {"frequency_hz", o.frequency},
                  {"oracle", oracle_snap(o.sigma, o.corr, o.veg, o.seed)},
                  {"out", o.out}};
        write_snapshot(snap, o.out);
        std::cout << "link: PL " << cs.path_loss_db << " dB (" << (cs.los ? "LOS" : "NLOS")
                  << ") -> " << o.out << "\n";
    }
}

void cmd_oracle_map(const OracleMapOpts& o) {
    env::Scenario s = env::load_scenario(o.scenario);
    require(o.tx_index >= 0 && o.tx_index < static_cast<int>(s.tx_sites.size()),
            ErrorKind::validation, "tx index out of range");
    env::RasterEnv r = env::rasterize(s, o.resolution);
    oracle::RadioMapConfig mc;
    mc.resolution_m = o.map_resolution;
    mc.rx_height_m = o.rx_height;
    oracle::RadioMapGrid map = oracle::radio_map(
        r, s.tx_sites[o.tx_index], mc, oracle_cfg_of(o.sigma, o.corr, o.veg, o.seed));
    oracle::save_radio_map(map, o.out);
    if (!o.csv.empty()) oracle::radio_map_to_csv(map, o.csv);
    json snap{{"command", "oracle map"},
              {"scenario", o.scenario},
              {"resolution_m", o.resolution},
              {"map_resolution_m", o.map_resolution},
              {"rx_height_m", o.rx_height},
              {"tx_index", o.tx_index},
              {"oracle", oracle_snap(o.sigma, o.corr, o.veg, o.seed)},
              {"out", o.out}};
    write_snapshot(snap, o.out);
    std::cout << "radio map: " << map.nx << "x" << map.ny << " cells -> " << o.out << "\n";
}

void cmd_dataset_build(const DatasetOpts& o) {
    bool from_files = !o.scenario_files.empty();
    require(from_files != (o.generate > 0), ErrorKind::usage,
            "provide either --scenario files or --generate N, not both");
    std::vector<env::Scenario> scenarios;
    if (from_files) {
        for (const std::string& f : o.scenario_files) {
            scenarios.push_back(env::load_scenario(f));
        }
    } else {
        env::GeneratorConfig gen;
        gen.extent_m = o.extent;
        gen.building_count = o.buildings;
        gen.road_count = o.roads;
        gen.vegetation_count = o.vegetation;
        for (int i = 0; i < o.generate; ++i) {
            scenarios.push_back(env::generate_scenario(
                static_cast<std::int64_t>(
                    hash_combine(o.gen_seed, 0x5ce0ull + static_cast<std::uint64_t>(i)) &
                    0x7fffffffffffull),
                gen));
        }
    }

    feat::FeatureConfig fc;
    fc.include_normal_features = o.normals;
    feat::FeatureSchema schema =
        o.groups == "all" ? feat::default_schema(fc)
                          : feat::schema_for_groups(fc, parse_groups(o.groups));

    feat::LinkSampler sampler;
    sampler.links_per_scenario = o.links;
    sampler.min_distance_m = o.min_distance;
    sampler.max_distance_m = o.max_distance;
    sampler.rx_height_m = o.rx_height;
    sampler.seed = o.sampler_seed;

    feat::DatasetBuildConfig dcfg;
    dcfg.oracle = oracle_cfg_of(o.sigma, o.corr, o.veg, o.oracle_seed);
    dcfg.multipath_labels = !o.no_multipath;
    dcfg.pl_from_ray = o.ray_power;
    dcfg.ray.azimuth_rays = o.az;
    dcfg.ray.elevation_rays = o.el;
    dcfg.ray.max_reflections = o.reflections;
    dcfg.ray.capture_radius_m = o.capture;

    feat::EnvBuildConfig env_cfg;
    env_cfg.label_resolution_m = o.label_resolution;
    env_cfg.feature_resolution_m = o.feature_resolution;
    env_cfg.voxel_size_m = o.voxel;
    env_cfg.build_voxels = !o.no_voxels;
    if (o.texture_base > 0.0) {
        env_cfg.texture = env::TextureAmplitude{o.texture_base, o.texture_ref, o.texture_exp};
        env_cfg.texture_seed = o.texture_seed;
    }

    feat::Dataset d = feat::build_dataset(scenarios, sampler, schema, dcfg, env_cfg);
    if (o.do_normalize) d = feat::normalize(d);
    feat::save_dataset(d, o.out);

    json snap{{"command", "dataset build"},
              {"scenario_files", o.scenario_files},
              {"generate", o.generate},
              {"gen_seed", o.gen_seed},
              {"groups", o.groups},
              {"include_normal_features", o.normals},
              {"links_per_scenario", o.links},
              {"min_distance_m", o.min_distance},
              {"max_distance_m", o.max_distance},
              {"rx_height_m", o.rx_height},
              {"sampler_seed", o.sampler_seed},
              {"label_resolution_m", o.label_resolution},
              {"feature_resolution_m", o.feature_resolution},
              {"voxel_size_m", o.voxel},
              {"build_voxels", !o.no_voxels},
              {"texture_base", o.texture_base},
              {"oracle", oracle_snap(o.sigma, o.corr, o.veg, o.oracle_seed)},
              {"multipath_labels", !o.no_multipath},
              {"pl_from_ray", o.ray_power},
              {"normalized", o.do_normalize},
              {"out", o.out}};
    write_snapshot(snap, o.out);
    std::cout << "dataset: " << d.n_rows << " rows x " << d.dim() << " features -> "
              << o.out << "\n";
}

json report_json(const model::TrainReport& rep, const model::Metrics* test) {
    json j;
    j["epochs_run"] = rep.epochs_run;
    j["threshold_epoch"] = rep.threshold_epoch;
    j["wall_ms"] = rep.wall_ms;
    j["seed"] = rep.seed;
    j["final_param_hash"] = rep.final_param_hash;
    json epochs = json::array();
    for (const auto& e : rep.epochs) {
        epochs.push_back({{"train_rmse_pl", e.train.rmse_pl},
                          {"val_rmse_pl", e.val.rmse_pl},
                          {"train_los_accuracy", e.train.los_accuracy},
                          {"val_los_accuracy", e.val.los_accuracy},
                          {"loss_total", e.batch_mean.total}});
    }
    j["epochs"] = epochs;
    if (test != nullptr) {
        j["test"] = {{"rmse_pl", test->rmse_pl},
                     {"mae_pl", test->mae_pl},
                     {"los_accuracy", test->los_accuracy},
                     {"rmse_log_ds", test->rmse_log_ds},
                     {"rmse_count", test->rmse_count},
                     {"n", test->n}};
    }
    return j;
}

void cmd_train(const TrainOpts& o, bool early_stop_set) {
    feat::Dataset d = feat::load_dataset(o.dataset);
    if (!d.stats.normalized) d = feat::normalize(d);

    model::ArchConfig arch;
    arch.extractor_widths = parse_int_list(o.extractor);
    arch.head_widths = parse_int_list(o.heads);
    arch.model_aided = !o.no_model_aided;
    arch.init_frequency_hz = o.init_frequency;

    model::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.learning_rate = o.lr;
    cfg.val_fraction = o.val_fraction;
    cfg.seed = o.train_seed;
    cfg.loss.lambda_phys = o.lambda_phys;
    cfg.loss.lambda_expl = o.lambda_expl;
    cfg.freeze_extractor = o.freeze;
    if (early_stop_set) cfg.early_stop_rmse = o.early_stop;

    model::ModelParams m0 = model::init_model(d.schema, arch, o.model_seed);
    auto [m, rep] = model::train(std::move(m0), d, cfg);
    model::save_model(m, o.out);

    std::string report_path = o.report.empty() ? o.out + ".report.json" : o.report;
    write_text(report_path, report_json(rep, nullptr).dump(2) + "\n");

    json snap{{"command", "train"},
              {"dataset", o.dataset},
              {"epochs", o.epochs},
              {"batch_size", o.batch},
              {"learning_rate", o.lr},
              {"val_fraction", o.val_fraction},
              {"train_seed", o.train_seed},
              {"model_seed", o.model_seed},
              {"lambda_phys", o.lambda_phys},
              {"lambda_expl", o.lambda_expl},
              {"freeze_extractor", o.freeze},
              {"model_aided", !o.no_model_aided},
              {"extractor_widths", o.extractor},
              {"head_widths", o.heads},
              {"early_stop_rmse", early_stop_set ? json(o.early_stop) : json(nullptr)},
              {"out", o.out}};
    write_snapshot(snap, o.out);

    double final_val = rep.epochs.empty() ? 0.0 : rep.epochs.back().val.rmse_pl;
    std::cout << "trained " << rep.epochs_run << " epochs, val RMSE "
              << final_val << " dB -> " << o.out << "\n";
}

void cmd_finetune(const FinetuneOpts& o) {
    model::ModelParams pre = model::load_model(o.model);
    feat::Dataset d = feat::load_dataset(o.dataset);
    if (!d.stats.normalized) d = feat::normalize(d);

    model::TrainConfig cfg;
    cfg.epochs = o.epochs;
    cfg.batch_size = o.batch;
    cfg.learning_rate = o.lr;
    cfg.val_fraction = o.val_fraction;
    cfg.seed = o.seed;
    cfg.loss.lambda_phys = o.lambda_phys;
    cfg.loss.lambda_expl = o.lambda_expl;

    auto [m, rep] = model::finetune(pre, d, cfg);
    model::save_model(m, o.out);
    std::string report_path = o.report.empty() ? o.out + ".report.json" : o.report;
    write_text(report_path, report_json(rep, nullptr).dump(2) + "\n");

    json snap{{"command", "finetune"}, {"model", o.model},
              {"dataset", o.dataset},  {"epochs", o.epochs},
              {"batch_size", o.batch}, {"learning_rate", o.lr},
              {"seed", o.seed},        {"out", o.out}};
    write_snapshot(snap, o.out);
    std::cout << "finetuned " << rep.epochs_run << " epochs (extractor frozen) -> "
              << o.out << "\n";
}

void cmd_predict(const PredictOpts& o) {
    model::ModelParams m = model::load_model(o.model);
    feat::Dataset d = load_normalized_for(m, o.dataset);
    model::Metrics met = model::evaluate(m, d);

    std::string body;
    if (o.format == "csv") {
        std::ostringstream out;
        out.precision(17);
        out << "row,scenario_id,path_loss_db,los_prob,delay_spread_s,path_count,"
               "label_path_loss_db,label_los\n";
        for (std::size_t i = 0; i < d.n_rows; ++i) {
            model::Predictions p = model::forward(m, d.row(i));
            out << i << ',' << d.scenario_ids[i] << ',' << p.path_loss_db << ','
                << p.los_prob << ',' << p.delay_spread_s << ',' << p.path_count << ','
                << d.labels[i].path_loss_db << ',' << d.labels[i].los << '\n';
        }
        body = out.str();
    } else {
        json rows = json::array();
        for (std::size_t i = 0; i < d.n_rows; ++i) {
            model::Predictions p = model::forward(m, d.row(i));
            rows.push_back({{"row", i},
                            {"scenario_id", d.scenario_ids[i]},
                            {"path_loss_db", p.path_loss_db},
                            {"los_prob", p.los_prob},
                            {"delay_spread_s", p.delay_spread_s},
                            {"path_count", p.path_count},
                            {"label_path_loss_db", d.labels[i].path_loss_db},
                            {"label_los", d.labels[i].los}});
        }
        json j{{"metrics",
                {{"rmse_pl", met.rmse_pl},
                 {"mae_pl", met.mae_pl},
                 {"los_accuracy", met.los_accuracy},
                 {"rmse_log_ds", met.rmse_log_ds},
                 {"rmse_count", met.rmse_count}}},
               {"predictions", rows}};
        body = j.dump(2) + "\n";
    }
    if (o.out.empty()) {
        std::cout << body;
    } else {
        write_text(o.out, body);
        json snap{{"command", "predict"},
                  {"model", o.model},
                  {"dataset", o.dataset},
                  {"format", o.format},
                  {"out", o.out}};
        write_snapshot(snap, o.out);
        std::cout << "predictions: " << d.n_rows << " rows, RMSE " << met.rmse_pl
                  << " dB -> " << o.out << "\n";
    }
}

void cmd_radiomap(const RadioMapOpts& o) {
    model::ModelParams m = model::load_model(o.model);
    env::Scenario s = env::load_scenario(o.scenario);
    require(o.tx_index >= 0 && o.tx_index < static_cast<int>(s.tx_sites.size()),
            ErrorKind::validation, "tx index out of range");
    env::RasterEnv r = env::rasterize(s, o.resolution);
    std::optional<env::VoxelEnv> vox;
    if (!o.no_voxels) vox = env::voxelize(s, o.voxel);
    oracle::RadioMapConfig mc;
    mc.resolution_m = o.map_resolution;
    mc.rx_height_m = o.rx_height;
    oracle::RadioMapGrid map = model::predict_radio_map(
        m, r, vox ? &*vox : nullptr, s.tx_sites[o.tx_index], mc);
    oracle::save_radio_map(map, o.out);
    if (!o.csv.empty()) oracle::radio_map_to_csv(map, o.csv);
    json snap{{"command", "radiomap"},
              {"model", o.model},
              {"scenario", o.scenario},
              {"resolution_m", o.resolution},
              {"map_resolution_m", o.map_resolution},
              {"rx_height_m", o.rx_height},
              {"voxel_size_m", o.no_voxels ? 0.0 : o.voxel},
              {"tx_index", o.tx_index},
              {"out", o.out}};
    write_snapshot(snap, o.out);
    std::cout << "predicted radio map: " << map.nx << "x" << map.ny << " cells -> "
              << o.out << "\n";
}

void cmd_explain_saliency(const SaliencyOpts& o) {
    model::ModelParams m = model::load_model(o.model);
    feat::Dataset d = load_normalized_for(m, o.dataset);
    require(o.row < d.n_rows, ErrorKind::validation, "row index out of range");
    explain::SaliencyVector s = explain::saliency(m, d, o.row);
    std::string body;
    if (o.format == "csv") {
        std::ostringstream out;
        out.precision(17);
        out << "feature,group,saliency\n";
        for (std::size_t j = 0; j < s.values.size(); ++j) {
            out << d.schema.features[j].name << ','
                << feat::group_name(d.schema.features[j].group) << ',' << s.values[j]
                << '\n';
        }
        body = out.str();
    } else {
        json vals = json::array();
        for (std::size_t j = 0; j < s.values.size(); ++j) {
            vals.push_back({{"feature", d.schema.features[j].name},
                            {"group", feat::group_name(d.schema.features[j].group)},
                            {"saliency", s.values[j]}});
        }
        json j{{"row", s.row}, {"method", s.method}, {"values", vals}};
        body = j.dump(2) + "\n";
    }
    if (o.out.empty()) {
        std::cout << body;
    } else {
        write_text(o.out, body);
        json snap{{"command", "explain saliency"},
                  {"model", o.model},
                  {"dataset", o.dataset},
                  {"row", o.row},
                  {"format", o.format},
                  {"out", o.out}};
        write_snapshot(snap, o.out);
        std::cout << "saliency for row " << o.row << " -> " << o.out << "\n";
    }
}

void cmd_explain_curves(const CurvesOpts& o) {
    model::ModelParams m = model::load_model(o.model);
    feat::Dataset d = load_normalized_for(m, o.dataset);
    explain::PerturbationCurve del = explain::deletion_curve(m, d);
    explain::PerturbationCurve ins = explain::insertion_curve(m, d);
    if (o.format == "csv") {
        require(!o.out.empty(), ErrorKind::usage,
                "--out is required for csv curves (used as a file prefix)");
        write_text(o.out + ".deletion.csv", explain::curve_to_csv(del));
        write_text(o.out + ".insertion.csv", explain::curve_to_csv(ins));
        json snap{{"command", "explain curves"}, {"model", o.model},
                  {"dataset", o.dataset},        {"format", o.format},
                  {"out", o.out}};
        write_snapshot(snap, o.out);
        std::cout << "curves -> " << o.out << ".deletion.csv, " << o.out
                  << ".insertion.csv\n";
        return;
    }
    json j{{"deletion", json::parse(explain::curve_to_json(del))},
           {"insertion", json::parse(explain::curve_to_json(ins))}};
    std::string body = j.dump(2) + "\n";
    if (o.out.empty()) {
        std::cout << body;
    } else {
        write_text(o.out, body);
        json snap{{"command", "explain curves"}, {"model", o.model},
                  {"dataset", o.dataset},        {"format", o.format},
                  {"out", o.out}};
        write_snapshot(snap, o.out);
        std::cout << "curves (deletion AUC " << del.auc << ", insertion AUC " << ins.auc
                  << ") -> " << o.out << "\n";
    }
}

void cmd_explain_rank(const RankOpts& o) {
    model::ModelParams m = model::load_model(o.model);
    feat::Dataset d = load_normalized_for(m, o.dataset);
    std::vector<explain::RankedFeature> rank = explain::feature_ranking(m, d);
    std::string body = o.format == "csv" ? explain::ranking_to_csv(rank)
                                         : explain::ranking_to_json(rank) + "\n";
    if (o.out.empty()) {
        std::cout << body;
    } else {
        write_text(o.out, body);
        json snap{{"command", "explain rank"},
                  {"model", o.model},
                  {"dataset", o.dataset},
                  {"format", o.format},
                  {"out", o.out}};
        write_snapshot(snap, o.out);
        std::cout << "feature ranking (" << rank.size() << " features) -> " << o.out
                  << "\n";
    }
}

void cmd_experiment(const ExperimentOpts& o) {
    xp::ExperimentReport rep = xp::run_experiment(o.id);
    std::string base = o.out_dir + "/" + o.id;
    write_text(base + ".report.json", xp::report_to_json(rep) + "\n");
    write_text(base + ".report.csv", xp::report_to_csv(rep));
    {
        std::ostringstream h;
        h << std::hex << xp::report_hash(rep) << "\n";
        write_text(base + ".report.hash", h.str());
    }
    json snap{{"command", "experiment"},
              {"id", o.id},
              {"config", json::parse(rep.config_json)},
              {"out_dir", o.out_dir}};
    write_snapshot(snap, base);
    for (const auto& [name, pass] : rep.verdicts) {
        std::cout << "verdict " << name << ": " << (pass ? "PASS" : "FAIL") << "\n";
    }
    std::cout << "experiment " << o.id << (rep.all_pass() ? " PASS" : " FAIL") << " ("
              << rep.wall_ms / 1000.0 << " s) -> " << base << ".report.json\n";
}

void cmd_summarize(const SummarizeOpts& o) {
    json out = json::array();
    for (const std::string& f : o.files) {
        json j;
        try {
            j = json::parse(read_text(f));
        } catch (const json::exception& e) {
            fail(ErrorKind::io, "cannot parse report " + f + ": " + e.what());
        }
        int total = 0, passed = 0;
        json verdicts = json::object();
        if (j.contains("verdicts")) {
            for (const auto& v : j["verdicts"]) {
                ++total;
                bool p = v.value("pass", false);
                passed += p ? 1 : 0;
                verdicts[v.value("name", "?")] = p;
            }
        }
        out.push_back({{"file", f},
                       {"id", j.value("id", "?")},
                       {"verdicts_passed", passed},
                       {"verdicts_total", total},
                       {"all_pass", total > 0 && passed == total},
                       {"verdicts", verdicts},
                       {"wall_ms", j.value("wall_ms", 0.0)}});
    }
    if (o.format == "csv") {
        std::ostringstream s;
        s << "file,id,verdicts_passed,verdicts_total,all_pass,wall_ms\n";
        for (const auto& row : out) {
            s << row["file"].get<std::string>() << ',' << row["id"].get<std::string>()
              << ',' << row["verdicts_passed"] << ',' << row["verdicts_total"] << ','
              << (row["all_pass"].get<bool>() ? 1 : 0) << ',' << row["wall_ms"] << '\n';
        }
        std::cout << s.str();
    } else {
        std::cout << out.dump(2) << "\n";
    }
}

} // namespace

int dispatch(int argc, char** argv) {
    CLI::App app{"chanform: site-specific radio channel inference toolkit"};
    app.require_subcommand(1);
    int parallel = 0;
    app.add_option("--parallel", parallel, "worker thread cap (0 = all cores)")
        ->envname("CHANFORM_PARALLEL")
        ->check(CLI::Range(0, 4096));

    auto install = [&](CLI::App* cmd, std::function<void()> work) {
        cmd->callback([&parallel, work = std::move(work)] {
            if (parallel > 0) set_max_workers(parallel);
            work();
        });
    };

    // scenario gen
    auto* scenario = app.add_subcommand("scenario", "procedural scenario tools");
    scenario->require_subcommand(1);
    {
        auto o = std::make_shared<GenOpts>();
        auto* c = scenario->add_subcommand("gen", "generate a random scenario");
        c->add_option("--seed", o->seed, "generator seed")
            ->capture_default_str()
            ->envname("CHANFORM_SEED");
        c->add_option("--out", o->out, "output scenario JSON")->required();
        c->add_option("--extent", o->gen.extent_m, "square side length (m)")
            ->capture_default_str();
        c->add_option("--buildings", o->gen.building_count, "building count")
            ->capture_default_str();
        c->add_option("--roads", o->gen.road_count, "road count")->capture_default_str();
        c->add_option("--vegetation", o->gen.vegetation_count, "vegetation patch count")
            ->capture_default_str();
        c->add_option("--tx-count", o->gen.tx_count, "transmitter count")
            ->capture_default_str();
        c->add_option("--frequency", o->gen.frequency_hz, "carrier frequency (Hz)")
            ->capture_default_str();
        install(c, [o] { cmd_scenario_gen(*o); });
    }

    // raster
    {
        auto o = std::make_shared<RasterOpts>();
        auto* c = app.add_subcommand("raster", "rasterize a scenario to a 2.5D grid");
        c->add_option("--scenario", o->scenario, "scenario JSON")
            ->required();
        c->add_option("--resolution", o->resolution, "cell size (m)")->capture_default_str();
        c->add_option("--out", o->out, "output raster container")->required();
        c->add_option("--texture-base", o->texture_base,
                      "texture noise amplitude at the reference resolution (0 = off)")
            ->capture_default_str();
        c->add_option("--texture-ref", o->texture_ref, "texture reference resolution (m)")
            ->capture_default_str();
        c->add_option("--texture-exp", o->texture_exp, "texture amplitude exponent")
            ->capture_default_str();
        c->add_option("--texture-seed", o->texture_seed, "texture noise seed")
            ->capture_default_str();
        install(c, [o] { cmd_raster(*o); });
    }

    // voxelize
    {
        auto o = std::make_shared<VoxelOpts>();
        auto* c = app.add_subcommand("voxelize", "voxelize a scenario to a 3D grid");
        c->add_option("--scenario", o->scenario, "scenario JSON")
            ->required();
        c->add_option("--voxel-size", o->voxel, "voxel edge length (m)")
            ->capture_default_str();
        c->add_option("--out", o->out, "output voxel container")->required();
        install(c, [o] { cmd_voxelize(*o); });
    }

    // oracle link|map
    auto* orc = app.add_subcommand("oracle", "deterministic propagation oracle");
    orc->require_subcommand(1);
    {
        auto o = std::make_shared<OracleLinkOpts>();
        auto* c = orc->add_subcommand("link", "large-scale path loss for one link");
        c->add_option("--scenario", o->scenario, "scenario JSON")
            ->required();
        c->add_option("--resolution", o->resolution, "raster cell size (m)")
            ->capture_default_str();
        c->add_option("--tx", o->tx, "TX position x y z (m)")->required()->expected(3);
        c->add_option("--rx", o->rx, "RX position x y z (m)")->required()->expected(3);
        c->add_option("--frequency", o->frequency, "carrier frequency (Hz)")
            ->capture_default_str();
        c->add_option("--sigma", o->sigma, "shadowing sigma (dB)")->capture_default_str();
        c->add_option("--corr", o->corr, "shadowing correlation length (m)")
            ->capture_default_str();
        c->add_option("--veg-rate", o->veg, "vegetation attenuation (dB/m)")
            ->capture_default_str();
        c->add_option("--oracle-seed", o->seed, "shadowing seed")->capture_default_str();
        c->add_option("--format", o->format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}))
            ->envname("CHANFORM_FORMAT");
        c->add_option("--out", o->out, "write the result here instead of stdout");
        install(c, [o] { cmd_oracle_link(*o); });
    }
    {
        auto o = std::make_shared<OracleMapOpts>();
        auto* c = orc->add_subcommand("map", "oracle radio map around a TX");
        c->add_option("--scenario", o->scenario, "scenario JSON")
            ->required();
        c->add_option("--resolution", o->resolution, "raster cell size (m)")
            ->capture_default_str();
        c->add_option("--map-resolution", o->map_resolution,
                      "map cell size (m, 0 = raster resolution)")
            ->capture_default_str();
        c->add_option("--rx-height", o->rx_height, "RX height (m)")->capture_default_str();
        c->add_option("--tx-index", o->tx_index, "TX site index")->capture_default_str();
        c->add_option("--sigma", o->sigma, "shadowing sigma (dB)")->capture_default_str();
        c->add_option("--corr", o->corr, "shadowing correlation length (m)")
            ->capture_default_str();
        c->add_option("--veg-rate", o->veg, "vegetation attenuation (dB/m)")
            ->capture_default_str();
        c->add_option("--oracle-seed", o->seed, "shadowing seed")->capture_default_str();
        c->add_option("--out", o->out, "output radio-map container")->required();
        c->add_option("--csv", o->csv, "also export the map as CSV here");
        install(c, [o] { cmd_oracle_map(*o); });
    }

    // dataset build
    auto* ds = app.add_subcommand("dataset", "dataset construction");
    ds->require_subcommand(1);
    {
        auto o = std::make_shared<DatasetOpts>();
        auto* c = ds->add_subcommand("build", "sample links and extract features");
        c->add_option("--scenario", o->scenario_files, "scenario JSON (repeatable)");
        c->add_option("--generate", o->generate, "generate N scenarios instead")
            ->capture_default_str();
        c->add_option("--gen-seed", o->gen_seed, "seed for --generate")
            ->capture_default_str()
            ->envname("CHANFORM_SEED");
        c->add_option("--extent", o->extent, "generated scenario extent (m)")
            ->capture_default_str();
        c->add_option("--buildings", o->buildings, "generated building count")
            ->capture_default_str();
        c->add_option("--roads", o->roads, "generated road count")->capture_default_str();
        c->add_option("--vegetation", o->vegetation, "generated vegetation count")
            ->capture_default_str();
        c->add_option("--groups", o->groups,
                      "comma-separated feature groups, or 'all'")
            ->capture_default_str();
        c->add_flag("--normals", o->normals, "include wall-orientation features");
        c->add_option("--links", o->links, "links per scenario")->capture_default_str();
        c->add_option("--min-distance", o->min_distance, "min link distance (m)")
            ->capture_default_str();
        c->add_option("--max-distance", o->max_distance, "max link distance (m)")
            ->capture_default_str();
        c->add_option("--rx-height", o->rx_height, "RX height (m)")->capture_default_str();
        c->add_option("--sampler-seed", o->sampler_seed, "link sampler seed")
            ->capture_default_str();
        c->add_option("--label-resolution", o->label_resolution, "label raster (m)")
            ->capture_default_str();
        c->add_option("--feature-resolution", o->feature_resolution, "feature raster (m)")
            ->capture_default_str();
        c->add_option("--voxel-size", o->voxel, "voxel size (m)")->capture_default_str();
        c->add_flag("--no-voxels", o->no_voxels, "skip the voxel grid");
        c->add_option("--texture-base", o->texture_base, "texture noise amplitude (0 = off)")
            ->capture_default_str();
        c->add_option("--texture-ref", o->texture_ref, "texture reference resolution (m)")
            ->capture_default_str();
        c->add_option("--texture-exp", o->texture_exp, "texture amplitude exponent")
            ->capture_default_str();
        c->add_option("--texture-seed", o->texture_seed, "texture noise seed")
            ->capture_default_str();
        c->add_option("--sigma", o->sigma, "shadowing sigma (dB)")->capture_default_str();
        c->add_option("--corr", o->corr, "shadowing correlation length (m)")
            ->capture_default_str();
        c->add_option("--veg-rate", o->veg, "vegetation attenuation (dB/m)")
            ->capture_default_str();
        c->add_option("--oracle-seed", o->oracle_seed, "shadowing seed")
            ->capture_default_str();
        c->add_flag("--no-multipath", o->no_multipath, "skip ray-launch labels");
        c->add_flag("--ray-power", o->ray_power,
                    "use ray-launch total power as the path-loss label");
        c->add_flag("--normalize", o->do_normalize, "store z-scored features");
        c->add_option("--az", o->az, "azimuth ray count")->capture_default_str();
        c->add_option("--el", o->el, "elevation ray count")->capture_default_str();
        c->add_option("--reflections", o->reflections, "max reflections (<=3)")
            ->capture_default_str();
        c->add_option("--capture", o->capture, "capture radius (m)")->capture_default_str();
        c->add_option("--out", o->out, "output dataset container")->required();
        install(c, [o] { cmd_dataset_build(*o); });
    }

    // train
    {
        auto o = std::make_shared<TrainOpts>();
        auto* c = app.add_subcommand("train", "train a model on a dataset");
        c->add_option("--dataset", o->dataset, "dataset container")
            ->required();
        c->add_option("--out", o->out, "output model checkpoint")->required();
        c->add_option("--report", o->report, "training report JSON path");
        c->add_option("--epochs", o->epochs, "epoch count")->capture_default_str();
        c->add_option("--batch", o->batch, "batch size")->capture_default_str();
        c->add_option("--lr", o->lr, "learning rate")->capture_default_str();
        c->add_option("--val-fraction", o->val_fraction, "validation fraction")
            ->capture_default_str();
        c->add_option("--train-seed", o->train_seed, "shuffle/optimizer seed")
            ->capture_default_str();
        c->add_option("--model-seed", o->model_seed, "weight init seed")
            ->capture_default_str();
        c->add_option("--lambda-phys", o->lambda_phys, "physics loss weight")
            ->capture_default_str();
        c->add_option("--lambda-expl", o->lambda_expl, "explanation loss weight")
            ->capture_default_str();
        auto* es = c->add_option("--early-stop", o->early_stop,
                                 "stop once val RMSE (dB) dips below this");
        c->add_flag("--freeze", o->freeze, "freeze the extractor block");
        c->add_flag("--no-model-aided", o->no_model_aided,
                    "disable the analytic distance baseline");
        c->add_option("--extractor", o->extractor, "extractor widths, comma-separated")
            ->capture_default_str();
        c->add_option("--heads", o->heads, "head widths, comma-separated")
            ->capture_default_str();
        c->add_option("--init-frequency", o->init_frequency,
                      "carrier frequency seeding the baseline intercept (Hz)")
            ->capture_default_str();
        install(c, [o, es] { cmd_train(*o, es->count() > 0); });
    }

    // finetune
    {
        auto o = std::make_shared<FinetuneOpts>();
        auto* c = app.add_subcommand("finetune",
                                     "adapt a checkpoint with a frozen extractor");
        c->add_option("--model", o->model, "pretrained checkpoint")
            ->required();
        c->add_option("--dataset", o->dataset, "target dataset")
            ->required();
        c->add_option("--out", o->out, "output model checkpoint")->required();
        c->add_option("--report", o->report, "training report JSON path");
        c->add_option("--epochs", o->epochs, "epoch count")->capture_default_str();
        c->add_option("--batch", o->batch, "batch size")->capture_default_str();
        c->add_option("--lr", o->lr, "learning rate")->capture_default_str();
        c->add_option("--val-fraction", o->val_fraction, "validation fraction")
            ->capture_default_str();
        c->add_option("--seed", o->seed, "shuffle/optimizer seed")->capture_default_str();
        c->add_option("--lambda-phys", o->lambda_phys, "physics loss weight")
            ->capture_default_str();
        c->add_option("--lambda-expl", o->lambda_expl, "explanation loss weight")
            ->capture_default_str();
        install(c, [o] { cmd_finetune(*o); });
    }

    // predict
    {
        auto o = std::make_shared<PredictOpts>();
        auto* c = app.add_subcommand("predict", "per-link predictions for a dataset");
        c->add_option("--model", o->model, "model checkpoint")
            ->required();
        c->add_option("--dataset", o->dataset, "dataset container")
            ->required();
        c->add_option("--format", o->format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}))
            ->envname("CHANFORM_FORMAT");
        c->add_option("--out", o->out, "write here instead of stdout");
        install(c, [o] { cmd_predict(*o); });
    }

    // radiomap
    {
        auto o = std::make_shared<RadioMapOpts>();
        auto* c = app.add_subcommand("radiomap", "model-predicted radio map");
        c->add_option("--model", o->model, "model checkpoint")
            ->required();
        c->add_option("--scenario", o->scenario, "scenario JSON")
            ->required();
        c->add_option("--resolution", o->resolution, "feature raster cell size (m)")
            ->capture_default_str();
        c->add_option("--map-resolution", o->map_resolution,
                      "map cell size (m, 0 = raster resolution)")
            ->capture_default_str();
        c->add_option("--rx-height", o->rx_height, "RX height (m)")->capture_default_str();
        c->add_option("--voxel-size", o->voxel, "voxel size for material features (m)")
            ->capture_default_str();
        c->add_flag("--no-voxels", o->no_voxels, "skip the voxel grid");
        c->add_option("--tx-index", o->tx_index, "TX site index")->capture_default_str();
        c->add_option("--out", o->out, "output radio-map container")->required();
        c->add_option("--csv", o->csv, "also export the map as CSV here");
        install(c, [o] { cmd_radiomap(*o); });
    }

    // explain saliency|curves|rank
    auto* ex = app.add_subcommand("explain", "attribution and faithfulness tools");
    ex->require_subcommand(1);
    {
        auto o = std::make_shared<SaliencyOpts>();
        auto* c = ex->add_subcommand("saliency", "gradient x input for one row");
        c->add_option("--model", o->model, "model checkpoint")
            ->required();
        c->add_option("--dataset", o->dataset, "dataset container")
            ->required();
        c->add_option("--row", o->row, "dataset row")->capture_default_str();
        c->add_option("--format", o->format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}))
            ->envname("CHANFORM_FORMAT");
        c->add_option("--out", o->out, "write here instead of stdout");
        install(c, [o] { cmd_explain_saliency(*o); });
    }
    {
        auto o = std::make_shared<CurvesOpts>();
        auto* c = ex->add_subcommand("curves", "deletion and insertion curves");
        c->add_option("--model", o->model, "model checkpoint")
            ->required();
        c->add_option("--dataset", o->dataset, "dataset container")
            ->required();
        c->add_option("--format", o->format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}))
            ->envname("CHANFORM_FORMAT");
        c->add_option("--out", o->out, "output path (csv: used as a prefix)");
        install(c, [o] { cmd_explain_curves(*o); });
    }
    {
        auto o = std::make_shared<RankOpts>();
        auto* c = ex->add_subcommand("rank", "features by mean |saliency|");
        c->add_option("--model", o->model, "model checkpoint")
            ->required();
        c->add_option("--dataset", o->dataset, "dataset container")
            ->required();
        c->add_option("--format", o->format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}))
            ->envname("CHANFORM_FORMAT");
        c->add_option("--out", o->out, "write here instead of stdout");
        install(c, [o] { cmd_explain_rank(*o); });
    }

    // experiment
    {
        auto o = std::make_shared<ExperimentOpts>();
        auto* c = app.add_subcommand("experiment", "run a scripted experiment");
        c->add_option("id", o->id, "one of: granularity2d granularity3d semantic physics "
                                   "misalignment transfer explanation")
            ->required();
        c->add_option("--out-dir", o->out_dir, "report output directory")
            ->capture_default_str()
            ->envname("CHANFORM_OUT_DIR");
        install(c, [o] { cmd_experiment(*o); });
    }

    // report summarize
    auto* rep = app.add_subcommand("report", "report utilities");
    rep->require_subcommand(1);
    {
        auto o = std::make_shared<SummarizeOpts>();
        auto* c = rep->add_subcommand("summarize", "summarize experiment reports");
        c->add_option("files", o->files, "report JSON files")
            ->required();
        c->add_option("--format", o->format, "json|csv")
            ->check(CLI::IsMember({"json", "csv"}))
            ->envname("CHANFORM_FORMAT");
        install(c, [o] { cmd_summarize(*o); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const Error& e) {
        std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

int dispatch(const std::vector<std::string>& args) {
    std::vector<std::string> full;
    full.reserve(args.size() + 1);
    full.emplace_back("chanform");
    full.insert(full.end(), args.begin(), args.end());
    std::vector<char*> argv;
    argv.reserve(full.size());
    for (std::string& s : full) argv.push_back(s.data());
    return dispatch(static_cast<int>(argv.size()), argv.data());
}

} // namespace chanform::cli
