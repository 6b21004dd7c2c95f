#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "chanform/oracle.hpp"
#include "chanform/scenario.hpp"
#include "chanform/train.hpp"

using namespace chanform;
using namespace chanform::model;

namespace {

env::Scenario make_town(std::uint64_t seed) {
    env::GeneratorConfig gc;
    gc.extent_m = 120.0;
    gc.building_count = 10;
    gc.building_max_side_m = 14.0;
    gc.road_count = 1;
    gc.vegetation_count = 1;
    return env::generate_scenario(static_cast<std::int64_t>(seed), gc);
}

feat::Dataset raw_town_dataset(std::uint64_t seed, int links) {
    feat::LinkSampler sampler;
    sampler.links_per_scenario = links;
    sampler.min_distance_m = 15.0;
    sampler.max_distance_m = 100.0;
    sampler.seed = seed + 1;
    feat::DatasetBuildConfig cfg;
    cfg.multipath_labels = false;
    feat::EnvBuildConfig env_cfg;
    env_cfg.label_resolution_m = 2.0;
    env_cfg.feature_resolution_m = 2.0;
    env_cfg.build_voxels = false;
    feat::FeatureSchema schema = feat::schema_for_groups(
        {}, {feat::FeatureGroup::geometric, feat::FeatureGroup::semantic_building,
             feat::FeatureGroup::physics});
    return feat::build_dataset({make_town(seed)}, sampler, schema, cfg, env_cfg);
}

ArchConfig small_arch() {
    ArchConfig a;
    a.extractor_widths = {12};
    a.head_widths = {6};
    return a;
}

TrainConfig quick_train(int epochs, std::uint64_t seed) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 32;
    t.seed = seed;
    t.loss.lambda_expl = 0.0; // keep the unit runs cheap
    return t;
}

} // namespace

TEST_CASE("training reduces error deterministically") {
    feat::Dataset d = feat::normalize(raw_town_dataset(600, 160));
    ModelParams init = init_model(d.schema, small_arch(), 9);
    init.stats = d.stats;
    Metrics before = evaluate(init, d);

    auto [trained, report] = train(init, d, quick_train(25, 5));
    CHECK(report.epochs_run == 25);
    CHECK(static_cast<int>(report.epochs.size()) == 25);
    CHECK(report.threshold_epoch == -1);
    CHECK(report.seed == 5);
    CHECK(report.wall_ms > 0.0);
    CHECK(report.final_param_hash == trained.param_hash());
    CHECK(trained.stats.normalized);

    Metrics after = evaluate(trained, d);
    CHECK(after.rmse_pl < before.rmse_pl);
    CHECK(after.rmse_pl < report.epochs.front().train.rmse_pl);
    CHECK(after.n == d.n_rows);
    CHECK(after.n_los + after.n_nlos == after.n);
    // Same seed reproduces the same parameters; another seed does not.
    auto [t2, r2] = train(init, d, quick_train(25, 5));
    CHECK(r2.final_param_hash == report.final_param_hash);
    CHECK(t2.theta == trained.theta);
    auto [t3, r3] = train(init, d, quick_train(25, 6));
    CHECK(r3.final_param_hash != report.final_param_hash);

    // Validation metrics were tracked every epoch.
    for (const auto& es : report.epochs) {
        CHECK(std::isfinite(es.val.rmse_pl));
        CHECK(std::isfinite(es.batch_mean.total));
    }
}

TEST_CASE("training requires a normalized matching dataset") {
    feat::Dataset raw = raw_town_dataset(601, 30);
    ModelParams m = init_model(raw.schema, small_arch(), 9);
    CHECK_THROWS_AS(train(m, raw, quick_train(2, 1)), Error);

    feat::Dataset d = feat::normalize(raw);
    feat::Dataset sub = feat::select_groups(d, {feat::FeatureGroup::geometric});
    try {
        train(m, sub, quick_train(2, 1));
        FAIL("expected schema_mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::schema_mismatch);
    }

    TrainConfig bad = quick_train(2, 1);
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(train(m, d, bad), Error);
}

TEST_CASE("early stopping reports the trigger epoch") {
    feat::Dataset d = feat::normalize(raw_town_dataset(602, 60));
    ModelParams m = init_model(d.schema, small_arch(), 2);
    TrainConfig cfg = quick_train(30, 3);
    cfg.early_stop_rmse = 1e9; // met immediately
    auto [trained, report] = train(m, d, cfg);
    CHECK(report.threshold_epoch == 1);
    CHECK(report.epochs_run == 1);

    cfg.early_stop_rmse = -1.0; // never met
    auto [t2, r2] = train(m, d, cfg);
    CHECK(r2.threshold_epoch == -1);
    CHECK(r2.epochs_run == 30);
}

TEST_CASE("frozen extractors do not move") {
    feat::Dataset d = feat::normalize(raw_town_dataset(603, 80));
    ModelParams init = init_model(d.schema, small_arch(), 4);

    TrainConfig cfg = quick_train(10, 7);
    cfg.freeze_extractor = true;
    auto [frozen, fr] = train(init, d, cfg);
    CHECK(extractor_hash(frozen) == extractor_hash(init));
    for (std::size_t k = init.extractor_begin; k < init.extractor_end; ++k) {
        CHECK(frozen.theta[k] == init.theta[k]);
    }
    // Heads and baseline still learned something.
    CHECK(frozen.param_hash() != init.param_hash());

    cfg.freeze_extractor = false;
    auto [loose, lr] = train(init, d, cfg);
    CHECK(extractor_hash(loose) != extractor_hash(init));
}

TEST_CASE("fine-tuning keeps the extractor bit-identical") {
    feat::Dataset a = feat::normalize(raw_town_dataset(604, 120));
    feat::Dataset b = feat::normalize(raw_town_dataset(605, 60));
    ModelParams init = init_model(a.schema, small_arch(), 12);
    auto [pre, pre_rep] = train(init, a, quick_train(15, 8));

    auto [tuned, rep] = finetune(pre, b, quick_train(10, 9));
    CHECK(extractor_hash(tuned) == extractor_hash(pre));
    CHECK(tuned.param_hash() != pre.param_hash());
    // The target set's normalization is the one bound to the tuned model.
    CHECK(tuned.stats.mean == b.stats.mean);

    feat::Dataset sub = feat::select_groups(b, {feat::FeatureGroup::geometric});
    try {
        finetune(pre, sub, quick_train(2, 1));
        FAIL("expected schema_mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::schema_mismatch);
    }
}

TEST_CASE("non-finite losses raise divergence") {
    feat::Dataset d = feat::normalize(raw_town_dataset(606, 40));
    d.labels[0].path_loss_db = 1e200; // finite label, infinite squared error
    ModelParams m = init_model(d.schema, small_arch(), 3);
    try {
        train(m, d, quick_train(3, 2));
        FAIL("expected divergence");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::divergence);
    }
}

TEST_CASE("predicted radio maps share the oracle grid layout") {
    env::Scenario s = make_town(607);
    env::RasterEnv raster = env::rasterize(s, 2.0);

    feat::Dataset d = feat::normalize(raw_town_dataset(607, 120));
    ModelParams init = init_model(d.schema, small_arch(), 5);
    auto [m, rep] = train(init, d, quick_train(8, 4));

    oracle::RadioMapConfig mc;
    mc.resolution_m = 8.0;
    mc.rx_height_m = 1.5;
    oracle::OracleConfig oc;
    oracle::RadioMapGrid truth = oracle::radio_map(raster, s.tx_sites[0], mc, oc);
    oracle::RadioMapGrid pred = model::predict_radio_map(m, raster, nullptr,
                                                         s.tx_sites[0], mc);

    CHECK(pred.nx == truth.nx);
    CHECK(pred.ny == truth.ny);
    CHECK(pred.resolution_m == truth.resolution_m);
    CHECK(pred.masked == truth.masked);
    std::size_t live = 0;
    for (std::size_t i = 0; i < pred.path_loss_db.size(); ++i) {
        if (pred.masked[i]) continue;
        CHECK(std::isfinite(pred.path_loss_db[i]));
        CHECK(pred.path_loss_db[i] > 0.0);
        ++live;
    }
    CHECK(live > 0);

    // Untrained models (no bound stats) are rejected.
    ModelParams fresh = init_model(d.schema, small_arch(), 5);
    CHECK_THROWS_AS(model::predict_radio_map(fresh, raster, nullptr, s.tx_sites[0], mc),
                    Error);
}
