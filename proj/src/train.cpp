#include "chanform/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "chanform/rng.hpp"

namespace chanform::model {

namespace {

HeadMetrics subset_metrics(const ModelParams& m, const feat::Dataset& d,
                           const std::vector<std::size_t>& rows) {
    HeadMetrics h;
    if (rows.empty()) return h;
    double se_pl = 0, se_ds = 0, se_cnt = 0;
    std::size_t los_hits = 0;
    for (std::size_t r : rows) {
        Predictions p = forward(m, d.row(r));
        const feat::Labels& lab = d.labels[r];
        double e = p.path_loss_db - lab.path_loss_db;
        se_pl += e * e;
        double eds = p.log_ds - std::log(lab.rms_delay_spread_s + 1e-9);
        se_ds += eds * eds;
        double ec = p.log_count - std::log(std::max(1.0, lab.effective_path_count));
        se_cnt += ec * ec;
        if ((p.los_prob >= 0.5) == (lab.los >= 0.5)) los_hits++;
    }
    double n = static_cast<double>(rows.size());
    h.rmse_pl = std::sqrt(se_pl / n);
    h.rmse_log_ds = std::sqrt(se_ds / n);
    h.rmse_log_count = std::sqrt(se_cnt / n);
    h.los_accuracy = static_cast<double>(los_hits) / n;
    return h;
}

} // namespace

std::uint64_t extractor_hash(const ModelParams& m) {
    return fnv1a(m.theta.data() + m.extractor_begin,
                 (m.extractor_end - m.extractor_begin) * sizeof(double));
}

std::pair<ModelParams, TrainReport> train(ModelParams model, const feat::Dataset& d,
                                          const TrainConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    d.validate();
    require(d.stats.normalized, ErrorKind::validation, "train needs a normalized dataset");
    require(d.schema.fingerprint() == model.schema_fingerprint, ErrorKind::schema_mismatch,
            "dataset schema does not match model");
    require(cfg.learning_rate > 0, ErrorKind::validation, "learning rate must be > 0");
    require(cfg.epochs >= 0 && cfg.batch_size >= 1, ErrorKind::validation,
            "bad epoch/batch config");
    require(cfg.loss.lambda_phys >= 0 && cfg.loss.lambda_expl >= 0, ErrorKind::validation,
            "loss weights must be >= 0");
    require(d.n_rows >= 1, ErrorKind::validation, "empty dataset");

    model.stats = d.stats;

    TrainReport report;
    report.seed = cfg.seed;

    // Deterministic validation split, then per-epoch shuffles, all from one
    // seeded stream.
    Rng rng(hash_combine(cfg.seed, 0x7a1db00ull));
    std::vector<std::size_t> order(d.n_rows);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::size_t j = rng.uniform_int(0, static_cast<std::uint64_t>(i - 1));
        std::swap(order[i - 1], order[j]);
    }
    std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction * d.n_rows);
    if (d.n_rows >= 4 && cfg.val_fraction > 0 && n_val == 0) n_val = 1;
    if (n_val >= d.n_rows) n_val = d.n_rows - 1;
    std::vector<std::size_t> val_rows(order.begin(), order.begin() + n_val);
    std::vector<std::size_t> train_rows(order.begin() + n_val, order.end());

    std::vector<double> grad, m1(model.n_params(), 0.0), m2(model.n_params(), 0.0);
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long step = 0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        for (std::size_t i = train_rows.size(); i > 1; --i) {
            std::size_t j = rng.uniform_int(0, static_cast<std::uint64_t>(i - 1));
            std::swap(train_rows[i - 1], train_rows[j]);
        }

        LossBreakdown epoch_mean;
        int batches = 0;
        for (std::size_t start = 0; start < train_rows.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t stop =
                std::min(train_rows.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::size_t> batch(train_rows.begin() + start,
                                           train_rows.begin() + stop);
            LossBreakdown lb = batch_loss(model, d, batch, cfg.loss, &grad);
            if (!std::isfinite(lb.total)) {
                fail(ErrorKind::divergence,
                     "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batches) + " (task=" + std::to_string(lb.task) +
                         ")");
            }
            if (cfg.freeze_extractor) {
                std::fill(grad.begin() + model.extractor_begin,
                          grad.begin() + model.extractor_end, 0.0);
            }
            step++;
            double bc1 = 1.0 - std::pow(b1, static_cast<double>(step));
            double bc2 = 1.0 - std::pow(b2, static_cast<double>(step));
            for (std::size_t k = 0; k < model.n_params(); ++k) {
                m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
                m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
                model.theta[k] -=
                    cfg.learning_rate * (m1[k] / bc1) / (std::sqrt(m2[k] / bc2) + eps);
            }
            epoch_mean.task += lb.task;
            epoch_mean.physics += lb.physics;
            epoch_mean.explanation += lb.explanation;
            epoch_mean.total += lb.total;
            batches++;
        }
        if (batches > 0) {
            epoch_mean.task /= batches;
            epoch_mean.physics /= batches;
            epoch_mean.explanation /= batches;
            epoch_mean.total /= batches;
        }

        EpochStats es;
        es.batch_mean = epoch_mean;
        es.train = subset_metrics(model, d, train_rows);
        es.val = val_rows.empty() ? es.train : subset_metrics(model, d, val_rows);
        report.epochs.push_back(es);
        report.epochs_run = epoch;

        double gate = val_rows.empty() ? es.train.rmse_pl : es.val.rmse_pl;
        if (cfg.early_stop_rmse && gate <= *cfg.early_stop_rmse) {
            report.threshold_epoch = epoch;
            break;
        }
    }

    report.final_param_hash = model.param_hash();
    report.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    return {std::move(model), report};
}

std::pair<ModelParams, TrainReport> finetune(const ModelParams& pretrained,
                                             const feat::Dataset& target, TrainConfig cfg) {
    require(target.n_rows > 0, ErrorKind::validation, "fine-tuning set is empty");
    require(target.schema.fingerprint() == pretrained.schema_fingerprint,
            ErrorKind::schema_mismatch, "target schema does not match pretrained model");
    cfg.freeze_extractor = true;
    return train(pretrained, target, cfg);
}

Metrics evaluate(const ModelParams& m, const feat::Dataset& d) {
    d.validate();
    require(d.n_rows > 0, ErrorKind::validation, "cannot evaluate an empty dataset");
    require(d.schema.fingerprint() == m.schema_fingerprint, ErrorKind::schema_mismatch,
            "dataset schema does not match model");

    std::vector<Predictions> preds(d.n_rows);
    parallel_for(d.n_rows, [&](std::size_t i) { preds[i] = forward(m, d.row(i)); });

    Metrics out;
    double se = 0, se_los = 0, se_nlos = 0, ae = 0, se_ds = 0, se_cnt = 0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        const feat::Labels& lab = d.labels[i];
        double e = preds[i].path_loss_db - lab.path_loss_db;
        se += e * e;
        ae += std::abs(e);
        if (lab.los >= 0.5) {
            se_los += e * e;
            out.n_los++;
        } else {
            se_nlos += e * e;
            out.n_nlos++;
        }
        if ((preds[i].los_prob >= 0.5) == (lab.los >= 0.5)) hits++;
        double eds = preds[i].log_ds - std::log(lab.rms_delay_spread_s + 1e-9);
        se_ds += eds * eds;
        double ec = preds[i].path_count - lab.effective_path_count;
        se_cnt += ec * ec;
    }
    out.n = d.n_rows;
    double n = static_cast<double>(d.n_rows);
    out.rmse_pl = std::sqrt(se / n);
    out.rmse_pl_los = out.n_los ? std::sqrt(se_los / out.n_los) : 0.0;
    out.rmse_pl_nlos = out.n_nlos ? std::sqrt(se_nlos / out.n_nlos) : 0.0;
    out.mae_pl = ae / n;
    out.los_accuracy = static_cast<double>(hits) / n;
    out.rmse_log_ds = std::sqrt(se_ds / n);
    out.rmse_count = std::sqrt(se_cnt / n);
    return out;
}

oracle::RadioMapGrid predict_radio_map(const ModelParams& m, const env::RasterEnv& raster,
                                       const env::VoxelEnv* voxels, const env::TxSite& tx,
                                       const oracle::RadioMapConfig& map_cfg) {
    require(m.stats.normalized, ErrorKind::validation,
            "radio-map prediction needs a trained (stats-bearing) model");
    if (m.schema.has_group(feat::FeatureGroup::material)) {
        require(voxels != nullptr, ErrorKind::missing_modality,
                "model uses material features; voxels required");
    }
    double res = map_cfg.resolution_m > 0 ? map_cfg.resolution_m : raster.resolution_m;
    require(res > 0, ErrorKind::validation, "map resolution must be positive");

    oracle::RadioMapGrid map;
    map.resolution_m = res;
    map.nx = std::max(1, static_cast<int>(std::ceil(raster.width() / res - 1e-9)));
    map.ny = std::max(1, static_cast<int>(std::ceil(raster.height_extent() / res - 1e-9)));
    map.origin = raster.origin;
    map.tx_position = tx.position;
    map.frequency_hz = tx.frequency_hz;
    map.rx_height_m = map_cfg.rx_height_m;
    std::size_t n = static_cast<std::size_t>(map.nx) * map.ny;
    map.path_loss_db.assign(n, 0.0);
    map.los.assign(n, 0);
    map.masked.assign(n, 0);

    parallel_for(static_cast<std::size_t>(map.ny), [&](std::size_t iy) {
        for (int ix = 0; ix < map.nx; ++ix) {
            std::size_t i = map.idx(ix, static_cast<int>(iy));
            Vec2 c{map.origin.x + (ix + 0.5) * res, map.origin.y + (iy + 0.5) * res};
            int rx_cell_x, rx_cell_y;
            raster.cell_of(c, rx_cell_x, rx_cell_y);
            if (raster.building[raster.idx(rx_cell_x, rx_cell_y)] >= 0.5) {
                map.masked[i] = 1;
                continue;
            }
            Vec3 rx{c.x, c.y, map_cfg.rx_height_m};
            oracle::Link link{tx.position, rx, tx.frequency_hz};
            if (link.distance_m() < 1e-9) {
                map.masked[i] = 1;
                continue;
            }
            feat::FeatureVector fv =
                feat::extract_link_features(raster, voxels, link, m.schema);
            std::vector<double> xn(fv.values.size());
            for (std::size_t j = 0; j < xn.size(); ++j) {
                xn[j] = m.stats.norm(j, fv.values[j]);
            }
            Predictions p = forward(m, xn.data());
            map.path_loss_db[i] = p.path_loss_db;
            map.los[i] = p.los_prob >= 0.5 ? 1 : 0;
        }
    });
    return map;
}

} // namespace chanform::model
