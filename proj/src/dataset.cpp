#include "chanform/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "chanform/grid_io.hpp"
#include "chanform/rng.hpp"

namespace chanform::feat {

using json = nlohmann::json;

void Dataset::validate() const {
    require(x.size() == n_rows * dim(), ErrorKind::validation, "matrix size mismatch");
    require(labels.size() == n_rows && links.size() == n_rows &&
                scenario_ids.size() == n_rows,
            ErrorKind::validation, "row metadata size mismatch");
    for (double v : x) {
        require(std::isfinite(v), ErrorKind::validation, "non-finite feature value");
    }
    if (stats.normalized) {
        require(stats.mean.size() == dim() && stats.stddev.size() == dim(),
                ErrorKind::validation, "stats size mismatch");
    }
}

std::uint64_t Dataset::content_hash() const {
    std::uint64_t h = schema.fingerprint();
    h = hash_doubles(x, h);
    std::vector<double> flat;
    flat.reserve(n_rows * 12);
    for (std::size_t i = 0; i < n_rows; ++i) {
        const Labels& l = labels[i];
        const oracle::Link& k = links[i];
        for (double v : {l.path_loss_db, l.los, l.rms_delay_spread_s,
                         l.effective_path_count, k.tx.x, k.tx.y, k.tx.z, k.rx.x, k.rx.y,
                         k.rx.z, k.frequency_hz, static_cast<double>(scenario_ids[i])}) {
            flat.push_back(v);
        }
    }
    h = hash_doubles(flat, h);
    if (stats.normalized) {
        h = hash_doubles(stats.mean, h);
        h = hash_doubles(stats.stddev, h);
    }
    return h;
}

std::vector<ScenarioEnv> make_envs(const std::vector<env::Scenario>& scenarios,
                                   const EnvBuildConfig& cfg) {
    require(cfg.label_resolution_m > 0 && cfg.feature_resolution_m > 0,
            ErrorKind::validation, "resolutions must be positive");
    std::vector<ScenarioEnv> envs;
    envs.reserve(scenarios.size());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        ScenarioEnv e;
        e.scenario = scenarios[i];
        e.scenario_id = static_cast<int>(i);
        e.label_raster = env::rasterize(scenarios[i], cfg.label_resolution_m);
        if (cfg.feature_resolution_m == cfg.label_resolution_m) {
            e.feature_raster = e.label_raster;
        } else {
            e.feature_raster = env::resample(e.label_raster, cfg.feature_resolution_m);
        }
        if (cfg.texture) {
            std::uint64_t seed = hash_combine(cfg.texture_seed, scenarios[i].seed);
            e.feature_raster = env::add_texture_noise(
                e.feature_raster, seed, [&](double g) { return (*cfg.texture)(g); });
        }
        if (cfg.build_voxels) e.voxels = env::voxelize(scenarios[i], cfg.voxel_size_m);
        envs.push_back(std::move(e));
    }
    return envs;
}

namespace {

json sampler_json(const LinkSampler& s) {
    return {{"links_per_scenario", s.links_per_scenario},
            {"rx_height_m", s.rx_height_m},
            {"min_distance_m", s.min_distance_m},
            {"max_distance_m", s.max_distance_m},
            {"seed", s.seed},
            {"max_tries_per_link", s.max_tries_per_link}};
}

json oracle_json(const oracle::OracleConfig& c) {
    return {{"shadowing_sigma_db", c.shadowing_sigma_db},
            {"shadowing_corr_m", c.shadowing_corr_m},
            {"vegetation_db_per_m", c.vegetation_db_per_m},
            {"seed", c.seed},
            {"deygout_depth", c.deygout_depth}};
}

bool rx_position_ok(const ScenarioEnv& e, const Vec3& rx) {
    int ix, iy;
    const env::RasterEnv& r = e.label_raster;
    if (rx.x < r.origin.x || rx.x >= r.origin.x + r.width() || rx.y < r.origin.y ||
        rx.y >= r.origin.y + r.height_extent()) {
        return false;
    }
    r.cell_of(rx.xy(), ix, iy);
    if (r.building[r.idx(ix, iy)] >= 0.5) return false;
    if (e.voxels) {
        int vx, vy, vz;
        if (!e.voxels->voxel_of(rx, vx, vy, vz)) return false;
        if (e.voxels->occupancy[e.voxels->idx(vx, vy, vz)]) return false;
    }
    return true;
}

} // namespace

Dataset build_dataset(const std::vector<ScenarioEnv>& envs, const LinkSampler& sampler,
                      const FeatureSchema& schema, const DatasetBuildConfig& cfg) {
    require(!envs.empty(), ErrorKind::validation, "need at least one scenario");
    require(sampler.links_per_scenario >= 1, ErrorKind::validation,
            "links_per_scenario must be >= 1");
    require(sampler.min_distance_m > 0 && sampler.max_distance_m > sampler.min_distance_m,
            ErrorKind::validation, "bad distance range");
    require(sampler.rx_height_m > 0, ErrorKind::validation, "rx height must be positive");

    Dataset d;
    d.schema = schema;

    // Link positions are drawn sequentially (cheap, order-defining); the
    // heavy per-link feature/label work then parallelizes by row index.
    for (const ScenarioEnv& e : envs) {
        const env::Scenario& s = e.scenario;
        Rng rng(hash_combine(sampler.seed, static_cast<std::uint64_t>(e.scenario_id) + 1));
        for (int j = 0; j < sampler.links_per_scenario; ++j) {
            const env::TxSite& tx =
                s.tx_sites[static_cast<std::size_t>(j) % s.tx_sites.size()];
            bool placed = false;
            for (int attempt = 0; attempt < sampler.max_tries_per_link; ++attempt) {
                double ground = rng.uniform(sampler.min_distance_m, sampler.max_distance_m);
                double angle = rng.uniform(0.0, 2.0 * M_PI);
                Vec3 rx{tx.position.x + ground * std::cos(angle),
                        tx.position.y + ground * std::sin(angle), sampler.rx_height_m};
                if (!rx_position_ok(e, rx)) continue;
                oracle::Link link{tx.position, rx, tx.frequency_hz};
                if (link.distance_m() < sampler.min_distance_m ||
                    link.distance_m() > sampler.max_distance_m * 1.05) {
                    continue;
                }
                d.links.push_back(link);
                d.scenario_ids.push_back(e.scenario_id);
                placed = true;
                break;
            }
            require(placed, ErrorKind::placement_failure,
                    "could not place an RX after bounded tries (scenario " +
                        std::to_string(e.scenario_id) + ")");
        }
    }

    d.n_rows = d.links.size();
    d.x.assign(d.n_rows * d.dim(), 0.0);
    d.labels.assign(d.n_rows, Labels{});

    std::vector<const ScenarioEnv*> by_id;
    for (const ScenarioEnv& e : envs) {
        if (static_cast<std::size_t>(e.scenario_id) >= by_id.size()) {
            by_id.resize(e.scenario_id + 1, nullptr);
        }
        by_id[e.scenario_id] = &e;
    }

    parallel_for(d.n_rows, [&](std::size_t i) {
        const ScenarioEnv& e = *by_id[d.scenario_ids[i]];
        const oracle::Link& link = d.links[i];
        FeatureVector fv = extract_link_features(e.feature_raster,
                                                 e.voxels ? &*e.voxels : nullptr, link,
                                                 schema);
        std::copy(fv.values.begin(), fv.values.end(), d.row(i));

        oracle::ChannelSample large = oracle::path_loss(e.label_raster, link, cfg.oracle);
        Labels& lab = d.labels[i];
        lab.path_loss_db = large.path_loss_db;
        lab.los = large.los ? 1.0 : 0.0;
        if (cfg.multipath_labels) {
            require(e.voxels.has_value(), ErrorKind::missing_modality,
                    "multipath labels need voxel grids");
            oracle::ChannelSample small = oracle::multipath_sample(
                *e.voxels, link, cfg.ray, cfg.pdp_bin_s, cfg.effective_threshold_db);
            lab.rms_delay_spread_s = small.rms_delay_spread_s;
            lab.effective_path_count = std::max(1, small.effective_path_count);
            if (cfg.pl_from_ray) {
                // Total received power from the multipath solver becomes the
                // regression target. Ray gains are relative to the 1 m
                // free-space reference, so shift by that intercept to stay on
                // the absolute dB scale the other labels use. Links the ray
                // tracer found no path for keep the raster label so the
                // column stays finite.
                if (small.effective_path_count > 0) {
                    lab.path_loss_db =
                        small.path_loss_db + oracle::fspl_db(1.0, link.frequency_hz);
                    lab.los = small.los ? 1.0 : 0.0;
                }
            }
        } else {
            lab.rms_delay_spread_s = 0.0;
            lab.effective_path_count = 1.0;
        }
    });

    json prov;
    prov["sampler"] = sampler_json(sampler);
    prov["oracle"] = oracle_json(cfg.oracle);
    prov["multipath_labels"] = cfg.multipath_labels;
    prov["pl_from_ray"] = cfg.pl_from_ray;
    prov["scenario_seeds"] = json::array();
    prov["feature_resolution_m"] = json::array();
    prov["label_resolution_m"] = json::array();
    for (const ScenarioEnv& e : envs) {
        prov["scenario_seeds"].push_back(e.scenario.seed);
        prov["feature_resolution_m"].push_back(e.feature_raster.resolution_m);
        prov["label_resolution_m"].push_back(e.label_raster.resolution_m);
    }
    d.provenance_json = prov.dump();
    d.validate();
    return d;
}

Dataset build_dataset(const std::vector<env::Scenario>& scenarios, const LinkSampler& sampler,
                      const FeatureSchema& schema, const DatasetBuildConfig& cfg,
                      const EnvBuildConfig& env_cfg) {
    return build_dataset(make_envs(scenarios, env_cfg), sampler, schema, cfg);
}

Dataset normalize(const Dataset& d) {
    d.validate();
    require(!d.stats.normalized, ErrorKind::validation, "dataset already normalized");
    require(d.n_rows >= 2, ErrorKind::validation, "need >= 2 rows to normalize");
    std::size_t dim = d.dim();
    NormStats st;
    st.normalized = true;
    st.mean.assign(dim, 0.0);
    st.stddev.assign(dim, 0.0);
    st.constant_flag.assign(dim, 0);
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        for (std::size_t j = 0; j < dim; ++j) st.mean[j] += d.at(i, j);
    }
    for (std::size_t j = 0; j < dim; ++j) st.mean[j] /= static_cast<double>(d.n_rows);
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            double c = d.at(i, j) - st.mean[j];
            st.stddev[j] += c * c;
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        st.stddev[j] = std::sqrt(st.stddev[j] / static_cast<double>(d.n_rows));
        if (st.stddev[j] < 1e-12) {
            st.stddev[j] = 1.0;
            st.constant_flag[j] = 1;
        }
    }
    return apply_normalization(d, st);
}

Dataset apply_normalization(const Dataset& d, const NormStats& stats) {
    require(!d.stats.normalized, ErrorKind::validation, "dataset already normalized");
    require(stats.normalized && stats.mean.size() == d.dim() &&
                stats.stddev.size() == d.dim(),
            ErrorKind::schema_mismatch, "normalization stats do not match schema");
    Dataset out = d;
    out.stats = stats;
    for (std::size_t i = 0; i < out.n_rows; ++i) {
        for (std::size_t j = 0; j < out.dim(); ++j) {
            out.x[i * out.dim() + j] = stats.norm(j, d.at(i, j));
        }
    }
    return out;
}

Dataset select_groups(const Dataset& d, const std::vector<FeatureGroup>& groups) {
    require(!groups.empty(), ErrorKind::validation, "group selection must be non-empty");
    for (FeatureGroup g : groups) {
        require(d.schema.has_group(g), ErrorKind::validation,
                std::string("group '") + group_name(g) + "' not present in schema");
    }
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < d.schema.size(); ++j) {
        if (std::find(groups.begin(), groups.end(), d.schema.features[j].group) !=
            groups.end()) {
            keep.push_back(j);
        }
    }
    Dataset out;
    out.schema.config = d.schema.config;
    for (std::size_t j : keep) out.schema.features.push_back(d.schema.features[j]);
    out.n_rows = d.n_rows;
    out.labels = d.labels;
    out.links = d.links;
    out.scenario_ids = d.scenario_ids;
    out.provenance_json = d.provenance_json;
    out.x.reserve(d.n_rows * keep.size());
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        for (std::size_t j : keep) out.x.push_back(d.at(i, j));
    }
    if (d.stats.normalized) {
        out.stats.normalized = true;
        for (std::size_t j : keep) {
            out.stats.mean.push_back(d.stats.mean[j]);
            out.stats.stddev.push_back(d.stats.stddev[j]);
            out.stats.constant_flag.push_back(d.stats.constant_flag[j]);
        }
    }
    out.validate();
    return out;
}

Dataset filter_scenarios(const Dataset& d, const std::vector<std::int32_t>& keep) {
    std::set<std::int32_t> want(keep.begin(), keep.end());
    Dataset out;
    out.schema = d.schema;
    out.stats = d.stats;
    out.provenance_json = d.provenance_json;
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        if (!want.count(d.scenario_ids[i])) continue;
        out.labels.push_back(d.labels[i]);
        out.links.push_back(d.links[i]);
        out.scenario_ids.push_back(d.scenario_ids[i]);
        for (std::size_t j = 0; j < d.dim(); ++j) out.x.push_back(d.at(i, j));
    }
    out.n_rows = out.labels.size();
    require(out.n_rows > 0, ErrorKind::validation, "scenario filter kept no rows");
    return out;
}

Dataset misalign(const Dataset& d, const std::vector<ScenarioEnv>& envs,
                 FeatureGroup group, double shift_m, std::uint64_t seed) {
    d.validate();
    require(!d.stats.normalized, ErrorKind::validation,
            "misalign operates on raw (unnormalized) datasets");
    require(d.schema.has_group(group), ErrorKind::validation,
            "group not present in schema");
    require(shift_m >= 0, ErrorKind::validation, "shift must be >= 0");

    env::Channel shifted_channel;
    switch (group) {
        case FeatureGroup::semantic_building: shifted_channel = env::Channel::building; break;
        case FeatureGroup::semantic_road: shifted_channel = env::Channel::road; break;
        case FeatureGroup::semantic_vegetation:
            shifted_channel = env::Channel::vegetation;
            break;
        case FeatureGroup::texture: shifted_channel = env::Channel::texture; break;
        case FeatureGroup::physics: shifted_channel = env::Channel::height; break;
        default:
            fail(ErrorKind::validation,
                 "only raster-derived groups (semantic_*, texture, physics) can be "
                 "misaligned");
    }

    Rng rng(hash_combine(seed, 0xA11Aull));
    double angle = rng.uniform(0.0, 2.0 * M_PI);
    Vec2 shift{shift_m * std::cos(angle), shift_m * std::sin(angle)};

    FeatureSchema sub;
    sub.config = d.schema.config;
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < d.schema.size(); ++j) {
        if (d.schema.features[j].group == group) {
            sub.features.push_back(d.schema.features[j]);
            cols.push_back(j);
        }
    }

    std::vector<const ScenarioEnv*> by_id;
    std::vector<env::RasterEnv> shifted(envs.size());
    for (std::size_t k = 0; k < envs.size(); ++k) {
        const ScenarioEnv& e = envs[k];
        double margin = std::min(e.feature_raster.width(), e.feature_raster.height_extent()) / 8.0;
        require(shift_m <= margin, ErrorKind::validation,
                "shift exceeds the raster bounds margin");
        // Rigid translation of the one modality: each cell reads the channel
        // at its center displaced by -shift; off-grid lookups become 0.
        shifted[k] = e.feature_raster;
        const env::RasterEnv& src = e.feature_raster;
        std::vector<double>& ch = shifted[k].channel(shifted_channel);
        const std::vector<double>& orig = src.channel(shifted_channel);
        for (int iy = 0; iy < src.ny; ++iy) {
            for (int ix = 0; ix < src.nx; ++ix) {
                Vec2 p = src.cell_center(ix, iy);
                Vec2 q{p.x - shift.x, p.y - shift.y};
                double v = 0.0;
                if (q.x >= src.origin.x && q.x < src.origin.x + src.width() &&
                    q.y >= src.origin.y && q.y < src.origin.y + src.height_extent()) {
                    int qx, qy;
                    src.cell_of(q, qx, qy);
                    v = orig[src.idx(qx, qy)];
                }
                ch[src.idx(ix, iy)] = v;
            }
        }
        if (static_cast<std::size_t>(e.scenario_id) >= by_id.size()) {
            by_id.resize(e.scenario_id + 1, nullptr);
        }
        by_id[e.scenario_id] = &e;
    }

    std::vector<std::size_t> env_index(by_id.size(), 0);
    for (std::size_t k = 0; k < envs.size(); ++k) {
        env_index[envs[k].scenario_id] = k;
    }

    Dataset out = d;
    parallel_for(d.n_rows, [&](std::size_t i) {
        const ScenarioEnv& e = *by_id[d.scenario_ids[i]];
        const env::RasterEnv& raster = shifted[env_index[d.scenario_ids[i]]];
        FeatureVector fv = extract_link_features(raster, e.voxels ? &*e.voxels : nullptr,
                                                 d.links[i], sub);
        for (std::size_t c = 0; c < cols.size(); ++c) {
            out.x[i * out.dim() + cols[c]] = fv.values[c];
        }
    });
    return out;
}

namespace {

constexpr const char* kDatasetMagic = "CHFDSET1";

} // namespace

void save_dataset(const Dataset& d, const std::string& path) {
    d.validate();
    io::Container c;
    c.magic = kDatasetMagic;
    json h;
    h["format_version"] = 1;
    h["kind"] = "dataset";
    h["schema"] = json::parse(schema_to_json(d.schema));
    h["n_rows"] = d.n_rows;
    h["dim"] = d.dim();
    h["provenance"] = json::parse(d.provenance_json);
    h["stats"] = {{"normalized", d.stats.normalized},
                  {"mean", d.stats.mean},
                  {"stddev", d.stats.stddev},
                  {"constant_flag", d.stats.constant_flag}};

    std::vector<double> labels_flat, links_flat, ids_flat;
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        const Labels& l = d.labels[i];
        labels_flat.insert(labels_flat.end(),
                           {l.path_loss_db, l.los, l.rms_delay_spread_s,
                            l.effective_path_count});
        const oracle::Link& k = d.links[i];
        links_flat.insert(links_flat.end(), {k.tx.x, k.tx.y, k.tx.z, k.rx.x, k.rx.y,
                                             k.rx.z, k.frequency_hz});
        ids_flat.push_back(d.scenario_ids[i]);
    }
    h["blocks"] = json::array();
    auto add_block = [&](const char* name, std::vector<double> data) {
        h["blocks"].push_back({{"name", name}, {"count", data.size()}});
        c.blocks.push_back(std::move(data));
    };
    add_block("x", d.x);
    add_block("labels", std::move(labels_flat));
    add_block("links", std::move(links_flat));
    add_block("scenario_ids", std::move(ids_flat));
    c.header_json = h.dump();
    io::write_container(path, c);
}

Dataset load_dataset(const std::string& path) {
    io::Container c = io::read_container(path, kDatasetMagic);
    json h;
    try {
        h = json::parse(c.header_json);
        require(h.at("format_version").get<int>() == 1, ErrorKind::io,
                "unsupported dataset format version");
        Dataset d;
        d.schema = schema_from_json(h.at("schema").dump());
        d.n_rows = h.at("n_rows").get<std::size_t>();
        const auto& st = h.at("stats");
        d.stats.normalized = st.at("normalized").get<bool>();
        d.stats.mean = st.at("mean").get<std::vector<double>>();
        d.stats.stddev = st.at("stddev").get<std::vector<double>>();
        d.stats.constant_flag = st.at("constant_flag").get<std::vector<std::uint8_t>>();
        d.provenance_json = h.at("provenance").dump();
        require(c.blocks.size() == 4, ErrorKind::io, "dataset container needs 4 blocks");
        d.x = c.blocks[0];
        const std::vector<double>& lf = c.blocks[1];
        const std::vector<double>& kf = c.blocks[2];
        const std::vector<double>& ids = c.blocks[3];
        require(lf.size() == d.n_rows * 4 && kf.size() == d.n_rows * 7 &&
                    ids.size() == d.n_rows,
                ErrorKind::io, "dataset block sizes inconsistent");
        for (std::size_t i = 0; i < d.n_rows; ++i) {
            d.labels.push_back({lf[i * 4], lf[i * 4 + 1], lf[i * 4 + 2], lf[i * 4 + 3]});
            d.links.push_back(oracle::Link{{kf[i * 7], kf[i * 7 + 1], kf[i * 7 + 2]},
                                   {kf[i * 7 + 3], kf[i * 7 + 4], kf[i * 7 + 5]},
                                   kf[i * 7 + 6]});
            d.scenario_ids.push_back(static_cast<std::int32_t>(ids[i]));
        }
        d.validate();
        return d;
    } catch (const json::exception& e) {
        fail(ErrorKind::io, std::string("corrupt dataset header: ") + e.what());
    }
}

void dataset_to_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot open '" + path + "' for writing");
    out << "scenario_id";
    for (const auto& f : d.schema.features) out << ',' << f.name;
    out << ",path_loss_db,los,rms_delay_spread_s,effective_path_count\n";
    out.precision(17);
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        out << d.scenario_ids[i];
        for (std::size_t j = 0; j < d.dim(); ++j) out << ',' << d.at(i, j);
        const Labels& l = d.labels[i];
        out << ',' << l.path_loss_db << ',' << l.los << ',' << l.rms_delay_spread_s << ','
            << l.effective_path_count << '\n';
    }
    require(out.good(), ErrorKind::io, "write failed for '" + path + "'");
}

} // namespace chanform::feat
