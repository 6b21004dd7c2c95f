#include <doctest.h>

#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "chanform/explain.hpp"
#include "chanform/scenario.hpp"
#include "chanform/train.hpp"

using namespace chanform;
using namespace chanform::explain;

namespace {

feat::Dataset raw_set(std::uint64_t seed, int links) {
    env::GeneratorConfig gc;
    gc.extent_m = 120.0;
    gc.building_count = 10;
    gc.building_max_side_m = 14.0;
    gc.road_count = 1;
    gc.vegetation_count = 1;
    env::Scenario s = env::generate_scenario(static_cast<std::int64_t>(seed), gc);

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
    return feat::build_dataset({s}, sampler, schema, cfg, env_cfg);
}

model::ArchConfig tiny_arch() {
    model::ArchConfig a;
    a.extractor_widths = {10};
    a.head_widths = {5};
    return a;
}

} // namespace

TEST_CASE("saliency is the input gradient times the input") {
    feat::Dataset d = feat::normalize(raw_set(700, 40));
    model::ModelParams m = model::init_model(d.schema, tiny_arch(), 17);
    m.stats = d.stats;

    SaliencyVector sv = saliency(m, d, 3);
    CHECK(sv.row == 3);
    CHECK(sv.method == "gradient_x_input");
    std::vector<double> g = model::pl_input_gradient(m, d.row(3));
    REQUIRE(sv.values.size() == d.dim());
    for (std::size_t j = 0; j < d.dim(); ++j) {
        CHECK(sv.values[j] == g[j] * d.at(3, j));
    }

    CHECK_THROWS_AS(saliency(m, d, d.n_rows), Error);
    feat::Dataset sub = feat::select_groups(d, {feat::FeatureGroup::geometric});
    try {
        saliency(m, sub, 0);
        FAIL("expected schema_mismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::schema_mismatch);
    }
}

TEST_CASE("perturbation curves pin their endpoints") {
    feat::Dataset d = feat::normalize(raw_set(701, 50));
    model::ModelParams m = model::init_model(d.schema, tiny_arch(), 23);
    m.stats = d.stats;
    model::Metrics base = model::evaluate(m, d);

    PerturbationCurve del = deletion_curve(m, d);
    PerturbationCurve ins = insertion_curve(m, d);
    REQUIRE(del.fractions.size() == 21);
    REQUIRE(del.rmse_db.size() == 21);
    CHECK(del.mode == "deletion");
    CHECK(ins.mode == "insertion");
    CHECK(del.fractions.front() == 0.0);
    CHECK(del.fractions.back() == 1.0);

    // No occlusion == plain evaluation; full occlusion == the other curve's
    // opposite endpoint (both are the all-baseline input).
    CHECK(del.rmse_db.front() == doctest::Approx(base.rmse_pl).epsilon(1e-12));
    CHECK(ins.rmse_db.back() == doctest::Approx(base.rmse_pl).epsilon(1e-12));
    CHECK(del.rmse_db.back() == doctest::Approx(ins.rmse_db.front()).epsilon(1e-12));

    // Trapezoid AUC consistency.
    double auc = 0.0;
    for (std::size_t k = 1; k < del.fractions.size(); ++k) {
        auc += 0.5 * (del.rmse_db[k] + del.rmse_db[k - 1]) *
               (del.fractions[k] - del.fractions[k - 1]);
    }
    CHECK(del.auc == doctest::Approx(auc).epsilon(1e-12));

    // A custom constant baseline is honored (all-zero occlusion for a
    // normalized set pushes values to the column means).
    BaselinePolicy zeros;
    zeros.values.assign(d.dim(), 0.0);
    PerturbationCurve dz = deletion_curve(m, d, zeros);
    CHECK(dz.rmse_db.front() == doctest::Approx(base.rmse_pl).epsilon(1e-12));

    BaselinePolicy bad;
    bad.values.assign(d.dim() + 1, 0.0);
    CHECK_THROWS_AS(deletion_curve(m, d, bad), Error);
}

TEST_CASE("comprehensiveness measures the occlusion jump") {
    feat::Dataset d = feat::normalize(raw_set(702, 30));
    model::ModelParams m = model::init_model(d.schema, tiny_arch(), 29);
    m.stats = d.stats;

    // Occluding everything equals the jump to the all-mean input.
    std::vector<double> mean(d.dim(), 0.0);
    for (std::size_t i = 0; i < d.n_rows; ++i)
        for (std::size_t j = 0; j < d.dim(); ++j) mean[j] += d.at(i, j);
    for (double& v : mean) v /= static_cast<double>(d.n_rows);
    double full = comprehensiveness(m, d, 2, d.dim());
    double jump = std::abs(model::forward(m, d.row(2)).path_loss_db -
                           model::forward(m, mean.data()).path_loss_db);
    CHECK(full == doctest::Approx(jump).epsilon(1e-12));

    CHECK(comprehensiveness(m, d, 2, 1) >= 0.0);
    CHECK_THROWS_AS(comprehensiveness(m, d, 2, 0), Error);
    CHECK_THROWS_AS(comprehensiveness(m, d, 2, d.dim() + 1), Error);
    CHECK_THROWS_AS(comprehensiveness(m, d, d.n_rows, 1), Error);
}

TEST_CASE("rankings sort by mean saliency with stable ties") {
    feat::Dataset raw = raw_set(703, 40);
    // Baseline-only model: every saliency except log-distance is exactly zero.
    model::ModelParams flat = model::init_model(raw.schema, tiny_arch(), 31);
    for (std::size_t k = 2; k < flat.n_params(); ++k) flat.theta[k] = 0.0;

    std::vector<RankedFeature> rank = feature_ranking(flat, raw);
    REQUIRE(rank.size() == raw.dim());
    CHECK(rank[0].name == "log10_distance");
    CHECK(rank[0].mean_abs_saliency > 0.0);
    for (std::size_t r = 1; r < rank.size(); ++r) {
        CHECK(rank[r].mean_abs_saliency == 0.0);
        if (r > 1) { // zeros keep schema order (stable sort)
            CHECK(rank[r].schema_index > rank[r - 1].schema_index);
        }
    }
    std::set<std::string> names;
    for (const auto& f : rank) names.insert(f.name);
    CHECK(names.size() == rank.size());

    // Saliency mass of the baseline-only model sits entirely on a geometric
    // feature, so none of it lands on the propagation-relevant set.
    std::vector<std::size_t> rows{0, 1, 2};
    CHECK(relevant_mass(flat, raw, rows) == 0.0);

    // A random network spreads mass: the fraction is strictly inside (0, 1).
    feat::Dataset z = feat::normalize(raw);
    model::ModelParams m = model::init_model(z.schema, tiny_arch(), 37);
    m.stats = z.stats;
    double mass = relevant_mass(m, z, rows);
    CHECK(mass > 0.0);
    CHECK(mass < 1.0);
    CHECK_THROWS_AS(relevant_mass(m, z, {}), Error);
}

TEST_CASE("curve and ranking serializers are well formed") {
    feat::Dataset d = feat::normalize(raw_set(704, 25));
    model::ModelParams m = model::init_model(d.schema, tiny_arch(), 41);
    m.stats = d.stats;

    PerturbationCurve c = deletion_curve(m, d);
    auto cj = nlohmann::json::parse(curve_to_json(c));
    CHECK(cj.at("mode").get<std::string>() == "deletion");
    CHECK(cj.at("fractions").size() == 21);
    CHECK(cj.at("auc").get<double>() == doctest::Approx(c.auc).epsilon(1e-12));

    std::string csv = curve_to_csv(c);
    std::size_t lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 22); // header + 21 points
    CHECK(csv.rfind("fraction,rmse_db\n", 0) == 0);

    std::vector<RankedFeature> rank = feature_ranking(m, d);
    auto rj = nlohmann::json::parse(ranking_to_json(rank));
    REQUIRE(rj.size() == d.dim());
    CHECK(rj[0].at("feature").get<std::string>() == rank[0].name);
    std::string rcsv = ranking_to_csv(rank);
    CHECK(rcsv.rfind("feature,mean_abs_saliency,schema_index\n", 0) == 0);
}
