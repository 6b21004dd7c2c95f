#include "chanform/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace chanform::explain {

using json = nlohmann::json;

std::vector<double> saliency_values(const model::ModelParams& m, const double* x) {
    std::vector<double> g = model::pl_input_gradient(m, x);
    for (std::size_t j = 0; j < g.size(); ++j) {
        g[j] *= x[j];
        require(std::isfinite(g[j]), ErrorKind::validation, "non-finite saliency");
    }
    return g;
}

SaliencyVector saliency(const model::ModelParams& m, const feat::Dataset& d,
                        std::size_t row) {
    require(row < d.n_rows, ErrorKind::validation, "row out of range");
    require(d.schema.fingerprint() == m.schema_fingerprint, ErrorKind::schema_mismatch,
            "dataset schema does not match model");
    SaliencyVector sv;
    sv.row = row;
    sv.values = saliency_values(m, d.row(row));
    return sv;
}

namespace {

std::vector<double> baseline_values(const feat::Dataset& d, const BaselinePolicy& policy) {
    if (!policy.values.empty()) {
        require(policy.values.size() == d.dim(), ErrorKind::validation,
                "baseline policy size mismatch");
        return policy.values;
    }
    std::vector<double> mean(d.dim(), 0.0);
    for (std::size_t i = 0; i < d.n_rows; ++i) {
        for (std::size_t j = 0; j < d.dim(); ++j) mean[j] += d.at(i, j);
    }
    for (double& v : mean) v /= static_cast<double>(d.n_rows);
    return mean;
}

// Feature order per sample: |saliency| descending, schema order on ties.
std::vector<std::size_t> occlusion_order(const std::vector<double>& sal) {
    std::vector<std::size_t> order(sal.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(sal[a]) > std::abs(sal[b]);
    });
    return order;
}

PerturbationCurve perturbation_curve(const model::ModelParams& m, const feat::Dataset& d,
                                     const BaselinePolicy& policy, bool deletion) {
    require(d.n_rows > 0, ErrorKind::validation, "empty dataset");
    require(d.schema.fingerprint() == m.schema_fingerprint, ErrorKind::schema_mismatch,
            "dataset schema does not match model");
    std::vector<double> base = baseline_values(d, policy);
    std::size_t dim = d.dim();

    std::vector<std::vector<std::size_t>> orders(d.n_rows);
    parallel_for(d.n_rows, [&](std::size_t i) {
        orders[i] = occlusion_order(saliency_values(m, d.row(i)));
    });

    PerturbationCurve curve;
    curve.mode = deletion ? "deletion" : "insertion";
    const int kPoints = 21;
    std::vector<double> se(kPoints, 0.0);
    std::vector<std::vector<double>> se_slices(kPoints,
                                               std::vector<double>(d.n_rows, 0.0));
    parallel_for(d.n_rows, [&](std::size_t i) {
        std::vector<double> x(dim);
        for (int k = 0; k < kPoints; ++k) {
            double p = static_cast<double>(k) / (kPoints - 1);
            std::size_t n_top = static_cast<std::size_t>(
                std::lround(p * static_cast<double>(dim)));
            // deletion: top-n_top replaced by baseline; insertion: only the
            // top-n_top keep their true values.
            for (std::size_t j = 0; j < dim; ++j) {
                x[j] = deletion ? d.at(i, j) : base[j];
            }
            for (std::size_t r = 0; r < n_top; ++r) {
                std::size_t j = orders[i][r];
                x[j] = deletion ? base[j] : d.at(i, j);
            }
            double e = model::forward(m, x.data()).path_loss_db - d.labels[i].path_loss_db;
            se_slices[k][i] = e * e;
        }
    });
    for (int k = 0; k < kPoints; ++k) {
        se[k] = std::accumulate(se_slices[k].begin(), se_slices[k].end(), 0.0);
        curve.fractions.push_back(static_cast<double>(k) / (kPoints - 1));
        curve.rmse_db.push_back(std::sqrt(se[k] / static_cast<double>(d.n_rows)));
    }
    for (int k = 1; k < kPoints; ++k) {
        curve.auc += 0.5 * (curve.rmse_db[k] + curve.rmse_db[k - 1]) *
                     (curve.fractions[k] - curve.fractions[k - 1]);
    }
    return curve;
}

} // namespace

PerturbationCurve deletion_curve(const model::ModelParams& m, const feat::Dataset& d,
                                 const BaselinePolicy& policy) {
    return perturbation_curve(m, d, policy, true);
}

PerturbationCurve insertion_curve(const model::ModelParams& m, const feat::Dataset& d,
                                  const BaselinePolicy& policy) {
    return perturbation_curve(m, d, policy, false);
}

double comprehensiveness(const model::ModelParams& m, const feat::Dataset& d,
                         std::size_t row, std::size_t k, const BaselinePolicy& policy) {
    require(row < d.n_rows, ErrorKind::validation, "row out of range");
    require(k >= 1 && k <= d.dim(), ErrorKind::validation, "k out of range");
    std::vector<double> base = baseline_values(d, policy);
    std::vector<double> sal = saliency_values(m, d.row(row));
    std::vector<std::size_t> order = occlusion_order(sal);
    std::vector<double> x(d.row(row), d.row(row) + d.dim());
    double before = model::forward(m, x.data()).path_loss_db;
    for (std::size_t r = 0; r < k; ++r) x[order[r]] = base[order[r]];
    double after = model::forward(m, x.data()).path_loss_db;
    return std::abs(before - after);
}

std::vector<RankedFeature> feature_ranking(const model::ModelParams& m,
                                           const feat::Dataset& d) {
    require(d.n_rows > 0, ErrorKind::validation, "empty dataset");
    std::vector<std::vector<double>> sal(d.n_rows);
    parallel_for(d.n_rows,
                 [&](std::size_t i) { sal[i] = saliency_values(m, d.row(i)); });
    std::vector<RankedFeature> out(d.dim());
    for (std::size_t j = 0; j < d.dim(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d.n_rows; ++i) acc += std::abs(sal[i][j]);
        out[j] = {d.schema.features[j].name, acc / static_cast<double>(d.n_rows), j};
    }
    std::stable_sort(out.begin(), out.end(), [](const RankedFeature& a,
                                                const RankedFeature& b) {
        return a.mean_abs_saliency > b.mean_abs_saliency;
    });
    return out;
}

double relevant_mass(const model::ModelParams& m, const feat::Dataset& d,
                     const std::vector<std::size_t>& rows) {
    require(!rows.empty(), ErrorKind::validation, "no rows given");
    std::vector<std::size_t> rel = model::relevant_indices(d.schema);
    std::vector<std::uint8_t> is_rel(d.dim(), 0);
    for (std::size_t j : rel) is_rel[j] = 1;
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t r : rows) {
        std::vector<double> sal = saliency_values(m, d.row(r));
        double num = 0, den = 0;
        for (std::size_t j = 0; j < sal.size(); ++j) {
            den += std::abs(sal[j]);
            if (is_rel[j]) num += std::abs(sal[j]);
        }
        if (den > 1e-300) {
            acc += num / den;
            used++;
        }
    }
    return used ? acc / static_cast<double>(used) : 0.0;
}

std::string curve_to_json(const PerturbationCurve& c) {
    json j;
    j["mode"] = c.mode;
    j["fractions"] = c.fractions;
    j["rmse_db"] = c.rmse_db;
    j["auc"] = c.auc;
    return j.dump(2);
}

std::string curve_to_csv(const PerturbationCurve& c) {
    std::ostringstream os;
    os.precision(17);
    os << "fraction,rmse_db\n";
    for (std::size_t k = 0; k < c.fractions.size(); ++k) {
        os << c.fractions[k] << ',' << c.rmse_db[k] << '\n';
    }
    return os.str();
}

std::string ranking_to_json(const std::vector<RankedFeature>& r) {
    json j = json::array();
    for (const auto& f : r) {
        j.push_back({{"feature", f.name},
                     {"mean_abs_saliency", f.mean_abs_saliency},
                     {"schema_index", f.schema_index}});
    }
    return j.dump(2);
}

std::string ranking_to_csv(const std::vector<RankedFeature>& r) {
    std::ostringstream os;
    os.precision(17);
    os << "feature,mean_abs_saliency,schema_index\n";
    for (const auto& f : r) {
        os << f.name << ',' << f.mean_abs_saliency << ',' << f.schema_index << '\n';
    }
    return os.str();
}

} // namespace chanform::explain
