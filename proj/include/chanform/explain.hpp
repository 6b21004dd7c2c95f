#pragma once

#include <string>
#include <vector>

#include "chanform/model.hpp"

namespace chanform::explain {

struct SaliencyVector {
    std::vector<double> values; // gradient x input, signed
    std::size_t row = 0;
    std::string method = "gradient_x_input";
};

SaliencyVector saliency(const model::ModelParams& m, const feat::Dataset& d,
                        std::size_t row);
// Saliency for a raw feature vector (model input space).
std::vector<double> saliency_values(const model::ModelParams& m, const double* x);

// Occlusion fill values; empty = per-feature dataset mean.
struct BaselinePolicy {
    std::vector<double> values;
};

struct PerturbationCurve {
    std::vector<double> fractions; // 21 points, 0 .. 1
    std::vector<double> rmse_db;
    std::string mode; // "deletion" | "insertion"
    double auc = 0.0; // trapezoid over (fraction, rmse)
};

PerturbationCurve deletion_curve(const model::ModelParams& m, const feat::Dataset& d,
                                 const BaselinePolicy& policy = {});
PerturbationCurve insertion_curve(const model::ModelParams& m, const feat::Dataset& d,
                                  const BaselinePolicy& policy = {});

// |pl(x) - pl(x with the top-k salient features occluded)|.
double comprehensiveness(const model::ModelParams& m, const feat::Dataset& d,
                         std::size_t row, std::size_t k,
                         const BaselinePolicy& policy = {});

struct RankedFeature {
    std::string name;
    double mean_abs_saliency = 0.0;
    std::size_t schema_index = 0;
};

// Descending by mean |saliency|; ties keep schema order.
std::vector<RankedFeature> feature_ranking(const model::ModelParams& m,
                                           const feat::Dataset& d);

// Mean fraction of |saliency| mass on physics + semantic_building features
// over the given rows (the explanation-supervision target quantity).
double relevant_mass(const model::ModelParams& m, const feat::Dataset& d,
                     const std::vector<std::size_t>& rows);

std::string curve_to_json(const PerturbationCurve& c);
std::string curve_to_csv(const PerturbationCurve& c);
std::string ranking_to_json(const std::vector<RankedFeature>& r);
std::string ranking_to_csv(const std::vector<RankedFeature>& r);

} // namespace chanform::explain
