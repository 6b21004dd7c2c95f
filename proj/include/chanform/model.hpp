#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chanform/dataset.hpp"

namespace chanform::model {

// Dense stack sizes. The extractor output feeds all four heads; every hidden
// unit uses tanh, head outputs are linear.
struct ArchConfig {
    std::vector<int> extractor_widths{48, 48};
    std::vector<int> head_widths{24};
    double init_frequency_hz = 5.9e9; // seeds the baseline intercept
    bool model_aided = true;          // requires a log10_distance feature
};

struct LayerSpec {
    int in = 0, out = 0;
    std::size_t w_off = 0, b_off = 0; // offsets into the flat parameter vector
};

enum HeadId { kHeadPathLoss = 0, kHeadLos = 1, kHeadDelaySpread = 2, kHeadPathCount = 3 };
inline constexpr int kHeadCount = 4;

// All parameters live in one flat vector: [intercept, exponent, extractor
// layers (W then b each), head layers]. theta[extractor_begin, extractor_end)
// is the frozen block under fine-tuning.
struct ModelParams {
    feat::FeatureSchema schema;
    feat::NormStats stats; // training normalization; identity until train()
    ArchConfig arch;
    std::vector<double> theta;
    std::vector<LayerSpec> extractor;
    std::array<std::vector<LayerSpec>, kHeadCount> heads;
    std::size_t extractor_begin = 2, extractor_end = 2;
    int logd_index = -1;  // schema slot of log10_distance (-1: absent)
    int freq_index = -1;  // schema slot of frequency_hz
    bool model_aided = false;
    std::uint64_t seed = 0;
    std::uint64_t schema_fingerprint = 0;

    std::size_t n_params() const { return theta.size(); }
    double intercept_db() const { return theta[0]; }
    double exponent() const { return theta[1]; }
    std::uint64_t param_hash() const;
    // Denormalized helpers reading the stored stats.
    double distance_m_from(const double* x) const;
    double frequency_hz_from(const double* x) const;
};

ModelParams init_model(const feat::FeatureSchema& schema, const ArchConfig& arch,
                       std::uint64_t seed);

struct Predictions {
    double path_loss_db = 0.0;
    double los_prob = 0.5;
    double delay_spread_s = 0.0;
    double path_count = 1.0;
    double baseline_db = 0.0;
    double los_logit = 0.0;
    double log_ds = 0.0;
    double log_count = 0.0;
};

struct ChainCache {
    std::vector<std::vector<double>> z; // pre-activations per layer
    std::vector<std::vector<double>> a; // activations per layer (a[0] = input)
};

struct ForwardCache {
    std::vector<double> x;
    ChainCache extractor;
    std::array<ChainCache, kHeadCount> heads;
};

Predictions forward(const ModelParams& m, const double* x, ForwardCache* cache = nullptr);

// d(path-loss output)/d(input features), exact reverse pass (includes the
// baseline's log-distance term when model-aided).
std::vector<double> pl_input_gradient(const ModelParams& m, const double* x);

struct LossWeights {
    double path_loss = 1.0;
    double los = 0.5;
    double delay_spread = 0.25;
    double path_count = 0.25;
};

struct LossBreakdown {
    double task = 0.0;
    double physics = 0.0;
    double explanation = 0.0;
    double total = 0.0;
};

struct LossConfig {
    LossWeights weights;
    double lambda_phys = 0.1;
    double lambda_expl = 0.05;
};

// Mean loss over the given rows of a normalized dataset; when grad is
// non-null it receives d(total)/d(theta) (same layout as theta).
LossBreakdown batch_loss(const ModelParams& m, const feat::Dataset& d,
                         const std::vector<std::size_t>& rows, const LossConfig& cfg,
                         std::vector<double>* grad);

// Explanation-loss helper exposed for tests: indices attributed as
// propagation-relevant (physics + semantic_building groups).
std::vector<std::size_t> relevant_indices(const feat::FeatureSchema& schema);

void save_model(const ModelParams& m, const std::string& path);
ModelParams load_model(const std::string& path);

} // namespace chanform::model
