#include "chanform/model.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "chanform/grid_io.hpp"
#include "chanform/rng.hpp"

namespace chanform::model {

using json = nlohmann::json;

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

// Stable binary cross-entropy on the logit.
double bce(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

std::vector<LayerSpec> make_specs(const std::vector<int>& widths, int in_dim, int out_dim,
                                  std::size_t& cursor) {
    std::vector<LayerSpec> specs;
    int prev = in_dim;
    auto push = [&](int out) {
        LayerSpec s;
        s.in = prev;
        s.out = out;
        s.w_off = cursor;
        cursor += static_cast<std::size_t>(s.in) * s.out;
        s.b_off = cursor;
        cursor += s.out;
        specs.push_back(s);
        prev = out;
    };
    for (int w : widths) {
        require(w >= 1, ErrorKind::validation, "layer widths must be >= 1");
        push(w);
    }
    push(out_dim);
    return specs;
}

// Dense chain: tanh after every layer except the last (linear output).
std::vector<double> forward_chain(const std::vector<double>& theta,
                                  const std::vector<LayerSpec>& specs,
                                  const std::vector<double>& input, ChainCache* cache) {
    if (cache) {
        cache->z.assign(specs.size(), {});
        cache->a.assign(specs.size() + 1, {});
        cache->a[0] = input;
    }
    std::vector<double> a = input;
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const LayerSpec& s = specs[l];
        std::vector<double> z(s.out);
        const double* w = theta.data() + s.w_off;
        const double* b = theta.data() + s.b_off;
        for (int o = 0; o < s.out; ++o) {
            double acc = b[o];
            const double* wrow = w + static_cast<std::size_t>(o) * s.in;
            for (int i = 0; i < s.in; ++i) acc += wrow[i] * a[i];
            z[o] = acc;
        }
        bool last = l + 1 == specs.size();
        if (cache) cache->z[l] = z;
        if (!last) {
            for (double& v : z) v = std::tanh(v);
        }
        a = std::move(z);
        if (cache) cache->a[l + 1] = a;
    }
    return a;
}

// Reverse pass. d_out is dLoss/d(chain output); returns dLoss/d(input) and
// accumulates parameter gradients into grad when non-null. When deltas is
// non-null it receives dOut/d(z_l) per layer (used by the tangent pass).
std::vector<double> backward_chain(const std::vector<double>& theta,
                                   const std::vector<LayerSpec>& specs,
                                   const ChainCache& cache, std::vector<double> d_out,
                                   std::vector<double>* grad,
                                   std::vector<std::vector<double>>* deltas) {
    if (deltas) deltas->assign(specs.size(), {});
    std::vector<double> delta = std::move(d_out); // w.r.t. z of the last (linear) layer
    for (std::size_t l = specs.size(); l-- > 0;) {
        const LayerSpec& s = specs[l];
        if (deltas) (*deltas)[l] = delta;
        const std::vector<double>& a_prev = cache.a[l];
        if (grad) {
            double* gw = grad->data() + s.w_off;
            double* gb = grad->data() + s.b_off;
            for (int o = 0; o < s.out; ++o) {
                double d = delta[o];
                double* grow = gw + static_cast<std::size_t>(o) * s.in;
                for (int i = 0; i < s.in; ++i) grow[i] += d * a_prev[i];
                gb[o] += d;
            }
        }
        std::vector<double> d_prev(s.in, 0.0);
        const double* w = theta.data() + s.w_off;
        for (int o = 0; o < s.out; ++o) {
            double d = delta[o];
            const double* wrow = w + static_cast<std::size_t>(o) * s.in;
            for (int i = 0; i < s.in; ++i) d_prev[i] += wrow[i] * d;
        }
        if (l > 0) {
            // a_prev = tanh(z_{l-1}); phi'(z) = 1 - tanh^2.
            for (int i = 0; i < s.in; ++i) d_prev[i] *= 1.0 - a_prev[i] * a_prev[i];
        }
        delta = std::move(d_prev);
    }
    return delta;
}

} // namespace

std::uint64_t ModelParams::param_hash() const {
    std::uint64_t h = hash_doubles(theta, schema_fingerprint);
    return hash_combine(h, seed);
}

double ModelParams::distance_m_from(const double* x) const {
    require(logd_index >= 0, ErrorKind::validation, "schema has no log10_distance");
    double logd = stats.normalized ? stats.denorm(logd_index, x[logd_index]) : x[logd_index];
    return std::pow(10.0, logd);
}

double ModelParams::frequency_hz_from(const double* x) const {
    require(freq_index >= 0, ErrorKind::validation, "schema has no frequency feature");
    return stats.normalized ? stats.denorm(freq_index, x[freq_index]) : x[freq_index];
}

ModelParams init_model(const feat::FeatureSchema& schema, const ArchConfig& arch,
                       std::uint64_t seed) {
    require(!schema.features.empty(), ErrorKind::validation, "empty schema");
    require(arch.init_frequency_hz > 0, ErrorKind::validation, "bad init frequency");
    ModelParams m;
    m.schema = schema;
    m.arch = arch;
    m.seed = seed;
    m.schema_fingerprint = schema.fingerprint();
    m.logd_index = schema.index_of("log10_distance");
    m.freq_index = schema.index_of("frequency_hz");
    m.model_aided = arch.model_aided && m.logd_index >= 0;

    int in_dim = static_cast<int>(schema.size());
    std::size_t cursor = 2; // theta[0] intercept, theta[1] exponent
    m.extractor_begin = cursor;
    int f_dim = in_dim;
    if (!arch.extractor_widths.empty()) {
        std::vector<int> hidden(arch.extractor_widths.begin(),
                                arch.extractor_widths.end() - 1);
        m.extractor = make_specs(hidden, in_dim, arch.extractor_widths.back(), cursor);
        f_dim = arch.extractor_widths.back();
    }
    m.extractor_end = cursor;
    for (int h = 0; h < kHeadCount; ++h) {
        m.heads[h] = make_specs(arch.head_widths, f_dim, 1, cursor);
    }
    m.theta.assign(cursor, 0.0);

    // Free-space starting point for the learnable baseline.
    m.theta[0] = 20.0 * std::log10(arch.init_frequency_hz) - 147.55;
    m.theta[1] = 2.0;

    Rng rng(hash_combine(seed, 0x10de1ull));
    auto init_layers = [&](const std::vector<LayerSpec>& specs) {
        for (const LayerSpec& s : specs) {
            double scale = 1.0 / std::sqrt(static_cast<double>(s.in));
            for (std::size_t k = 0; k < static_cast<std::size_t>(s.in) * s.out; ++k) {
                m.theta[s.w_off + k] = rng.normal() * scale;
            }
            // biases start at zero
        }
    };
    init_layers(m.extractor);
    for (const auto& hs : m.heads) init_layers(hs);

    // Identity stats until a training set binds real ones.
    m.stats.normalized = false;
    m.stats.mean.assign(schema.size(), 0.0);
    m.stats.stddev.assign(schema.size(), 1.0);
    m.stats.constant_flag.assign(schema.size(), 0);
    return m;
}

namespace {

// The extractor output is tanh-activated (it is a hidden representation);
// heads then run their own chains. Rather than special-casing, we treat the
// extractor chain's final layer as hidden by folding extractor and head into
// one concatenated chain for the path-loss reverse/tangent passes.
struct PlChain {
    std::vector<LayerSpec> specs;
    ChainCache cache;
};

PlChain concat_pl_chain(const ModelParams& m, const ForwardCache& fc) {
    PlChain c;
    c.specs = m.extractor;
    c.specs.insert(c.specs.end(), m.heads[kHeadPathLoss].begin(),
                   m.heads[kHeadPathLoss].end());
    const ChainCache& e = fc.extractor;
    const ChainCache& h = fc.heads[kHeadPathLoss];
    c.cache.a = e.a;
    c.cache.a.insert(c.cache.a.end(), h.a.begin() + 1, h.a.end());
    c.cache.z = e.z;
    c.cache.z.insert(c.cache.z.end(), h.z.begin(), h.z.end());
    return c;
}

} // namespace

Predictions forward(const ModelParams& m, const double* x, ForwardCache* cache) {
    std::size_t dim = m.schema.size();
    std::vector<double> input(x, x + dim);
    for (double v : input) {
        require(std::isfinite(v), ErrorKind::validation, "non-finite model input");
    }
    ForwardCache local;
    ForwardCache& fc = cache ? *cache : local;
    fc.x = input;

    std::vector<double> f;
    if (m.extractor.empty()) {
        f = input;
        fc.extractor.z.clear();
        fc.extractor.a.assign(1, input);
    } else {
        // The extractor's last layer is a hidden representation: apply tanh.
        f = forward_chain(m.theta, m.extractor, input, &fc.extractor);
        for (double& v : f) v = std::tanh(v);
        fc.extractor.a.back() = f;
    }

    std::array<double, kHeadCount> out{};
    for (int h = 0; h < kHeadCount; ++h) {
        out[h] = forward_chain(m.theta, m.heads[h], f, &fc.heads[h])[0];
    }

    Predictions p;
    p.baseline_db = m.intercept_db();
    if (m.model_aided) {
        p.baseline_db += 10.0 * m.exponent() * std::log10(m.distance_m_from(x));
    }
    p.path_loss_db = p.baseline_db + out[kHeadPathLoss];
    p.los_logit = out[kHeadLos];
    p.los_prob = sigmoid(p.los_logit);
    p.log_ds = out[kHeadDelaySpread];
    p.delay_spread_s = std::max(0.0, std::exp(p.log_ds) - 1e-9);
    p.log_count = out[kHeadPathCount];
    p.path_count = std::exp(p.log_count);
    return p;
}

namespace {

// Reverse pass over the concatenated path-loss chain with unit output seed.
// Returns d(pl)/d(input); fills deltas (d pl / d z_l) for the tangent pass.
std::vector<double> pl_reverse(const ModelParams& m, const PlChain& chain,
                               std::vector<std::vector<double>>* deltas,
                               std::vector<double>* grad) {
    std::vector<double> g =
        backward_chain(m.theta, chain.specs, chain.cache, {1.0}, grad, deltas);
    return g;
}

void add_baseline_input_grad(const ModelParams& m, std::vector<double>& g) {
    if (!m.model_aided) return;
    double std_logd = m.stats.normalized ? m.stats.stddev[m.logd_index] : 1.0;
    g[m.logd_index] += 10.0 * m.exponent() * std_logd;
}

} // namespace

std::vector<double> pl_input_gradient(const ModelParams& m, const double* x) {
    ForwardCache fc;
    forward(m, x, &fc);
    PlChain chain = concat_pl_chain(m, fc);
    std::vector<double> g = pl_reverse(m, chain, nullptr, nullptr);
    add_baseline_input_grad(m, g);
    return g;
}

std::vector<std::size_t> relevant_indices(const feat::FeatureSchema& schema) {
    std::vector<std::size_t> idx = schema.group_indices(feat::FeatureGroup::physics);
    for (std::size_t j : schema.group_indices(feat::FeatureGroup::semantic_building)) {
        idx.push_back(j);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

LossBreakdown batch_loss(const ModelParams& m, const feat::Dataset& d,
                         const std::vector<std::size_t>& rows, const LossConfig& cfg,
                         std::vector<double>* grad) {
    require(!rows.empty(), ErrorKind::validation, "empty batch");
    require(d.schema.fingerprint() == m.schema_fingerprint, ErrorKind::schema_mismatch,
            "dataset schema does not match model");
    if (grad) grad->assign(m.n_params(), 0.0);

    const double inv_n = 1.0 / static_cast<double>(rows.size());
    const bool fspl_available = m.logd_index >= 0 && m.freq_index >= 0;
    std::vector<std::size_t> relevant = relevant_indices(m.schema);
    std::vector<std::uint8_t> is_relevant(m.schema.size(), 0);
    for (std::size_t j : relevant) is_relevant[j] = 1;

    LossBreakdown out;
    ForwardCache fc;

    for (std::size_t row : rows) {
        const double* x = d.row(row);
        const feat::Labels& lab = d.labels[row];
        Predictions p = forward(m, x, &fc);

        double e_pl = p.path_loss_db - lab.path_loss_db;
        double e_ds = p.log_ds - std::log(lab.rms_delay_spread_s + 1e-9);
        double e_cnt = p.log_count - std::log(std::max(1.0, lab.effective_path_count));
        out.task += inv_n * (cfg.weights.path_loss * e_pl * e_pl +
                             cfg.weights.los * bce(p.los_logit, lab.los) +
                             cfg.weights.delay_spread * e_ds * e_ds +
                             cfg.weights.path_count * e_cnt * e_cnt);

        double hinge = 0.0;
        if (fspl_available) {
            double dist = m.distance_m_from(x);
            double freq = m.frequency_hz_from(x);
            if (dist > 1e-9 && freq > 0) {
                double fspl =
                    20.0 * std::log10(dist) + 20.0 * std::log10(freq) - 147.55;
                hinge = std::max(0.0, fspl - p.path_loss_db);
                out.physics += inv_n * hinge * hinge;
            }
        }

        bool nlos = lab.los < 0.5;
        bool want_expl = cfg.lambda_expl > 0 && nlos;

        // Saliency for the explanation term: s_i = (d pl / d x_i) * x_i.
        PlChain chain;
        std::vector<std::vector<double>> deltas;
        std::vector<double> g_in;
        double ratio_num = 0.0, ratio_den = 0.0;
        if (want_expl) {
            chain = concat_pl_chain(m, fc);
            g_in = pl_reverse(m, chain, &deltas, nullptr);
            add_baseline_input_grad(m, g_in);
            for (std::size_t j = 0; j < g_in.size(); ++j) {
                double s = g_in[j] * x[j];
                ratio_den += std::abs(s);
                if (is_relevant[j]) ratio_num += std::abs(s);
            }
            if (ratio_den > 1e-300) {
                out.explanation += inv_n * (1.0 - ratio_num / ratio_den);
            }
        }

        if (!grad) continue;

        // Head output error signals for the total loss (mean over batch).
        double d_pl =
            inv_n * (2.0 * cfg.weights.path_loss * e_pl - 2.0 * cfg.lambda_phys * hinge);
        double d_los = inv_n * cfg.weights.los * (p.los_prob - lab.los);
        double d_ds = inv_n * 2.0 * cfg.weights.delay_spread * e_ds;
        double d_cnt = inv_n * 2.0 * cfg.weights.path_count * e_cnt;

        // Baseline parameters appear only in the path-loss output.
        (*grad)[0] += d_pl;
        if (m.model_aided) {
            (*grad)[1] += d_pl * 10.0 * std::log10(m.distance_m_from(x));
        }

        std::array<double, kHeadCount> douts{d_pl, d_los, d_ds, d_cnt};
        std::vector<double> d_f(fc.extractor.a.back().size(), 0.0);
        for (int h = 0; h < kHeadCount; ++h) {
            std::vector<double> di = backward_chain(m.theta, m.heads[h], fc.heads[h],
                                                    {douts[h]}, grad, nullptr);
            for (std::size_t k = 0; k < d_f.size(); ++k) d_f[k] += di[k];
        }
        if (!m.extractor.empty()) {
            // The extractor output went through tanh before feeding the heads.
            const std::vector<double>& f = fc.extractor.a.back();
            for (std::size_t k = 0; k < d_f.size(); ++k) d_f[k] *= 1.0 - f[k] * f[k];
            // Temporarily treat the extractor alone, final layer z linear:
            backward_chain(m.theta, m.extractor, fc.extractor, d_f, grad, nullptr);
        }

        if (want_expl && ratio_den > 1e-300) {
            // d(explanation)/d(s_j), then tangent seed v = dE/dg = dE/ds * x.
            std::vector<double> v(g_in.size(), 0.0);
            for (std::size_t j = 0; j < g_in.size(); ++j) {
                double s = g_in[j] * x[j];
                if (s == 0.0) continue;
                double sign = s > 0 ? 1.0 : -1.0;
                double dE_ds = sign * (ratio_num / (ratio_den * ratio_den) -
                                       (is_relevant[j] ? 1.0 / ratio_den : 0.0));
                v[j] = dE_ds * x[j];
            }
            double scale = cfg.lambda_expl * inv_n;

            // Forward tangent pass through the concatenated chain with seed v.
            std::size_t L = chain.specs.size();
            std::vector<std::vector<double>> a_dot(L + 1), z_dot(L);
            a_dot[0] = v;
            for (std::size_t l = 0; l < L; ++l) {
                const LayerSpec& s = chain.specs[l];
                z_dot[l].assign(s.out, 0.0);
                const double* w = m.theta.data() + s.w_off;
                for (int o = 0; o < s.out; ++o) {
                    double acc = 0.0;
                    const double* wrow = w + static_cast<std::size_t>(o) * s.in;
                    for (int i = 0; i < s.in; ++i) acc += wrow[i] * a_dot[l][i];
                    z_dot[l][o] = acc;
                }
                a_dot[l + 1] = z_dot[l];
                if (l + 1 < L) {
                    const std::vector<double>& a = chain.cache.a[l + 1];
                    for (int o = 0; o < s.out; ++o) {
                        a_dot[l + 1][o] *= 1.0 - a[o] * a[o];
                    }
                }
            }

            // Reverse tangent pass: delta_dot accumulates parameter grads of
            // v . grad_x(pl), the directional second derivative.
            std::vector<double> delta_dot(1, 0.0); // d pl / d z_L is constant 1
            for (std::size_t l = L; l-- > 0;) {
                const LayerSpec& s = chain.specs[l];
                const std::vector<double>& delta = deltas[l];
                const std::vector<double>& a_prev = chain.cache.a[l];
                const std::vector<double>& a_dot_prev = a_dot[l];
                double* gw = grad->data() + s.w_off;
                double* gb = grad->data() + s.b_off;
                for (int o = 0; o < s.out; ++o) {
                    double dd = delta_dot[o];
                    double dl = delta[o];
                    double* grow = gw + static_cast<std::size_t>(o) * s.in;
                    for (int i = 0; i < s.in; ++i) {
                        grow[i] += scale * (dd * a_prev[i] + dl * a_dot_prev[i]);
                    }
                    gb[o] += scale * dd;
                }
                if (l == 0) break;
                std::vector<double> nd(s.in, 0.0), nd_dot(s.in, 0.0);
                const double* w = m.theta.data() + s.w_off;
                for (int o = 0; o < s.out; ++o) {
                    const double* wrow = w + static_cast<std::size_t>(o) * s.in;
                    for (int i = 0; i < s.in; ++i) {
                        nd[i] += wrow[i] * delta[o];
                        nd_dot[i] += wrow[i] * delta_dot[o];
                    }
                }
                // a_prev = tanh(z_{l-1}): phi' = 1 - a^2, phi'' z_dot = -2 a phi' z_dot.
                delta_dot.assign(s.in, 0.0);
                for (int i = 0; i < s.in; ++i) {
                    double a = a_prev[i];
                    double phi1 = 1.0 - a * a;
                    double phi2zd = -2.0 * a * phi1 * z_dot[l - 1][i];
                    delta_dot[i] = nd_dot[i] * phi1 + nd[i] * phi2zd;
                }
            }
            if (m.model_aided) {
                double std_logd = m.stats.normalized ? m.stats.stddev[m.logd_index] : 1.0;
                (*grad)[1] += scale * 10.0 * std_logd * v[m.logd_index];
            }
        }
    }

    out.total = out.task + cfg.lambda_phys * out.physics + cfg.lambda_expl * out.explanation;
    return out;
}

namespace {
constexpr const char* kModelMagic = "CHFMODL1";
}

void save_model(const ModelParams& m, const std::string& path) {
    io::Container c;
    c.magic = kModelMagic;
    json h;
    h["format_version"] = 1;
    h["kind"] = "model";
    h["schema"] = json::parse(feat::schema_to_json(m.schema));
    h["arch"] = {{"extractor_widths", m.arch.extractor_widths},
                 {"head_widths", m.arch.head_widths},
                 {"init_frequency_hz", m.arch.init_frequency_hz},
                 {"model_aided", m.arch.model_aided}};
    h["stats"] = {{"normalized", m.stats.normalized},
                  {"mean", m.stats.mean},
                  {"stddev", m.stats.stddev},
                  {"constant_flag", m.stats.constant_flag}};
    h["seed"] = m.seed;
    h["schema_fingerprint"] = m.schema_fingerprint;
    h["blocks"] = json::array({{{"name", "theta"}, {"count", m.theta.size()}}});
    c.header_json = h.dump();
    c.blocks.push_back(m.theta);
    io::write_container(path, c);
}

ModelParams load_model(const std::string& path) {
    io::Container c = io::read_container(path, kModelMagic);
    try {
        json h = json::parse(c.header_json);
        require(h.at("format_version").get<int>() == 1, ErrorKind::io,
                "unsupported model format version");
        ArchConfig arch;
        arch.extractor_widths = h.at("arch").at("extractor_widths").get<std::vector<int>>();
        arch.head_widths = h.at("arch").at("head_widths").get<std::vector<int>>();
        arch.init_frequency_hz = h.at("arch").at("init_frequency_hz").get<double>();
        arch.model_aided = h.at("arch").at("model_aided").get<bool>();
        feat::FeatureSchema schema = feat::schema_from_json(h.at("schema").dump());
        ModelParams m = init_model(schema, arch, h.at("seed").get<std::uint64_t>());
        require(c.blocks.size() == 1 && c.blocks[0].size() == m.theta.size(),
                ErrorKind::io, "model parameter block size mismatch");
        m.theta = c.blocks[0];
        const auto& st = h.at("stats");
        m.stats.normalized = st.at("normalized").get<bool>();
        m.stats.mean = st.at("mean").get<std::vector<double>>();
        m.stats.stddev = st.at("stddev").get<std::vector<double>>();
        m.stats.constant_flag = st.at("constant_flag").get<std::vector<std::uint8_t>>();
        require(m.schema_fingerprint == h.at("schema_fingerprint").get<std::uint64_t>(),
                ErrorKind::schema_mismatch, "checkpoint fingerprint mismatch");
        return m;
    } catch (const json::exception& e) {
        fail(ErrorKind::io, std::string("corrupt model header: ") + e.what());
    }
}

} // namespace chanform::model
