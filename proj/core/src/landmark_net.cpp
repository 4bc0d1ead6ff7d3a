#include "kronmark/landmark_net.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <thread>

#include "kronmark/adam.hpp"
#include "kronmark/errors.hpp"
#include "kronmark/ops.hpp"

namespace kronmark::net {

// ---- configuration ------------------------------------------------------------

KpfemConfig KpfemConfig::defaults() {
    KpfemConfig c;
    const std::size_t plan[14][2] = {{3, 24},  {24, 24}, {24, 48}, {48, 48}, {48, 96}, {96, 96}, {96, 96},
                                     {96, 96}, {96, 96}, {96, 96}, {96, 96}, {96, 96}, {96, 96}, {96, 96}};
    for (const auto& [in, out] : plan) c.layers.push_back({in, out, 3, 3});
    c.pool_after = {2, 4, 6, 8};
    for (std::size_t from = 2; from + 2 <= 14; from += 2) c.skips.push_back({from, from + 2});
    return c;
}

KpfemConfig KpfemConfig::defaults_with_order(std::size_t n) {
    KpfemConfig c = defaults();
    for (auto& l : c.layers) l.order = n;
    return c;
}

namespace {

bool pooled(const KpfemConfig& c, std::size_t layer) {
    return std::find(c.pool_after.begin(), c.pool_after.end(), layer) != c.pool_after.end();
}

}  // namespace

std::vector<Shape> KpfemConfig::layer_output_shapes() const {
    std::vector<Shape> shapes;
    std::size_t size = input_size;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (pooled(*this, i + 1)) {
            if (size % 2) throw ConfigError("kpfem: pooling after layer " + std::to_string(i + 1) + " needs an even extent");
            size /= 2;
        }
        shapes.push_back({layers[i].out_channels, size, size});
    }
    return shapes;
}

Shape KpfemConfig::feature_shape() const { return layer_output_shapes().back(); }

bool KpfemConfig::needs_projection(const SkipConnection& s) const {
    return layers.at(s.from - 1).out_channels != layers.at(s.to - 1).in_channels;
}

std::size_t KpfemConfig::projection_order(const SkipConnection& s) const {
    const std::size_t src = layers.at(s.from - 1).out_channels, dst = layers.at(s.to - 1).in_channels;
    const std::size_t n = layers.at(s.to - 1).order;
    return (src % n == 0 && dst % n == 0) ? n : 1;
}

void KpfemConfig::validate() const {
    if (layers.size() != 14) throw ConfigError("kpfem: expected exactly 14 layers, got " + std::to_string(layers.size()));
    if (input_channels == 0 || input_size == 0) throw ConfigError("kpfem: empty input");
    if (heatmap_size == 0 || landmarks == 0) throw ConfigError("kpfem: empty head");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        const std::size_t expect_in = i == 0 ? input_channels : layers[i - 1].out_channels;
        if (l.in_channels != expect_in) {
            throw ConfigError("kpfem: layer " + std::to_string(i + 1) + " expects " + std::to_string(l.in_channels) +
                              " channels but receives " + std::to_string(expect_in));
        }
        if (l.kernel % 2 == 0) throw ConfigError("kpfem: kernels must be odd for same padding");
        kronmark::validate(KclShape{l.in_channels, l.out_channels, l.kernel, l.order});
    }
    for (std::size_t p : pool_after)
        if (p < 1 || p > layers.size()) throw ConfigError("kpfem: pool position out of range");
    const auto shapes = layer_output_shapes();
    for (const auto& s : skips) {
        if (s.from < 1 || s.to <= s.from + 0 || s.to > layers.size() || s.to - s.from < 2) {
            throw ConfigError("kpfem: skip " + std::to_string(s.from) + "->" + std::to_string(s.to) + " is not forward");
        }
        const Shape& src = shapes[s.from - 1];
        const Shape& dst = shapes[s.to - 2];
        if (src[1] != dst[1] || src[2] != dst[2]) {
            throw ConfigError("kpfem: skip " + std::to_string(s.from) + "->" + std::to_string(s.to) +
                              " joins different spatial extents");
        }
        if (needs_projection(s)) {
            kronmark::validate(KclShape{src[0], dst[0], 1, projection_order(s)});
        }
    }
}

std::string KpfemConfig::to_json() const {
    nlohmann::ordered_json j;
    j["input_size"] = input_size;
    j["input_channels"] = input_channels;
    j["layers"] = nlohmann::ordered_json::array();
    for (const auto& l : layers) {
        j["layers"].push_back({{"in", l.in_channels}, {"out", l.out_channels}, {"order", l.order}, {"kernel", l.kernel}});
    }
    j["pool_after"] = pool_after;
    j["skips"] = nlohmann::ordered_json::array();
    for (const auto& s : skips) j["skips"].push_back({{"from", s.from}, {"to", s.to}});
    j["heatmap_size"] = heatmap_size;
    j["landmarks"] = landmarks;
    return j.dump();
}

KpfemConfig KpfemConfig::from_json(const std::string& text) {
    KpfemConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        c.input_size = j.value("input_size", c.input_size);
        c.input_channels = j.value("input_channels", c.input_channels);
        for (const auto& l : j.at("layers")) {
            c.layers.push_back({l.at("in").get<std::size_t>(), l.at("out").get<std::size_t>(),
                                l.value("order", std::size_t{1}), l.value("kernel", std::size_t{3})});
        }
        c.pool_after = j.at("pool_after").get<std::vector<std::size_t>>();
        for (const auto& s : j.at("skips")) c.skips.push_back({s.at("from").get<std::size_t>(), s.at("to").get<std::size_t>()});
        c.heatmap_size = j.value("heatmap_size", c.heatmap_size);
        c.landmarks = j.value("landmarks", c.landmarks);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("kpfem: bad configuration JSON: ") + e.what());
    }
    c.validate();
    return c;
}

Sha256 KpfemConfig::digest() const { return sha256(to_json()); }

// ---- parameters ----------------------------------------------------------------

namespace {

std::string layer_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "layer%02zu", i + 1);
    return buf;
}

template <typename P, typename Out>
void name_kcl(const std::string& prefix, P& p, Out& out) {
    for (std::size_t i = 0; i < p.algebra.size(); ++i) out.emplace_back(prefix + ".A" + std::to_string(i), &p.algebra[i]);
    for (std::size_t i = 0; i < p.filters.size(); ++i) out.emplace_back(prefix + ".F" + std::to_string(i), &p.filters[i]);
    out.emplace_back(prefix + ".bias", &p.bias);
}

template <typename Self, typename Out>
void collect_named(Self& self, Out& out) {
    for (std::size_t i = 0; i < self.layers.size(); ++i) name_kcl(layer_name(i), self.layers[i], out);
    for (std::size_t i = 0; i < self.projections.size(); ++i)
        if (self.projections[i]) name_kcl("skip" + std::to_string(i + 1) + ".proj", *self.projections[i], out);
    out.emplace_back("heat.weight", &self.heat_weight);
    out.emplace_back("heat.bias", &self.heat_bias);
    out.emplace_back("coord.weight", &self.coord_weight);
    out.emplace_back("coord.bias", &self.coord_bias);
}

template <typename T>
void fill_uniform(Tensor<T>& t, std::mt19937_64& rng, double bound) {
    std::uniform_real_distribution<double> d(-bound, bound);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> LandmarkNetParams<T>::named_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    collect_named(*this, out);
    return out;
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> LandmarkNetParams<T>::named_tensors() const {
    std::vector<std::pair<std::string, const Tensor<T>*>> out;
    collect_named(*this, out);
    return out;
}

template <typename T>
std::size_t LandmarkNetParams<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : named_tensors()) n += t->size();
    return n;
}

template <typename T>
template <typename U>
LandmarkNetParams<U> LandmarkNetParams<T>::cast() const {
    auto cast_kcl = [](const KclParams<T>& p) {
        KclParams<U> q;
        q.shape = p.shape;
        for (const auto& a : p.algebra) q.algebra.push_back(a.template cast<U>());
        for (const auto& f : p.filters) q.filters.push_back(f.template cast<U>());
        q.bias = p.bias.template cast<U>();
        return q;
    };
    LandmarkNetParams<U> out;
    for (const auto& l : layers) out.layers.push_back(cast_kcl(l));
    for (const auto& p : projections) out.projections.push_back(p ? std::optional<KclParams<U>>(cast_kcl(*p)) : std::nullopt);
    out.heat_weight = heat_weight.template cast<U>();
    out.heat_bias = heat_bias.template cast<U>();
    out.coord_weight = coord_weight.template cast<U>();
    out.coord_bias = coord_bias.template cast<U>();
    return out;
}

template <typename T>
LandmarkNetParams<T> init_params(const KpfemConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    LandmarkNetParams<T> p;
    for (const auto& l : cfg.layers) p.layers.push_back(init_kcl<T>(KclShape{l.in_channels, l.out_channels, l.kernel, l.order}, rng));
    for (const auto& s : cfg.skips) {
        if (cfg.needs_projection(s)) {
            const KclShape shape{cfg.layers[s.from - 1].out_channels, cfg.layers[s.to - 1].in_channels, 1,
                                 cfg.projection_order(s)};
            p.projections.emplace_back(init_kcl<T>(shape, rng));
        } else {
            p.projections.emplace_back(std::nullopt);
        }
    }
    const std::size_t c = cfg.feature_shape()[0];
    const double bound = 1.0 / std::sqrt(static_cast<double>(c));
    p.heat_weight = Tensor<T>(Shape{cfg.landmarks, c, 1, 1});
    fill_uniform(p.heat_weight, rng, bound);
    p.heat_bias = Tensor<T>(Shape{cfg.landmarks});
    p.coord_weight = Tensor<T>(Shape{2 * cfg.landmarks, c});
    fill_uniform(p.coord_weight, rng, bound);
    p.coord_bias = Tensor<T>(Shape{2 * cfg.landmarks});
    return p;
}

Checkpoint to_checkpoint(const KpfemConfig& cfg, const LandmarkNetParams<float>& params) {
    Checkpoint ck;
    ck.config_digest = cfg.digest();
    for (const auto& [name, t] : params.named_tensors()) ck.tensors.push_back({name, *t});
    return ck;
}

LandmarkNetParams<float> from_checkpoint(const KpfemConfig& cfg, const Checkpoint& ckpt) {
    if (ckpt.config_digest != cfg.digest()) {
        throw CompatibilityError("checkpoint digest " + to_hex(ckpt.config_digest) + " does not match configuration digest " +
                          to_hex(cfg.digest()));
    }
    auto params = init_params<float>(cfg, 0);
    for (auto& [name, t] : params.named_tensors()) {
        const Tensor<float>& src = ckpt.at(name);
        if (src.shape() != t->shape()) throw ParseError("checkpoint: tensor '" + name + "' has wrong shape", 0);
        *t = src;
    }
    return params;
}

// ---- forward ----------------------------------------------------------------------

template <typename T>
BoundNet bind(Tape<T>& tape, LandmarkNetParams<T>& params) {
    BoundNet b;
    for (auto& l : params.layers) b.layers.push_back(kronmark::bind(tape, l));
    for (auto& p : params.projections) b.projections.push_back(p ? std::optional<KclVars>(kronmark::bind(tape, *p)) : std::nullopt);
    b.heat_weight = tape.parameter(params.heat_weight);
    b.heat_bias = tape.parameter(params.heat_bias);
    b.coord_weight = tape.parameter(params.coord_weight);
    b.coord_bias = tape.parameter(params.coord_bias);
    return b;
}

template <typename T>
BoundNet bind_frozen(Tape<T>& tape, const LandmarkNetParams<T>& params) {
    auto frozen = [&tape](const KclParams<T>& p) {
        KclVars v;
        for (const auto& a : p.algebra) v.algebra.push_back(tape.constant(a));
        for (const auto& f : p.filters) v.filters.push_back(tape.constant(f));
        v.bias = tape.constant(p.bias);
        return v;
    };
    BoundNet b;
    for (const auto& l : params.layers) b.layers.push_back(frozen(l));
    for (const auto& p : params.projections) b.projections.push_back(p ? std::optional<KclVars>(frozen(*p)) : std::nullopt);
    b.heat_weight = tape.constant(params.heat_weight);
    b.heat_bias = tape.constant(params.heat_bias);
    b.coord_weight = tape.constant(params.coord_weight);
    b.coord_bias = tape.constant(params.coord_bias);
    return b;
}

template <typename T>
Tensor<T> preprocess(const Tensor<float>& image) {
    Tensor<T> out(image.shape());
    for (std::size_t i = 0; i < image.size(); ++i) out[i] = static_cast<T>((static_cast<double>(image[i]) - 0.5) / 0.25);
    return out;
}

template <typename T>
Var kpfem_forward(Tape<T>& tape, Var image, const KpfemConfig& cfg, const BoundNet& net, const ForwardOptions& opts) {
    const Shape& in = tape.value(image).shape();
    if (in != Shape{cfg.input_channels, cfg.input_size, cfg.input_size}) {
        throw DimensionError("kpfem_forward: expected image " +
                             shape_string({cfg.input_channels, cfg.input_size, cfg.input_size}) + ", got " +
                             shape_string(in));
    }
    std::vector<Var> outputs;
    Var x = image;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        const std::size_t layer = i + 1;
        for (std::size_t k = 0; k < cfg.skips.size(); ++k) {
            const auto& s = cfg.skips[k];
            if (s.to != layer) continue;
            if (std::find(opts.disabled_skips.begin(), opts.disabled_skips.end(), k) != opts.disabled_skips.end()) continue;
            Var src = outputs[s.from - 1];
            if (net.projections.at(k)) src = kcl_forward(tape, src, *net.projections[k], {1, 0});
            x = ops::add(tape, x, src);
        }
        const std::size_t pad = cfg.layers[i].kernel / 2;
        Var y = ops::relu(tape, kcl_forward(tape, x, net.layers[i], {1, pad}));
        if (pooled(cfg, layer)) y = ops::maxpool2(tape, y);
        outputs.push_back(y);
        x = y;
    }
    return x;
}

template <typename T>
Tensor<T> kpfem_forward(const Tensor<T>& image, const KpfemConfig& cfg, const LandmarkNetParams<T>& params,
                        const ForwardOptions& opts) {
    Tape<T> tape;
    const BoundNet net = bind_frozen(tape, params);
    return tape.value(kpfem_forward(tape, tape.constant(image), cfg, net, opts));
}

template <typename T>
HeadOutputs llm_forward(Tape<T>& tape, Var features, const KpfemConfig& cfg, const BoundNet& net) {
    Var up = ops::bilinear_resize(tape, features, cfg.heatmap_size, cfg.heatmap_size);
    Var logits = ops::conv2d(tape, up, net.heat_weight, net.heat_bias);
    Var heat = ops::spatial_softmax(tape, logits);
    Var pooled_features = ops::global_avg_pool(tape, features);
    Var c = ops::sigmoid(tape, ops::linear(tape, pooled_features, net.coord_weight, net.coord_bias));
    return {heat, ops::reshape(tape, c, Shape{cfg.landmarks, 2})};
}

template <typename T>
Prediction<T> predict(const Tensor<float>& image, const KpfemConfig& cfg, const LandmarkNetParams<T>& params) {
    Tape<T> tape;
    const BoundNet net = bind_frozen(tape, params);
    Var f = kpfem_forward(tape, tape.constant(preprocess<T>(image)), cfg, net);
    const HeadOutputs h = llm_forward(tape, f, cfg, net);
    return {tape.value(h.heatmaps), tape.value(h.coords)};
}

template <typename T>
LandmarkSet decode_peak(const Tensor<T>& heatmaps, std::size_t image_w, std::size_t image_h) {
    if (heatmaps.rank() != 3 || heatmaps.extent(0) != kLandmarkCount) {
        throw DimensionError("decode_peak: expected [12,G,G], got " + shape_string(heatmaps.shape()));
    }
    const std::size_t gh = heatmaps.extent(1), gw = heatmaps.extent(2), n = gh * gw;
    LandmarkSet out{};
    for (std::size_t k = 0; k < kLandmarkCount; ++k) {
        const T* ch = heatmaps.data().data() + k * n;
        std::size_t best = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (ch[i] > ch[best]) best = i;
        const std::size_t r = best / gw, c = best % gw;
        out[k] = {(static_cast<double>(c) + 0.5) * static_cast<double>(image_w) / static_cast<double>(gw),
                  (static_cast<double>(r) + 0.5) * static_cast<double>(image_h) / static_cast<double>(gh)};
    }
    return out;
}

template <typename T>
LandmarkSet decode_coords(const Tensor<T>& coords, std::size_t image_w, std::size_t image_h) {
    if (coords.size() != 2 * kLandmarkCount) throw DimensionError("decode_coords: expected 24 values");
    LandmarkSet out{};
    for (std::size_t k = 0; k < kLandmarkCount; ++k)
        out[k] = {static_cast<double>(coords[2 * k]) * image_w, static_cast<double>(coords[2 * k + 1]) * image_h};
    return out;
}

template <typename T>
Tensor<T> coordinate_targets(const LandmarkSet& lm, std::size_t image_w, std::size_t image_h) {
    Tensor<T> out(Shape{kLandmarkCount, 2});
    for (std::size_t k = 0; k < kLandmarkCount; ++k) {
        out[2 * k] = static_cast<T>(lm[k].x / static_cast<double>(image_w));
        out[2 * k + 1] = static_cast<T>(lm[k].y / static_cast<double>(image_h));
    }
    return out;
}

namespace {

template <typename T>
void check_target_heat(const Tensor<T>& target) {
    if (target.rank() != 3) throw DimensionError("multitask_loss: target heatmaps must be [c,G,G]");
    const std::size_t c = target.extent(0), n = target.size() / c;
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = target[ch * n + i];
            if (v < 0.0) throw ContractError("multitask_loss: negative target heatmap value");
            s += v;
        }
        if (std::abs(s - 1.0) > 1e-4) {
            throw ContractError("multitask_loss: target channel " + std::to_string(ch) + " sums to " + std::to_string(s));
        }
    }
}

}  // namespace

template <typename T>
Var multitask_loss(Tape<T>& tape, Var pred_heat, Var pred_coords, const Tensor<T>& target_heat,
                   const Tensor<T>& target_coords, LossParts* parts) {
    check_target_heat(target_heat);
    Var h = ops::jsd_loss(tape, pred_heat, target_heat);
    Var c = ops::euclidean_loss(tape, pred_coords, target_coords);
    Var total = ops::scale(tape, ops::add(tape, h, c), T(0.5));
    if (parts) {
        parts->coords = tape.value(c).item();
        parts->heatmap = tape.value(h).item();
        parts->total = tape.value(total).item();
    }
    return total;
}

template <typename T>
LossParts multitask_loss(const Tensor<T>& pred_heat, const Tensor<T>& pred_coords, const Tensor<T>& target_heat,
                         const Tensor<T>& target_coords) {
    Tape<T> tape;
    LossParts parts;
    multitask_loss(tape, tape.constant(pred_heat), tape.constant(pred_coords), target_heat, target_coords, &parts);
    return parts;
}

// ---- training ----------------------------------------------------------------------

TrainConfig TrainConfig::literal_schedule() {
    TrainConfig c;
    c.decay_factor = 0.001;
    return c;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
    if (epochs == 0 || batch_size == 0) throw ConfigError("train: epochs and batch size must be > 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("train: decay factor must lie in (0,1]");
    if (decay_period == 0) throw ConfigError("train: decay period must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0 && epsilon > 0.0)) throw ConfigError("train: bad Adam constants");
    if (!(heatmap_sigma > 0.0)) throw ConfigError("train: heatmap sigma must be > 0");
    synth::validate(augmentation);
}

double TrainConfig::learning_rate_at(std::size_t epoch) const {
    return learning_rate * std::pow(decay_factor, static_cast<double>((std::max<std::size_t>(epoch, 1) - 1) / decay_period));
}

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    std::vector<std::jthread> pool;
    std::mutex error_mutex;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n && !failed; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    pool.clear();
    if (error) std::rethrow_exception(error);
}

namespace {

struct SampleResult {
    LossParts loss;
    std::vector<float> grad;
};

std::mt19937_64 augment_stream(std::uint64_t seed, std::size_t epoch, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(id), 0xa06U};
    return std::mt19937_64(seq);
}

SampleResult sample_gradient(const LandmarkNetParams<float>& params, const KpfemConfig& cfg,
                             const synth::SpecimenRecord& rec, double sigma) {
    LandmarkNetParams<float> local = params;
    for (auto& [name, t] : local.named_tensors()) t->clear_grad();
    Tape<float> tape;
    const BoundNet net = bind(tape, local);
    Var image = tape.constant(preprocess<float>(rec.image));
    Var features = kpfem_forward(tape, image, cfg, net);
    const HeadOutputs heads = llm_forward(tape, features, cfg, net);
    const auto heat_target = synth::make_heatmap_targets(rec.landmarks, sigma, cfg.input_size, cfg.input_size,
                                                         cfg.heatmap_size)
                                 .cast<float>();
    const auto coord_target = coordinate_targets<float>(rec.landmarks, cfg.input_size, cfg.input_size);
    SampleResult out;
    Var loss = multitask_loss(tape, heads.heatmaps, heads.coords, heat_target, coord_target, &out.loss);
    tape.backward(loss);
    for (const auto& [name, t] : local.named_tensors()) {
        if (t->has_grad()) {
            auto g = std::as_const(*t).grad();
            out.grad.insert(out.grad.end(), g.begin(), g.end());
        } else {
            out.grad.insert(out.grad.end(), t->size(), 0.0f);
        }
    }
    return out;
}

}  // namespace

LossParts evaluate_loss(const std::vector<synth::SpecimenRecord>& records, const KpfemConfig& cfg,
                        const LandmarkNetParams<float>& params, double heatmap_sigma, std::size_t workers) {
    std::vector<LossParts> parts(records.size());
    parallel_for(records.size(), workers, [&](std::size_t i) {
        const auto& rec = records[i];
        const Prediction<float> p = predict(rec.image, cfg, params);
        const auto heat_target = synth::make_heatmap_targets(rec.landmarks, heatmap_sigma, cfg.input_size,
                                                             cfg.input_size, cfg.heatmap_size)
                                     .cast<float>();
        parts[i] = multitask_loss(p.heatmaps, p.coords, heat_target,
                                  coordinate_targets<float>(rec.landmarks, cfg.input_size, cfg.input_size));
    });
    LossParts mean;
    for (const auto& p : parts) {
        mean.coords += p.coords;
        mean.heatmap += p.heatmap;
        mean.total += p.total;
    }
    if (!parts.empty()) {
        const double n = static_cast<double>(parts.size());
        mean.coords /= n;
        mean.heatmap /= n;
        mean.total /= n;
    }
    return mean;
}

std::vector<LandmarkSet> predict_landmarks(const std::vector<synth::SpecimenRecord>& records, const KpfemConfig& cfg,
                                           const LandmarkNetParams<float>& params, std::size_t workers) {
    std::vector<LandmarkSet> out(records.size());
    parallel_for(records.size(), workers, [&](std::size_t i) {
        const Prediction<float> p = predict(records[i].image, cfg, params);
        out[i] = decode_peak(p.heatmaps, cfg.input_size, cfg.input_size);
    });
    return out;
}

TrainResult train(const std::vector<synth::SpecimenRecord>& train_set, const std::vector<synth::SpecimenRecord>& val_set,
                  const KpfemConfig& cfg, const TrainConfig& tcfg, const std::function<void(const EpochStats&)>& on_epoch) {
    if (train_set.empty()) throw InputError("train: empty training set");
    cfg.validate();
    tcfg.validate();

    TrainResult result;
    LandmarkNetParams<float> params = init_params<float>(cfg, tcfg.seed);
    AdamState<float> adam;
    adam.beta1 = tcfg.beta1;
    adam.beta2 = tcfg.beta2;
    adam.epsilon = tcfg.epsilon;

    auto named = params.named_tensors();
    std::vector<Tensor<float>*> tensors;
    for (auto& [name, t] : named) tensors.push_back(t);
    std::size_t total_size = 0;
    for (auto* t : tensors) total_size += t->size();

    std::mt19937_64 shuffle_rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        adam.learning_rate = tcfg.learning_rate_at(epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sum_coords = 0.0, sum_heat = 0.0, sum_total = 0.0;

        for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            const std::size_t count = std::min(tcfg.batch_size, order.size() - start);
            std::vector<SampleResult> results(count);
            parallel_for(count, tcfg.workers, [&](std::size_t j) {
                const auto& rec = train_set[order[start + j]];
                if (tcfg.augment) {
                    auto rng = augment_stream(tcfg.seed, epoch, rec.id);
                    const auto aug = synth::augment(rec, tcfg.augmentation, rng);
                    results[j] = sample_gradient(params, cfg, aug.record, tcfg.heatmap_sigma);
                } else {
                    results[j] = sample_gradient(params, cfg, rec, tcfg.heatmap_sigma);
                }
            });
            std::vector<float> grad(total_size, 0.0f);
            for (const auto& r : results) {
                for (std::size_t i = 0; i < total_size; ++i) grad[i] += r.grad[i];
                sum_coords += r.loss.coords;
                sum_heat += r.loss.heatmap;
                sum_total += r.loss.total;
            }
            const float inv = 1.0f / static_cast<float>(count);
            std::size_t off = 0;
            for (auto* t : tensors) {
                auto g = t->grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad[off + i] * inv;
                off += g.size();
            }
            adam_step<float>(tensors, adam);
        }

        EpochStats stats;
        stats.epoch = epoch;
        const double n = static_cast<double>(train_set.size());
        stats.train_coords = sum_coords / n;
        stats.train_heatmap = sum_heat / n;
        stats.train_avg = sum_total / n;
        stats.val_avg = val_set.empty() ? stats.train_avg
                                        : evaluate_loss(val_set, cfg, params, tcfg.heatmap_sigma, tcfg.workers).total;
        result.history.push_back(stats);
        if (stats.val_avg < best) {
            best = stats.val_avg;
            result.best_epoch = epoch;
            result.params = params;
        }
        if (on_epoch) on_epoch(stats);
    }
    result.best_val = best;
    for (auto& [name, t] : result.params.named_tensors()) t->clear_grad();
    return result;
}

// ---- instantiations ------------------------------------------------------------------

#define KRONMARK_INSTANTIATE_NET(T)                                                                                 \
    template struct LandmarkNetParams<T>;                                                                           \
    template LandmarkNetParams<T> init_params<T>(const KpfemConfig&, std::uint64_t);                                \
    template BoundNet bind<T>(Tape<T>&, LandmarkNetParams<T>&);                                                     \
    template BoundNet bind_frozen<T>(Tape<T>&, const LandmarkNetParams<T>&);                                        \
    template Tensor<T> preprocess<T>(const Tensor<float>&);                                                         \
    template Var kpfem_forward<T>(Tape<T>&, Var, const KpfemConfig&, const BoundNet&, const ForwardOptions&);        \
    template Tensor<T> kpfem_forward<T>(const Tensor<T>&, const KpfemConfig&, const LandmarkNetParams<T>&,          \
                                        const ForwardOptions&);                                                     \
    template HeadOutputs llm_forward<T>(Tape<T>&, Var, const KpfemConfig&, const BoundNet&);                        \
    template Prediction<T> predict<T>(const Tensor<float>&, const KpfemConfig&, const LandmarkNetParams<T>&);       \
    template LandmarkSet decode_peak<T>(const Tensor<T>&, std::size_t, std::size_t);                                \
    template LandmarkSet decode_coords<T>(const Tensor<T>&, std::size_t, std::size_t);                              \
    template Tensor<T> coordinate_targets<T>(const LandmarkSet&, std::size_t, std::size_t);                         \
    template Var multitask_loss<T>(Tape<T>&, Var, Var, const Tensor<T>&, const Tensor<T>&, LossParts*);             \
    template LossParts multitask_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);

KRONMARK_INSTANTIATE_NET(float)
KRONMARK_INSTANTIATE_NET(double)

template LandmarkNetParams<double> LandmarkNetParams<float>::cast<double>() const;
template LandmarkNetParams<float> LandmarkNetParams<double>::cast<float>() const;

}  // namespace kronmark::net
