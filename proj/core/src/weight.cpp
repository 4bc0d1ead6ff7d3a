#include "kronmark/weight.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>

#include <json.hpp>

#include "kronmark/adam.hpp"
#include "kronmark/autograd.hpp"
#include "kronmark/digest.hpp"
#include "kronmark/errors.hpp"
#include "kronmark/landmark_net.hpp"
#include "kronmark/ops.hpp"

namespace kronmark::weight {

namespace {

std::mutex sink_mutex;
std::function<void(const std::string&)> warning_sink = [](const std::string& msg) {
    std::clog << "warning: " << msg << '\n';
};

void warn(const std::string& msg) {
    std::lock_guard lock(sink_mutex);
    if (warning_sink) warning_sink(msg);
}

}  // namespace

void set_warning_sink(std::function<void(const std::string&)> sink) {
    std::lock_guard lock(sink_mutex);
    warning_sink = std::move(sink);
}

void MlpParams::validate() const {
    if (widths.size() < 2 || widths.back() != 1) throw ConfigError("mlp: need an input width and a single output");
    if (weights.size() != widths.size() - 1 || biases.size() != weights.size()) throw ConfigError("mlp: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].shape() != Shape{widths[l + 1], widths[l]} || biases[l].shape() != Shape{widths[l + 1]}) {
            throw ConfigError("mlp: layer " + std::to_string(l + 1) + " does not chain");
        }
    }
    if (input_mean.size() != widths[0] || input_sd.size() != widths[0]) throw ConfigError("mlp: standardization size mismatch");
    for (double s : input_sd)
        if (!(s > 0.0)) throw ConfigError("mlp: standardization sd must be > 0");
    if (!(target_sd > 0.0)) throw ConfigError("mlp: target sd must be > 0");
}

MlpParams init_mlp(std::span<const std::size_t> widths, std::uint64_t seed) {
    MlpParams p;
    p.widths.assign(widths.begin(), widths.end());
    if (p.widths.size() < 2 || p.widths.back() != 1) throw ConfigError("mlp: need an input width and a single output");
    for (std::size_t w : p.widths)
        if (w == 0) throw ConfigError("mlp: widths must be positive");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
        const std::size_t in = p.widths[l], out = p.widths[l + 1];
        const double bound = std::sqrt(6.0 / static_cast<double>(in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Tensor<double> w(Shape{out, in});
        for (auto& v : w.data()) v = dist(rng);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(Shape{out});
    }
    p.input_mean.assign(p.widths[0], 0.0);
    p.input_sd.assign(p.widths[0], 1.0);
    return p;
}

WrmParams init_wrm(std::uint64_t seed, std::size_t inputs) {
    std::array<std::size_t, 5> w = kWrmWidths;
    w[0] = inputs;
    return init_mlp(w, seed);
}

double mlp_forward(const MlpParams& params, std::span<const double> x) {
    if (x.size() != params.inputs()) {
        throw DimensionError("mlp_forward: expected " + std::to_string(params.inputs()) + " inputs, got " +
                             std::to_string(x.size()));
    }
    std::vector<double> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = (x[i] - params.input_mean[i]) / params.input_sd[i];
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        const auto& w = params.weights[l];
        const std::size_t out = w.extent(0), in = w.extent(1);
        std::vector<double> next(out);
        for (std::size_t o = 0; o < out; ++o) {
            double acc = params.biases[l][o];
            for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * a[i];
            next[o] = (l + 1 < params.weights.size()) ? std::max(acc, 0.0) : acc;
        }
        a = std::move(next);
    }
    return params.target_mean + params.target_sd * a[0];
}

double wrm_forward(std::span<const double> d, const WrmParams& params) {
    const double y = mlp_forward(params, d);
    if (y < 0.0) {
        warn("weight prediction " + std::to_string(y) + " g clamped to 0");
        return 0.0;
    }
    return y;
}

std::vector<double> predict_all(const MlpParams& params, const std::vector<Sample>& samples, bool clamp) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(clamp ? wrm_forward(s.x, params) : mlp_forward(params, s.x));
    return out;
}

namespace {

Tensor<double> batch_inputs(const std::vector<Sample>& data, std::span<const std::size_t> idx, const MlpParams& p) {
    const std::size_t m = p.inputs();
    Tensor<double> x(Shape{idx.size(), m});
    for (std::size_t b = 0; b < idx.size(); ++b)
        for (std::size_t i = 0; i < m; ++i) x[b * m + i] = (data[idx[b]].x[i] - p.input_mean[i]) / p.input_sd[i];
    return x;
}

Tensor<double> batch_targets(const std::vector<Sample>& data, std::span<const std::size_t> idx, const MlpParams& p) {
    Tensor<double> y(Shape{idx.size(), 1});
    for (std::size_t b = 0; b < idx.size(); ++b) y[b] = (data[idx[b]].y - p.target_mean) / p.target_sd;
    return y;
}

// Mean squared error in standardized units over a whole set.
double standardized_mse(const MlpParams& p, const std::vector<Sample>& data) {
    if (data.empty()) return 0.0;
    double s = 0.0;
    for (const auto& d : data) {
        const double e = (mlp_forward(p, d.x) - d.y) / p.target_sd;
        s += e * e;
    }
    return s / static_cast<double>(data.size());
}

void check_samples(const std::vector<Sample>& data, std::size_t m, const char* what) {
    for (const auto& s : data) {
        if (s.x.size() != m) {
            throw DimensionError(std::string(what) + ": sample has " + std::to_string(s.x.size()) + " features, expected " +
                                 std::to_string(m));
        }
    }
}

}  // namespace

MlpTrainResult mlp_train(const std::vector<Sample>& train, const std::vector<Sample>& val,
                         std::span<const std::size_t> widths, const TrainHyper& hyper) {
    if (train.empty()) throw InputError("mlp_train: empty training set");
    if (hyper.epochs == 0 || hyper.batch_size == 0 || !(hyper.learning_rate > 0.0)) {
        throw ConfigError("mlp_train: epochs, batch size and learning rate must be positive");
    }
    MlpParams p = init_mlp(widths, hyper.seed);
    const std::size_t m = p.inputs();
    check_samples(train, m, "mlp_train");
    check_samples(val, m, "mlp_train");

    const double n = static_cast<double>(train.size());
    double pooled_var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double mu = 0.0, var = 0.0;
        for (const auto& s : train) mu += s.x[i];
        mu /= n;
        for (const auto& s : train) var += (s.x[i] - mu) * (s.x[i] - mu);
        const double sd = std::sqrt(var / n);
        p.input_mean[i] = mu;
        p.input_sd[i] = sd > 0.0 ? sd : 1.0;
        pooled_var += var / n;
    }
    if (hyper.shared_input_scale) {
        const double sd = std::sqrt(pooled_var / static_cast<double>(m));
        std::fill(p.input_sd.begin(), p.input_sd.end(), sd > 0.0 ? sd : 1.0);
    }
    double ymu = 0.0, yvar = 0.0;
    for (const auto& s : train) ymu += s.y;
    ymu /= n;
    for (const auto& s : train) yvar += (s.y - ymu) * (s.y - ymu);
    p.target_mean = ymu;
    p.target_sd = yvar > 0.0 ? std::sqrt(yvar / n) : 1.0;

    AdamState<double> adam;
    adam.learning_rate = hyper.learning_rate;
    std::vector<Tensor<double>*> tensors;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        tensors.push_back(&p.weights[l]);
        tensors.push_back(&p.biases[l]);
    }

    MlpTrainResult result;
    std::mt19937_64 rng(hyper.seed ^ 0xabcdef12345ULL);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 1; epoch <= hyper.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += hyper.batch_size) {
            const std::size_t count = std::min(hyper.batch_size, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, count);
            for (auto* t : tensors) t->zero_grad();
            Tape<double> tape;
            Var a = tape.constant(batch_inputs(train, idx, p));
            for (std::size_t l = 0; l < p.weights.size(); ++l) {
                a = ops::linear(tape, a, tape.parameter(p.weights[l]), tape.parameter(p.biases[l]));
                if (l + 1 < p.weights.size()) a = ops::relu(tape, a);
            }
            tape.backward(ops::mse_loss(tape, a, batch_targets(train, idx, p)));
            adam_step<double>(tensors, adam);
        }
        const double tl = standardized_mse(p, train);
        const double vl = val.empty() ? tl : standardized_mse(p, val);
        result.train_loss.push_back(tl);
        result.val_loss.push_back(vl);
        if (vl < best) {
            best = vl;
            result.best_epoch = epoch;
            result.params = p;
        }
    }
    for (auto& w : result.params.weights) w.clear_grad();
    for (auto& b : result.params.biases) b.clear_grad();
    return result;
}

MlpTrainResult wrm_train(const std::vector<Sample>& train, const std::vector<Sample>& val, const TrainHyper& hyper) {
    if (train.empty()) throw InputError("wrm_train: empty training set");
    std::array<std::size_t, 5> w = kWrmWidths;
    w[0] = train.front().x.size();
    return mlp_train(train, val, w, hyper);
}

Sha256 mlp_digest(std::span<const std::size_t> widths) {
    nlohmann::ordered_json j;
    j["model"] = "mlp";
    j["widths"] = std::vector<std::size_t>(widths.begin(), widths.end());
    return sha256(j.dump());
}

Checkpoint to_checkpoint(const MlpParams& params) {
    params.validate();
    Checkpoint ck;
    ck.config_digest = mlp_digest(params.widths);
    for (std::size_t l = 0; l < params.weights.size(); ++l) {
        ck.tensors.push_back({"fc" + std::to_string(l + 1) + ".weight", params.weights[l].cast<float>()});
        ck.tensors.push_back({"fc" + std::to_string(l + 1) + ".bias", params.biases[l].cast<float>()});
    }
    const std::size_t m = params.inputs();
    Tensor<float> stats(Shape{2, m});
    for (std::size_t i = 0; i < m; ++i) {
        stats[i] = static_cast<float>(params.input_mean[i]);
        stats[m + i] = static_cast<float>(params.input_sd[i]);
    }
    ck.tensors.push_back({"input.standardization", stats});
    ck.tensors.push_back({"target.standardization",
                          Tensor<float>(Shape{2}, std::vector<float>{static_cast<float>(params.target_mean),
                                                                      static_cast<float>(params.target_sd)})});
    return ck;
}

MlpParams from_checkpoint(const Checkpoint& ckpt, std::span<const std::size_t> widths) {
    if (ckpt.config_digest != mlp_digest(widths)) throw CompatibilityError("checkpoint does not describe this network");
    MlpParams p = init_mlp(widths, 0);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        const auto& w = ckpt.at("fc" + std::to_string(l + 1) + ".weight");
        const auto& b = ckpt.at("fc" + std::to_string(l + 1) + ".bias");
        if (w.shape() != p.weights[l].shape() || b.shape() != p.biases[l].shape()) {
            throw ParseError("checkpoint: layer " + std::to_string(l + 1) + " has wrong shape", 0);
        }
        p.weights[l] = w.cast<double>();
        p.biases[l] = b.cast<double>();
    }
    const auto& stats = ckpt.at("input.standardization");
    const std::size_t m = p.inputs();
    if (stats.shape() != Shape{2, m}) throw ParseError("checkpoint: bad standardization block", 0);
    for (std::size_t i = 0; i < m; ++i) {
        p.input_mean[i] = stats[i];
        p.input_sd[i] = stats[m + i];
    }
    const auto& t = ckpt.at("target.standardization");
    if (t.size() != 2) throw ParseError("checkpoint: bad target block", 0);
    p.target_mean = t[0];
    p.target_sd = t[1];
    p.validate();
    return p;
}

std::vector<double> distance_features(const LandmarkSet& lm, double mm_per_px) {
    if (!(mm_per_px > 0.0)) throw ContractError("distance_features: mm_per_px must be > 0");
    const auto d = morpho::distance_matrix(lm);
    std::vector<double> out(d.begin(), d.end());
    for (auto& v : out) v *= mm_per_px;
    return out;
}

namespace {

std::vector<Sample> project_samples(const morpho::PcaResult& pc, const std::vector<Sample>& data) {
    morpho::Matrix m(data.size(), pc.mean.size());
    for (std::size_t r = 0; r < data.size(); ++r) std::copy(data[r].x.begin(), data[r].x.end(), m.data.begin() + r * m.cols);
    const morpho::Matrix s = pc.project(m);
    std::vector<Sample> out(data.size());
    for (std::size_t r = 0; r < data.size(); ++r) {
        out[r].x.assign(s.data.begin() + r * s.cols, s.data.begin() + (r + 1) * s.cols);
        out[r].y = data[r].y;
    }
    return out;
}

metrics::Regression score(const MlpParams& p, const std::vector<Sample>& test) {
    std::vector<double> truth;
    for (const auto& s : test) truth.push_back(s.y);
    return metrics::regression_metrics(predict_all(p, test), truth);
}

}  // namespace

std::vector<AblationRow> pca_ablation(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                      const std::vector<Sample>& test, std::span<const std::size_t> component_counts,
                                      const TrainHyper& hyper) {
    if (train.empty() || test.empty()) throw InputError("pca_ablation: empty training or test set");
    const std::size_t features = train.front().x.size();
    for (std::size_t n : component_counts) {
        if (n == 0 || n > features) {
            throw ContractError("pca_ablation: component count " + std::to_string(n) + " outside [1, " +
                                std::to_string(features) + "]");
        }
    }
    morpho::Matrix m(train.size(), features);
    for (std::size_t r = 0; r < train.size(); ++r) std::copy(train[r].x.begin(), train[r].x.end(), m.data.begin() + r * features);

    TrainHyper rotated = hyper;
    rotated.shared_input_scale = true;
    std::vector<AblationRow> rows;
    for (std::size_t n : component_counts) {
        const morpho::PcaResult pc = morpho::pca(m, n);
        const auto tr = project_samples(pc, train), va = project_samples(pc, val), te = project_samples(pc, test);
        const auto fit = wrm_train(tr, va, rotated);
        rows.push_back({n, score(fit.params, te), fit.params.inputs()});
    }
    const auto full = wrm_train(train, val, hyper);
    rows.push_back({std::nullopt, score(full.params, test), full.params.inputs()});
    return rows;
}

std::vector<AblationRow> pca_ablation(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                      const std::vector<Sample>& test, const TrainHyper& hyper) {
    const std::array<std::size_t, 3> counts = {2, 5, 10};
    return pca_ablation(train, val, test, counts, hyper);
}

Segmentation threshold_segment(const Tensor<float>& image, double threshold) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ContractError("threshold_segment: threshold must lie in [0,1]");
    const Tensor<float> gray = image.rank() == 3 ? synth::luminance(image) : image;
    if (gray.rank() != 2) throw DimensionError("threshold_segment: expected [H,W] or [3,H,W], got " + shape_string(image.shape()));
    Segmentation s;
    s.mask.resize(gray.size());
    for (std::size_t i = 0; i < gray.size(); ++i) {
        s.mask[i] = static_cast<double>(gray[i]) > threshold ? 1 : 0;
        s.pixel_count += s.mask[i];
    }
    return s;
}

LinearBaseline fit_linear_baseline(std::span<const double> counts, std::span<const double> weights) {
    if (counts.size() != weights.size()) throw DimensionError("fit_linear_baseline: length mismatch");
    if (counts.size() < 2) throw InputError("fit_linear_baseline: need at least two points");
    const double n = static_cast<double>(counts.size());
    const double mx = std::accumulate(counts.begin(), counts.end(), 0.0) / n;
    const double my = std::accumulate(weights.begin(), weights.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        sxx += (counts[i] - mx) * (counts[i] - mx);
        sxy += (counts[i] - mx) * (weights[i] - my);
    }
    if (sxx == 0.0) throw UndefinedMetricError("fit_linear_baseline: all counts are equal; the fit is singular");
    LinearBaseline b;
    b.slope = sxy / sxx;
    b.intercept = my - b.slope * mx;
    return b;
}

std::vector<MethodRow> compare_methods(const synth::Split& data, const CompareOptions& opts,
                                       const std::vector<LandmarkSet>* landmarks) {
    const std::array<const std::vector<synth::SpecimenRecord>*, 3> parts = {&data.train, &data.val, &data.test};
    const std::size_t total = data.train.size() + data.val.size() + data.test.size();
    if (landmarks && landmarks->size() != total) throw DimensionError("compare_methods: landmark count does not match records");

    std::vector<const synth::SpecimenRecord*> all;
    for (const auto* part : parts)
        for (const auto& r : *part) all.push_back(&r);
    std::vector<double> counts(all.size());
    net::parallel_for(all.size(), opts.workers, [&](std::size_t i) {
        counts[i] = static_cast<double>(threshold_segment(all[i]->image, opts.threshold).pixel_count);
    });

    std::array<std::vector<Sample>, 3> pixel, dist;
    std::size_t k = 0;
    for (std::size_t p = 0; p < 3; ++p) {
        for (const auto& r : *parts[p]) {
            const LandmarkSet& lm = landmarks ? (*landmarks)[k] : r.landmarks;
            pixel[p].push_back({{counts[k]}, r.weight_g});
            dist[p].push_back({distance_features(lm, r.mm_per_px), r.weight_g});
            ++k;
        }
    }
    std::vector<double> truth;
    for (const auto& s : pixel[2]) truth.push_back(s.y);

    std::vector<MethodRow> rows;
    auto run = [&](const char* name, const std::function<std::vector<double>()>& predict) {
        MethodRow row{name, std::nullopt, {}};
        try {
            row.result = metrics::regression_metrics(predict(), truth);
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    };
    run(kMethodNames[0], [&] {
        std::vector<double> x, y;
        for (const auto& s : pixel[0]) {
            x.push_back(s.x[0]);
            y.push_back(s.y);
        }
        const LinearBaseline b = fit_linear_baseline(x, y);
        std::vector<double> pred;
        for (const auto& s : pixel[2]) pred.push_back(b.predict(s.x[0]));
        return pred;
    });
    run(kMethodNames[1], [&] {
        const auto fit = mlp_train(pixel[0], pixel[1], kPixelMlpWidths, opts.pixel_mlp);
        return predict_all(fit.params, pixel[2]);
    });
    run(kMethodNames[2], [&] {
        const auto fit = wrm_train(dist[0], dist[1], opts.wrm);
        return predict_all(fit.params, dist[2]);
    });
    return rows;
}

}  // namespace kronmark::weight
