#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kronmark/autograd.hpp"
#include "kronmark/checkpoint.hpp"
#include "kronmark/digest.hpp"
#include "kronmark/kcl.hpp"
#include "kronmark/landmarks.hpp"
#include "kronmark/synth.hpp"
#include "kronmark/tensor.hpp"

namespace kronmark::net {

struct KpfemLayer {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t order = 1;
    std::size_t kernel = 3;
};

// The output of layer `from` (after its ReLU and pooling, if any) is added to
// the input of layer `to`. Layers are numbered from 1. When the channel
// counts differ the source passes through a 1x1 Kronecker projection first.
struct SkipConnection {
    std::size_t from = 0;
    std::size_t to = 0;
};

struct KpfemConfig {
    std::size_t input_size = synth::kImageSize;
    std::size_t input_channels = 3;
    std::vector<KpfemLayer> layers;
    std::vector<std::size_t> pool_after;  // layer numbers followed by 2x2 max pooling
    std::vector<SkipConnection> skips;
    std::size_t heatmap_size = synth::kHeatmapSize;
    std::size_t landmarks = kLandmarkCount;

    // 14 layers: 3->24, 24->24, 24->48, 48->48, 48->96, then 96->96; n = 3
    // everywhere; pooling after layers 2, 4, 6, 8; skips 2->4, 4->6, ..., 12->14.
    static KpfemConfig defaults();
    // defaults() with every layer order replaced by `n`.
    static KpfemConfig defaults_with_order(std::size_t n);

    // Throws ConfigError unless there are exactly 14 layers, channels chain,
    // every order divides its channel counts, and every skip joins tensors of
    // equal spatial extent.
    void validate() const;

    // [channels, height, width] produced by each layer after pooling.
    std::vector<Shape> layer_output_shapes() const;
    Shape feature_shape() const;
    // Order used for the projection of a skip whose channels differ.
    std::size_t projection_order(const SkipConnection& skip) const;
    bool needs_projection(const SkipConnection& skip) const;

    std::string to_json() const;
    static KpfemConfig from_json(const std::string& text);
    Sha256 digest() const;
};

template <typename T>
struct LandmarkNetParams {
    std::vector<KclParams<T>> layers;
    std::vector<std::optional<KclParams<T>>> projections;  // aligned with config.skips
    Tensor<T> heat_weight;   // [landmarks, C, 1, 1]
    Tensor<T> heat_bias;     // [landmarks]
    Tensor<T> coord_weight;  // [2 * landmarks, C]
    Tensor<T> coord_bias;    // [2 * landmarks]

    std::vector<std::pair<std::string, Tensor<T>*>> named_tensors();
    std::vector<std::pair<std::string, const Tensor<T>*>> named_tensors() const;
    std::size_t parameter_count() const;

    template <typename U>
    LandmarkNetParams<U> cast() const;
};

template <typename T>
LandmarkNetParams<T> init_params(const KpfemConfig& cfg, std::uint64_t seed);

Checkpoint to_checkpoint(const KpfemConfig& cfg, const LandmarkNetParams<float>& params);
// Throws CompatibilityError when the checkpoint digest differs from cfg.digest()
// and ParseError when tensors are missing or mis-shaped.
LandmarkNetParams<float> from_checkpoint(const KpfemConfig& cfg, const Checkpoint& ckpt);

// Tape handles of every parameter tensor.
struct BoundNet {
    std::vector<KclVars> layers;
    std::vector<std::optional<KclVars>> projections;
    Var heat_weight, heat_bias, coord_weight, coord_bias;
};

template <typename T>
BoundNet bind(Tape<T>& tape, LandmarkNetParams<T>& params);
// Records every parameter as a constant (inference).
template <typename T>
BoundNet bind_frozen(Tape<T>& tape, const LandmarkNetParams<T>& params);

struct ForwardOptions {
    std::vector<std::size_t> disabled_skips;  // indices into config.skips
};

// Pixel values in [0,1] mapped to (v - 0.5) / 0.25.
template <typename T>
Tensor<T> preprocess(const Tensor<float>& image);

// Backbone over a preprocessed [3, input_size, input_size] image.
template <typename T>
Var kpfem_forward(Tape<T>& tape, Var image, const KpfemConfig& cfg, const BoundNet& net,
                  const ForwardOptions& opts = {});
template <typename T>
Tensor<T> kpfem_forward(const Tensor<T>& image, const KpfemConfig& cfg, const LandmarkNetParams<T>& params,
                        const ForwardOptions& opts = {});

struct HeadOutputs {
    Var heatmaps;  // [landmarks, G, G], each channel a distribution
    Var coords;    // [landmarks, 2], normalized (x / W, y / H) in [0,1]
};

// heatmaps = spatial_softmax(conv1x1(bilinear_resize(features, G, G)))
// coords   = sigmoid(linear(global_avg_pool(features))) as [landmarks, 2]
template <typename T>
HeadOutputs llm_forward(Tape<T>& tape, Var features, const KpfemConfig& cfg, const BoundNet& net);

template <typename T>
struct Prediction {
    Tensor<T> heatmaps;
    Tensor<T> coords;
};

template <typename T>
Prediction<T> predict(const Tensor<float>& image, const KpfemConfig& cfg, const LandmarkNetParams<T>& params);

// Per channel: center of the first maximal cell in row-major order, scaled
// to the image as ((c + 0.5) * W / G, (r + 0.5) * H / G).
template <typename T>
LandmarkSet decode_peak(const Tensor<T>& heatmaps, std::size_t image_w, std::size_t image_h);

// Coordinate head output [12,2] scaled back to pixels.
template <typename T>
LandmarkSet decode_coords(const Tensor<T>& coords, std::size_t image_w, std::size_t image_h);

struct LossParts {
    double coords = 0.0;   // Euclidean distance over normalized coordinates
    double heatmap = 0.0;  // channel-mean square-rooted JSD
    double total = 0.0;    // 0.5 * (coords + heatmap)
};

// 0.5 * (channel-mean JSD(pred_heat, target_heat) + ||pred_coords - target_coords||).
// Throws ContractError when a target channel does not sum to 1 within 1e-4.
template <typename T>
Var multitask_loss(Tape<T>& tape, Var pred_heat, Var pred_coords, const Tensor<T>& target_heat,
                   const Tensor<T>& target_coords, LossParts* parts = nullptr);
template <typename T>
LossParts multitask_loss(const Tensor<T>& pred_heat, const Tensor<T>& pred_coords, const Tensor<T>& target_heat,
                         const Tensor<T>& target_coords);

// Normalized coordinate target [12,2].
template <typename T>
Tensor<T> coordinate_targets(const LandmarkSet& lm, std::size_t image_w, std::size_t image_h);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    // lr <- lr * decay_factor every decay_period epochs.
    double decay_factor = 0.1;
    std::size_t decay_period = 50;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 7;
    bool augment = true;
    synth::AugmentationConfig augmentation;
    double heatmap_sigma = 1.5;
    std::size_t workers = 0;  // 0: one per hardware thread

    // Decay read literally as a multiplication by 0.001 every 50 epochs.
    static TrainConfig literal_schedule();
    void validate() const;
    double learning_rate_at(std::size_t epoch) const;  // epoch is 1-based
};

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_coords = 0.0;
    double train_heatmap = 0.0;
    double train_avg = 0.0;
    double val_avg = 0.0;
};

struct TrainResult {
    LandmarkNetParams<float> params;  // best validation loss
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
    double best_val = 0.0;
};

// Adam on the multitask loss averaged over each mini-batch. Shuffling,
// initialization and augmentation all derive from cfg.seed; per-sample
// gradients are reduced in index order, so the result does not depend on the
// number of workers. Throws InputError for an empty training set.
TrainResult train(const std::vector<synth::SpecimenRecord>& train_set,
                  const std::vector<synth::SpecimenRecord>& val_set, const KpfemConfig& cfg,
                  const TrainConfig& tcfg, const std::function<void(const EpochStats&)>& on_epoch = {});

// Mean multitask loss (no augmentation) of `params` over `records`.
LossParts evaluate_loss(const std::vector<synth::SpecimenRecord>& records, const KpfemConfig& cfg,
                        const LandmarkNetParams<float>& params, double heatmap_sigma, std::size_t workers = 0);

// Heatmap-decoded landmarks for every record, in input order.
std::vector<LandmarkSet> predict_landmarks(const std::vector<synth::SpecimenRecord>& records, const KpfemConfig& cfg,
                                           const LandmarkNetParams<float>& params, std::size_t workers = 0);

// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware).
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace kronmark::net
