#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kronmark/checkpoint.hpp"
#include "kronmark/landmarks.hpp"
#include "kronmark/metrics.hpp"
#include "kronmark/morphometrics.hpp"
#include "kronmark/synth.hpp"
#include "kronmark/tensor.hpp"

namespace kronmark::weight {

// Fully connected ReLU network on standardized inputs. The output is
// de-standardized as target_mean + target_sd * y.
struct MlpParams {
    std::vector<std::size_t> widths;  // input, hidden..., output (= 1)
    std::vector<Tensor<double>> weights;  // [out, in]
    std::vector<Tensor<double>> biases;   // [out]
    std::vector<double> input_mean;
    std::vector<double> input_sd;
    double target_mean = 0.0;
    double target_sd = 1.0;

    std::size_t inputs() const { return widths.front(); }
    void validate() const;
};

using WrmParams = MlpParams;

inline constexpr std::array<std::size_t, 5> kWrmWidths = {morpho::kPairCount, 128, 64, 32, 1};
inline constexpr std::array<std::size_t, 4> kPixelMlpWidths = {1, 16, 16, 1};

// He-uniform weights, zero biases, identity standardization.
MlpParams init_mlp(std::span<const std::size_t> widths, std::uint64_t seed);
WrmParams init_wrm(std::uint64_t seed, std::size_t inputs = morpho::kPairCount);

// Unclamped network output.
double mlp_forward(const MlpParams& params, std::span<const double> x);

// Negative outputs are clamped to 0 and reported through the warning sink.
double wrm_forward(std::span<const double> d, const WrmParams& params);

// Receives clamping warnings. Defaults to a line on stderr.
void set_warning_sink(std::function<void(const std::string&)> sink);

struct TrainHyper {
    std::size_t epochs = 300;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    std::uint64_t seed = 7;
    // One spread for every input (root mean variance) instead of one per
    // feature, so a rotated input space trains like the original.
    bool shared_input_scale = false;
};

struct Sample {
    std::vector<double> x;
    double y = 0.0;
};

struct MlpTrainResult {
    MlpParams params;  // best validation loss
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;
};

// Adam on the mean squared error of standardized targets. Standardization
// constants come from `train`; a feature with zero spread keeps sd = 1.
// Throws InputError for an empty training set.
MlpTrainResult mlp_train(const std::vector<Sample>& train, const std::vector<Sample>& val,
                         std::span<const std::size_t> widths, const TrainHyper& hyper);

MlpTrainResult wrm_train(const std::vector<Sample>& train, const std::vector<Sample>& val, const TrainHyper& hyper);

Checkpoint to_checkpoint(const MlpParams& params);
// Throws CompatibilityError when the digest does not describe `widths`.
MlpParams from_checkpoint(const Checkpoint& ckpt, std::span<const std::size_t> widths);
Sha256 mlp_digest(std::span<const std::size_t> widths);

// Distances in millimetres.
std::vector<double> distance_features(const LandmarkSet& lm, double mm_per_px);

struct AblationRow {
    std::optional<std::size_t> components;  // nullopt: all 66 distances, no PCA
    metrics::Regression result;
    std::size_t input_width = 0;  // inputs of the WRM trained for this row
};

// One WRM per entry of `component_counts` on PCA scores fitted to the training
// part, plus one on all distances. PCA rows train with shared_input_scale set.
// Throws ContractError for a count above 66.
std::vector<AblationRow> pca_ablation(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                      const std::vector<Sample>& test, std::span<const std::size_t> component_counts,
                                      const TrainHyper& hyper);
std::vector<AblationRow> pca_ablation(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                      const std::vector<Sample>& test, const TrainHyper& hyper);

struct Segmentation {
    std::vector<std::uint8_t> mask;  // row-major, 1 = foreground
    std::size_t pixel_count = 0;
};

// Foreground = intensity > threshold on a [H,W] intensity image or the
// luminance of a [3,H,W] image.
Segmentation threshold_segment(const Tensor<float>& image, double threshold = 0.5);

struct LinearBaseline {
    double slope = 0.0;
    double intercept = 0.0;
    double predict(double count) const { return slope * count + intercept; }
};

// Ordinary least squares. Throws UndefinedMetricError when every count is equal.
LinearBaseline fit_linear_baseline(std::span<const double> counts, std::span<const double> weights);

struct MethodRow {
    std::string method;
    std::optional<metrics::Regression> result;
    std::string error;  // set when result is empty
};

inline constexpr std::array<const char*, 3> kMethodNames = {"Linear Regression", "Deep Learning-based Method",
                                                           "Proposed Approach"};

struct CompareOptions {
    double threshold = 0.5;
    TrainHyper wrm;
    TrainHyper pixel_mlp{600, 32, 3e-3, 7};
    std::size_t workers = 0;
};

// Rows in kMethodNames order: linear fit and MLP on thresholded pixel counts,
// and the WRM on landmark distances. Landmarks default to the records' own;
// pass `landmarks` (aligned with train, val, test concatenated) to use
// predictions instead. Failures of a row are reported in that row.
std::vector<MethodRow> compare_methods(const synth::Split& data, const CompareOptions& opts = {},
                                       const std::vector<LandmarkSet>* landmarks = nullptr);

std::vector<double> predict_all(const MlpParams& params, const std::vector<Sample>& samples, bool clamp = true);

}  // namespace kronmark::weight
