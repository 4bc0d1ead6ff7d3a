#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "kronmark/landmarks.hpp"
#include "kronmark/tensor.hpp"

// Procedural prawn specimens, heatmap targets, keypoint-aware augmentation
// and dataset splitting.
namespace kronmark::synth {

inline constexpr std::size_t kImageSize = 320;
inline constexpr std::size_t kHeatmapSize = 56;

struct SpecimenRecord {
    std::uint64_t id = 0;
    Tensor<float> image{Shape{3, kImageSize, kImageSize}};  // RGB in [0,1], 8-bit levels
    LandmarkSet landmarks{};                                // pixels
    double weight_g = 0.0;
    double mm_per_px = 0.0;
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

// Weight law: w = a * L^b * (1 + c * (width_scale - 1)) * (1 + noise),
// L = body length parameter in mm, noise ~ N(0, noise_sd).
struct GeneratorConfig {
    Range length_mm{110.0, 170.0};
    Range curvature{-0.10, 0.30};    // spine arch height as a fraction of length
    Range width_scale{0.88, 1.12};   // multiplier on every segment height
    Range tilt_deg{-8.0, 8.0};
    double center_jitter_px = 18.0;
    // Dorsal-to-ventral heights as fractions of length.
    double carapace_height = 0.13;
    double first_segment_height = 0.12;
    double third_segment_height = 0.105;
    double last_segment_height = 0.075;
    double allometric_a = 9.0e-6;
    double allometric_b = 3.0;
    double width_coupling = 0.4;
    double noise_sd = 0.03;
    double mm_per_px = 0.65;
    Range lighting{0.72, 1.12};      // global gain on body and clutter brightness
    std::size_t max_clutter = 6;     // bright background debris blobs
    std::uint64_t seed = 7;
};

// Throws ConfigError on empty ranges, a <= 0 or b outside [2.5, 3.5].
void validate(const GeneratorConfig& cfg);

// Weight of a specimen of length `length_mm` and segment-height multiplier
// `width_scale`, before multiplicative noise.
double allometric_weight(const GeneratorConfig& cfg, double length_mm, double width_scale);

// Independent stream for record `id` of a dataset generated with `seed`.
std::mt19937_64 record_stream(std::uint64_t seed, std::uint64_t id);

// Renders one side-view specimen, head pointing left, over a textured
// background. Draws from `rng` in a fixed order.
SpecimenRecord generate_specimen(std::mt19937_64& rng, const GeneratorConfig& cfg, std::uint64_t id = 0);

// Record `id` of the dataset `cfg.seed`; identical regardless of the order
// in which records are produced.
SpecimenRecord generate_record(const GeneratorConfig& cfg, std::uint64_t id);
std::vector<SpecimenRecord> generate_dataset(const GeneratorConfig& cfg, std::size_t count);

// Shape parameters behind a record, exposed for tests of the weight law.
struct SpecimenTraits {
    double length_mm = 0.0;
    double curvature = 0.0;
    double width_scale = 1.0;
    double noise = 0.0;
};
SpecimenRecord generate_specimen(std::mt19937_64& rng, const GeneratorConfig& cfg, std::uint64_t id,
                                 SpecimenTraits* traits);

// One Gaussian per landmark on a grid x grid map, normalized to sum 1.
// Landmark (x, y) in an image of width W and height H sits at grid
// coordinate (x * grid / W, y * grid / H); cell (r, c) has its center at
// grid coordinate (c + 0.5, r + 0.5). sigma is in cells.
// Throws ContractError for sigma <= 0 or a landmark outside [0,W] x [0,H].
Tensor<double> make_heatmap_targets(std::span<const Point> landmarks, double sigma, std::size_t image_w = kImageSize,
                                    std::size_t image_h = kImageSize, std::size_t grid = kHeatmapSize);

struct AugmentationConfig {
    double hflip_p = 0.5;
    double vflip_p = 0.5;
    double shift_scale_p = 0.5;
    double shift_limit = 0.0625;  // fraction of the image extent
    double scale_limit = 0.20;    // scale factor drawn from [1 - limit, 1 + limit]
    double rotate_p = 0.5;
    double rotate_limit_deg = 20.0;
    double blur_p = 0.3;          // one 3x3 box blur
    double rgb_shift_p = 0.3;
    double rgb_shift_limit = 25.0 / 255.0;
};

void validate(const AugmentationConfig& cfg);

// x' = m00 x + m01 y + tx, y' = m10 x + m11 y + ty in pixel coordinates.
struct Affine {
    double m00 = 1, m01 = 0, tx = 0;
    double m10 = 0, m11 = 1, ty = 0;

    Point apply(Point p) const { return {m00 * p.x + m01 * p.y + tx, m10 * p.x + m11 * p.y + ty}; }
    // this after other
    Affine compose(const Affine& other) const;
    Affine inverse() const;

    static Affine hflip(std::size_t width);
    static Affine vflip(std::size_t height);
    // Rotation by `deg` (clockwise on screen, since y points down) and uniform scaling
    // about the image center, followed by a shift.
    static Affine about_center(std::size_t width, std::size_t height, double deg, double scale, double shift_x,
                               double shift_y);
};

struct Augmented {
    SpecimenRecord record;
    Affine transform;            // applied to image and landmarks
    bool clamped = false;        // some landmark left the frame and was pulled back
    bool blurred = false;
    std::array<double, 3> rgb_shift{};
};

// Applies a random subset of the configured transforms. Geometric
// transforms are composed into one affine map; the image is resampled
// bilinearly with edge replication and landmarks are mapped forward.
Augmented augment(const SpecimenRecord& rec, const AugmentationConfig& cfg, std::mt19937_64& rng);

// Applies `transform` to the image and landmarks of `rec` without any
// photometric change.
SpecimenRecord warp(const SpecimenRecord& rec, const Affine& transform, bool* clamped = nullptr);

struct Split {
    std::vector<SpecimenRecord> train, val, test;
};

// Part sizes for `n` items under `fractions`: floors of n*f, with the
// leftover items handed out by largest remainder (earlier part wins ties).
std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> fractions);

// Seeded shuffle followed by a contiguous partition. Throws InputError for
// fewer than 3 records and ContractError when fractions do not sum to 1.
Split split(std::vector<SpecimenRecord> records, std::array<double, 3> fractions = {0.4, 0.2, 0.4},
            std::uint64_t seed = 7);
// Index-only form of split(): positions into the original sequence.
std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, std::array<double, 3> fractions,
                                                      std::uint64_t seed);

// Luminance 0.299 R + 0.587 G + 0.114 B of a [3,H,W] image, as [H,W].
Tensor<float> luminance(const Tensor<float>& rgb);

}  // namespace kronmark::synth
