#include "kronmark/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "kronmark/errors.hpp"

namespace kronmark::synth {
namespace {

using Color = std::array<double, 3>;

class Canvas {
   public:
    Canvas(std::size_t w, std::size_t h) : w_(w), h_(h), px_(3 * w * h, 0.0) {}

    std::size_t width() const { return w_; }
    std::size_t height() const { return h_; }
    double& at(std::size_t c, std::size_t y, std::size_t x) { return px_[(c * h_ + y) * w_ + x]; }

    void blend(std::size_t y, std::size_t x, const Color& col, double alpha = 1.0) {
        for (std::size_t c = 0; c < 3; ++c) {
            double& v = at(c, y, x);
            v = (1.0 - alpha) * v + alpha * col[c];
        }
    }

    // Even-odd scanline fill, sampling pixel (x, y) at its integer center.
    void fill_polygon(const std::vector<Point>& poly, const Color& col) {
        std::vector<double> xs;
        for (std::size_t y = 0; y < h_; ++y) {
            const double sy = static_cast<double>(y);
            xs.clear();
            for (std::size_t i = 0; i < poly.size(); ++i) {
                const Point& a = poly[i];
                const Point& b = poly[(i + 1) % poly.size()];
                if ((a.y <= sy && b.y > sy) || (b.y <= sy && a.y > sy)) {
                    xs.push_back(a.x + (sy - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            std::sort(xs.begin(), xs.end());
            for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
                const double lo = std::max(0.0, std::ceil(xs[k]));
                const double hi = std::min(static_cast<double>(w_ - 1), std::floor(xs[k + 1]));
                for (double x = lo; x <= hi; x += 1.0) blend(y, static_cast<std::size_t>(x), col);
            }
        }
    }

    void stroke(Point a, Point b, double width, const Color& col, double alpha = 1.0) {
        const double r = width / 2.0;
        const auto [x0, x1] = clamp_span(std::min(a.x, b.x) - r, std::max(a.x, b.x) + r, w_);
        const auto [y0, y1] = clamp_span(std::min(a.y, b.y) - r, std::max(a.y, b.y) + r, h_);
        const double dx = b.x - a.x, dy = b.y - a.y;
        const double len2 = std::max(dx * dx + dy * dy, 1e-12);
        for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x) {
                const double px = static_cast<double>(x) - a.x, py = static_cast<double>(y) - a.y;
                const double t = std::clamp((px * dx + py * dy) / len2, 0.0, 1.0);
                const double ex = px - t * dx, ey = py - t * dy;
                if (ex * ex + ey * ey <= r * r) blend(y, x, col, alpha);
            }
    }

    void disk(Point c, double r, const Color& col, double alpha = 1.0) { stroke(c, c, 2.0 * r, col, alpha); }

   private:
    static std::pair<std::size_t, std::size_t> clamp_span(double lo, double hi, std::size_t n) {
        const double a = std::clamp(std::floor(lo), 0.0, static_cast<double>(n));
        const double b = std::clamp(std::ceil(hi) + 1.0, 0.0, static_cast<double>(n));
        return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
    }

    std::size_t w_, h_;
    std::vector<double> px_;
};

double uniform(std::mt19937_64& rng, Range r) {
    return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

// Body-axis positions (0 = head tip, 1 = tail tip).
constexpr double kJunction = 0.40;
constexpr double kSegment = 0.075;
constexpr double kTailStart = kJunction + 6 * kSegment;  // 0.85
constexpr double kMidCarapace = 0.26;

double segment_mid(int segment) { return kJunction + (segment - 0.5) * kSegment; }

struct HeightProfile {
    std::vector<std::pair<double, double>> knots;  // (u, height fraction of length)

    double at(double u) const {
        if (u <= knots.front().first) return knots.front().second;
        for (std::size_t i = 1; i < knots.size(); ++i) {
            if (u <= knots[i].first) {
                const auto [u0, h0] = knots[i - 1];
                const auto [u1, h1] = knots[i];
                return h0 + (h1 - h0) * (u - u0) / (u1 - u0);
            }
        }
        return knots.back().second;
    }
};

HeightProfile make_profile(const GeneratorConfig& cfg, double ws) {
    const double car = cfg.carapace_height * ws;
    const double s1 = cfg.first_segment_height * ws;
    const double s3 = cfg.third_segment_height * ws;
    const double s6 = cfg.last_segment_height * ws;
    return HeightProfile{{{0.0, 0.0},
                          {0.04, 0.30 * car},
                          {0.12, 0.65 * car},
                          {0.22, car},
                          {0.33, car},
                          {kJunction, 0.5 * (car + s1)},
                          {segment_mid(1), s1},
                          {segment_mid(3), s3},
                          {segment_mid(6), s6},
                          {kTailStart, 0.8 * s6},
                          {0.93, 0.95 * s6},
                          {1.0, 0.25 * s6}}};
}

struct Pose {
    double length_px, curvature, tilt_rad, cx, cy;

    // Spine point and unit dorsal normal at body position u.
    std::pair<Point, Point> frame(double u) const {
        const double mean_arch = curvature * length_px * 2.0 / 3.0;
        const double lx = (u - 0.5) * length_px;
        const double ly = -curvature * length_px * 4.0 * u * (1.0 - u) + mean_arch;
        double tx = length_px, ty = -curvature * length_px * 4.0 * (1.0 - 2.0 * u);
        const double tn = std::hypot(tx, ty);
        tx /= tn;
        ty /= tn;
        const double c = std::cos(tilt_rad), s = std::sin(tilt_rad);
        const Point p{cx + c * lx - s * ly, cy + s * lx + c * ly};
        const Point t{c * tx - s * ty, s * tx + c * ty};
        return {p, Point{t.y, -t.x}};
    }
};

Point offset(Point p, Point n, double d) { return {p.x + n.x * d, p.y + n.y * d}; }

Color scaled(const Color& c, double k) { return {c[0] * k, c[1] * k, c[2] * k}; }

}  // namespace

void validate(const GeneratorConfig& cfg) {
    for (const Range& r : {cfg.length_mm, cfg.curvature, cfg.width_scale, cfg.tilt_deg, cfg.lighting}) {
        if (!(r.lo <= r.hi)) throw ConfigError("generator: empty range");
    }
    if (cfg.length_mm.lo <= 0.0) throw ConfigError("generator: lengths must be positive");
    if (!(cfg.allometric_a > 0.0)) throw ConfigError("generator: allometric a must be > 0");
    if (cfg.allometric_b < 2.5 || cfg.allometric_b > 3.5) throw ConfigError("generator: allometric b must lie in [2.5, 3.5]");
    if (!(cfg.mm_per_px > 0.0)) throw ConfigError("generator: mm_per_px must be > 0");
    if (cfg.noise_sd < 0.0) throw ConfigError("generator: noise_sd must be >= 0");
}

double allometric_weight(const GeneratorConfig& cfg, double length_mm, double width_scale) {
    return cfg.allometric_a * std::pow(length_mm, cfg.allometric_b) * (1.0 + cfg.width_coupling * (width_scale - 1.0));
}

std::mt19937_64 record_stream(std::uint64_t seed, std::uint64_t id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32), 0x6b6dU};
    return std::mt19937_64(seq);
}

SpecimenRecord generate_specimen(std::mt19937_64& rng, const GeneratorConfig& cfg, std::uint64_t id) {
    return generate_specimen(rng, cfg, id, nullptr);
}

SpecimenRecord generate_specimen(std::mt19937_64& rng, const GeneratorConfig& cfg, std::uint64_t id,
                                 SpecimenTraits* traits) {
    validate(cfg);
    const std::size_t size = kImageSize;
    const double center = (static_cast<double>(size) - 1.0) / 2.0;

    // Every draw happens unconditionally and in this order.
    const double length_mm = uniform(rng, cfg.length_mm);
    const double curvature = uniform(rng, cfg.curvature);
    const double ws = uniform(rng, cfg.width_scale);
    const double tilt = uniform(rng, cfg.tilt_deg) * std::numbers::pi / 180.0;
    const double jx = uniform(rng, {-cfg.center_jitter_px, cfg.center_jitter_px});
    const double jy = uniform(rng, {-cfg.center_jitter_px, cfg.center_jitter_px});
    const double light = uniform(rng, cfg.lighting);
    const double noise = cfg.noise_sd > 0.0 ? std::normal_distribution<double>(0.0, cfg.noise_sd)(rng) : 0.0;
    const double grad_angle = uniform(rng, {0.0, 2.0 * std::numbers::pi});
    const double grad_depth = uniform(rng, {0.0, 0.25});
    const Color bg{uniform(rng, {0.14, 0.22}), uniform(rng, {0.18, 0.26}), uniform(rng, {0.22, 0.30})};
    std::array<std::array<double, 4>, 3> waves{};
    for (auto& w : waves) w = {uniform(rng, {0.01, 0.06}), uniform(rng, {0.0, 2.0 * std::numbers::pi}),
                               uniform(rng, {0.0, std::numbers::pi}), uniform(rng, {0.0, 0.05})};
    const std::size_t clutter = std::uniform_int_distribution<std::size_t>(0, cfg.max_clutter)(rng);

    const Pose pose{length_mm / cfg.mm_per_px, curvature, tilt, center + jx, center + jy};
    const HeightProfile profile = make_profile(cfg, ws);

    Canvas canvas(size, size);
    const double gx = std::cos(grad_angle), gy = std::sin(grad_angle);
    auto shade = [&](double x, double y) {
        return 1.0 + grad_depth * ((x - center) * gx + (y - center) * gy) / static_cast<double>(size);
    };
    std::normal_distribution<double> grain(0.0, 0.02);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double tex = 0.0;
            for (const auto& [freq, phase, dir, amp] : waves)
                tex += amp * std::sin(freq * (std::cos(dir) * x + std::sin(dir) * y) + phase);
            const double k = shade(x, y);
            for (std::size_t c = 0; c < 3; ++c) canvas.at(c, y, x) = k * (bg[c] + tex) + grain(rng);
        }

    for (std::size_t i = 0; i < clutter; ++i) {
        const Point c{uniform(rng, {0.0, size - 1.0}), uniform(rng, {0.0, size - 1.0})};
        const double r = uniform(rng, {3.0, 9.0});
        const double b = uniform(rng, {0.65, 0.9}) * light;
        canvas.disk(c, r, {b, b * 0.97, b * 0.9});
    }

    constexpr int kSteps = 240;
    auto edge_points = [&](double u0, double u1, double side) {
        std::vector<Point> pts;
        const int n = std::max(2, static_cast<int>(kSteps * (u1 - u0)));
        for (int i = 0; i <= n; ++i) {
            const double u = u0 + (u1 - u0) * i / n;
            auto [p, nrm] = pose.frame(u);
            pts.push_back(offset(p, nrm, side * 0.5 * profile.at(u) * pose.length_px));
        }
        return pts;
    };
    auto outline = [&](double u0, double u1) {
        std::vector<Point> poly = edge_points(u0, u1, +1.0);
        std::vector<Point> ventral = edge_points(u0, u1, -1.0);
        poly.insert(poly.end(), ventral.rbegin(), ventral.rend());
        return poly;
    };
    auto [mid_p, mid_n] = pose.frame(0.5);
    const Color body = scaled({0.80, 0.74, 0.62}, light * shade(mid_p.x, mid_p.y));
    const Color carapace = scaled({0.72, 0.70, 0.60}, light * shade(mid_p.x, mid_p.y));
    const Color tail = scaled({0.62, 0.56, 0.48}, light * shade(mid_p.x, mid_p.y));
    const Color band{0.22, 0.20, 0.19};

    // Pleopods under the abdomen.
    for (double u : {0.45, 0.52, 0.60, 0.67, 0.74}) {
        auto [p, nrm] = pose.frame(u);
        const Point root = offset(p, nrm, -0.5 * profile.at(u) * pose.length_px);
        auto [q, qn] = pose.frame(u + 0.03);
        const Point tip = offset(q, qn, -(0.5 * profile.at(u) + 0.05) * pose.length_px);
        canvas.stroke(root, tip, 2.0, scaled(body, 0.85));
    }
    canvas.fill_polygon(outline(0.0, 1.0), body);
    canvas.fill_polygon(outline(0.03, kJunction), carapace);
    canvas.fill_polygon(outline(kTailStart, 1.0), tail);
    for (int s = 0; s <= 6; ++s) {
        const double u = kJunction + s * kSegment;
        auto [p, nrm] = pose.frame(u);
        const double half = 0.5 * profile.at(u) * pose.length_px;
        canvas.stroke(offset(p, nrm, half), offset(p, nrm, -half), 2.5, band);
    }
    {
        auto [p, nrm] = pose.frame(0.10);
        canvas.disk(offset(p, nrm, 0.12 * profile.at(0.10) * pose.length_px), 0.012 * pose.length_px + 1.0,
                    {0.05, 0.05, 0.06});
    }

    SpecimenRecord rec;
    rec.id = id;
    rec.mm_per_px = cfg.mm_per_px;
    rec.weight_g = std::max(allometric_weight(cfg, length_mm, ws) * (1.0 + noise), 1e-3);
    auto& img = rec.image;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < size; ++y)
            for (std::size_t x = 0; x < size; ++x) {
                const double v = std::clamp(canvas.at(c, y, x), 0.0, 1.0);
                img[(c * size + y) * size + x] = static_cast<float>(std::round(v * 255.0) / 255.0);
            }

    auto dorsal = [&](double u) {
        auto [p, nrm] = pose.frame(u);
        return offset(p, nrm, 0.5 * profile.at(u) * pose.length_px);
    };
    auto ventral = [&](double u) {
        auto [p, nrm] = pose.frame(u);
        return offset(p, nrm, -0.5 * profile.at(u) * pose.length_px);
    };
    const std::array<Point, kLandmarkCount> raw{pose.frame(0.0).first,
                                                pose.frame(kTailStart).first,
                                                pose.frame(1.0).first,
                                                dorsal(kJunction),
                                                ventral(kMidCarapace),
                                                ventral(kJunction),
                                                dorsal(segment_mid(1)),
                                                ventral(segment_mid(1)),
                                                dorsal(segment_mid(3)),
                                                ventral(segment_mid(3)),
                                                dorsal(segment_mid(6)),
                                                ventral(segment_mid(6))};
    for (std::size_t i = 0; i < kLandmarkCount; ++i) {
        rec.landmarks[i] = {round2(std::clamp(raw[i].x, 0.0, size - 1.0)), round2(std::clamp(raw[i].y, 0.0, size - 1.0))};
    }
    if (traits) *traits = {length_mm, curvature, ws, noise};
    return rec;
}

SpecimenRecord generate_record(const GeneratorConfig& cfg, std::uint64_t id) {
    auto rng = record_stream(cfg.seed, id);
    return generate_specimen(rng, cfg, id);
}

std::vector<SpecimenRecord> generate_dataset(const GeneratorConfig& cfg, std::size_t count) {
    std::vector<SpecimenRecord> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(generate_record(cfg, i));
    return out;
}

Tensor<double> make_heatmap_targets(std::span<const Point> landmarks, double sigma, std::size_t image_w,
                                    std::size_t image_h, std::size_t grid) {
    if (!(sigma > 0.0)) throw ContractError("make_heatmap_targets: sigma must be > 0");
    Tensor<double> out(Shape{landmarks.size(), grid, grid});
    const double sx = static_cast<double>(grid) / image_w, sy = static_cast<double>(grid) / image_h;
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t k = 0; k < landmarks.size(); ++k) {
        const Point p = landmarks[k];
        if (!(p.x >= 0.0 && p.x <= image_w && p.y >= 0.0 && p.y <= image_h)) {
            throw ContractError("make_heatmap_targets: landmark " + std::to_string(k + 1) + " outside the image");
        }
        const double gx = p.x * sx, gy = p.y * sy;
        double* ch = out.data().data() + k * grid * grid;
        double total = 0.0;
        for (std::size_t r = 0; r < grid; ++r)
            for (std::size_t c = 0; c < grid; ++c) {
                const double dx = c + 0.5 - gx, dy = r + 0.5 - gy;
                const double v = std::exp(-(dx * dx + dy * dy) * inv);
                ch[r * grid + c] = v;
                total += v;
            }
        for (std::size_t i = 0; i < grid * grid; ++i) ch[i] /= total;
    }
    return out;
}

void validate(const AugmentationConfig& cfg) {
    for (double p : {cfg.hflip_p, cfg.vflip_p, cfg.shift_scale_p, cfg.rotate_p, cfg.blur_p, cfg.rgb_shift_p}) {
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("augmentation: probabilities must lie in [0,1]");
    }
    if (cfg.scale_limit < 0.0 || cfg.scale_limit >= 1.0) throw ConfigError("augmentation: scale limit must lie in [0,1)");
}

Affine Affine::compose(const Affine& o) const {
    return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11, m00 * o.tx + m01 * o.ty + tx,
            m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11, m10 * o.tx + m11 * o.ty + ty};
}

Affine Affine::inverse() const {
    const double det = m00 * m11 - m01 * m10;
    const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
    return {i00, i01, -(i00 * tx + i01 * ty), i10, i11, -(i10 * tx + i11 * ty)};
}

Affine Affine::hflip(std::size_t width) { return {-1, 0, static_cast<double>(width) - 1.0, 0, 1, 0}; }

Affine Affine::vflip(std::size_t height) { return {1, 0, 0, 0, -1, static_cast<double>(height) - 1.0}; }

Affine Affine::about_center(std::size_t width, std::size_t height, double deg, double scale, double shift_x,
                            double shift_y) {
    const double cx = (static_cast<double>(width) - 1.0) / 2.0, cy = (static_cast<double>(height) - 1.0) / 2.0;
    const double a = deg * std::numbers::pi / 180.0;
    const double c = std::cos(a) * scale, s = std::sin(a) * scale;
    return {c, -s, cx - c * cx + s * cy + shift_x, s, c, cy - s * cx - c * cy + shift_y};
}

SpecimenRecord warp(const SpecimenRecord& rec, const Affine& transform, bool* clamped) {
    const std::size_t c_n = rec.image.extent(0), h = rec.image.extent(1), w = rec.image.extent(2);
    SpecimenRecord out = rec;
    const Affine inv = transform.inverse();
    const float* src = rec.image.data().data();
    float* dst = out.image.data().data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const Point s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            const double sx = std::clamp(s.x, 0.0, w - 1.0), sy = std::clamp(s.y, 0.0, h - 1.0);
            const auto x0 = static_cast<std::size_t>(sx), y0 = static_cast<std::size_t>(sy);
            const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = sx - x0, fy = sy - y0;
            for (std::size_t c = 0; c < c_n; ++c) {
                const float* p = src + c * h * w;
                const double top = (1 - fx) * p[y0 * w + x0] + fx * p[y0 * w + x1];
                const double bot = (1 - fx) * p[y1 * w + x0] + fx * p[y1 * w + x1];
                dst[(c * h + y) * w + x] = static_cast<float>((1 - fy) * top + fy * bot);
            }
        }
    bool any = false;
    for (auto& p : out.landmarks) {
        const Point q = transform.apply(p);
        const Point r{std::clamp(q.x, 0.0, w - 1.0), std::clamp(q.y, 0.0, h - 1.0)};
        any = any || r.x != q.x || r.y != q.y;
        p = r;
    }
    if (clamped) *clamped = any;
    return out;
}

Augmented augment(const SpecimenRecord& rec, const AugmentationConfig& cfg, std::mt19937_64& rng) {
    validate(cfg);
    const std::size_t h = rec.image.extent(1), w = rec.image.extent(2);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    // Fixed draw order; parameters are drawn even when a transform is skipped.
    const bool hflip = u01(rng) < cfg.hflip_p;
    const bool vflip = u01(rng) < cfg.vflip_p;
    const bool shift_scale = u01(rng) < cfg.shift_scale_p;
    const double shift_x = (2 * u01(rng) - 1) * cfg.shift_limit * w;
    const double shift_y = (2 * u01(rng) - 1) * cfg.shift_limit * h;
    const double scale = 1.0 + (2 * u01(rng) - 1) * cfg.scale_limit;
    const bool rotate = u01(rng) < cfg.rotate_p;
    const double angle = (2 * u01(rng) - 1) * cfg.rotate_limit_deg;
    const bool blur = u01(rng) < cfg.blur_p;
    const bool rgb = u01(rng) < cfg.rgb_shift_p;
    std::array<double, 3> shifts{};
    for (double& s : shifts) s = (2 * u01(rng) - 1) * cfg.rgb_shift_limit;

    Affine t;
    if (hflip) t = Affine::hflip(w).compose(t);
    if (vflip) t = Affine::vflip(h).compose(t);
    if (shift_scale) t = Affine::about_center(w, h, 0.0, scale, shift_x, shift_y).compose(t);
    if (rotate) t = Affine::about_center(w, h, angle, 1.0, 0.0, 0.0).compose(t);

    Augmented out;
    out.transform = t;
    out.record = warp(rec, t, &out.clamped);
    auto& img = out.record.image;
    const std::size_t channels = img.extent(0);
    if (blur) {
        out.blurred = true;
        const Tensor<float> src = img;
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    float acc = 0.0f;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const auto yy = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y + dy, 0, h - 1));
                            const auto xx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x + dx, 0, w - 1));
                            acc += src[(c * h + yy) * w + xx];
                        }
                    img[(c * h + y) * w + x] = acc / 9.0f;
                }
    }
    if (rgb) {
        out.rgb_shift = shifts;
        for (std::size_t c = 0; c < std::min<std::size_t>(channels, 3); ++c)
            for (std::size_t i = c * h * w; i < (c + 1) * h * w; ++i)
                img[i] = std::clamp(img[i] + static_cast<float>(shifts[c]), 0.0f, 1.0f);
    }
    return out;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, std::array<double, 3> fractions) {
    const double total = fractions[0] + fractions[1] + fractions[2];
    if (std::abs(total - 1.0) > 1e-9) throw ContractError("split: fractions must sum to 1");
    for (double f : fractions)
        if (f < 0.0) throw ContractError("split: fractions must be non-negative");
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = fractions[i] * static_cast<double>(n);
        // Guard floor() against representation error just below an integer.
        sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[i] = exact - static_cast<double>(sizes[i]);
        used += sizes[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[order[k % 3]];
    return sizes;
}

std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, std::array<double, 3> fractions,
                                                      std::uint64_t seed) {
    if (n < 3) throw InputError("split: need at least 3 records, got " + std::to_string(n));
    const auto sizes = split_sizes(n, fractions);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::array<std::vector<std::size_t>, 3> parts;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        parts[i].assign(perm.begin() + pos, perm.begin() + pos + sizes[i]);
        pos += sizes[i];
    }
    return parts;
}

Split split(std::vector<SpecimenRecord> records, std::array<double, 3> fractions, std::uint64_t seed) {
    const auto parts = split_indices(records.size(), fractions, seed);
    Split out;
    std::vector<SpecimenRecord>* dst[3] = {&out.train, &out.val, &out.test};
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t idx : parts[i]) dst[i]->push_back(std::move(records[idx]));
    return out;
}

Tensor<float> luminance(const Tensor<float>& rgb) {
    if (rgb.rank() != 3 || rgb.extent(0) != 3) throw DimensionError("luminance: expected [3,H,W], got " + shape_string(rgb.shape()));
    const std::size_t h = rgb.extent(1), w = rgb.extent(2), n = h * w;
    Tensor<float> out(Shape{h, w});
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.299f * rgb[i] + 0.587f * rgb[n + i] + 0.114f * rgb[2 * n + i];
    return out;
}

}  // namespace kronmark::synth
