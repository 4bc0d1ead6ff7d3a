#include "kronmark/dataset_io.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

#include "kronmark/errors.hpp"

namespace kronmark::io {

namespace fs = std::filesystem;

void write_png(const fs::path& path, const Tensor<float>& rgb) {
    if (rgb.rank() != 3 || rgb.extent(0) != 3) throw DimensionError("write_png: expected [3,H,W]");
    const std::size_t h = rgb.extent(1), w = rgb.extent(2), n = h * w;
    std::vector<png_byte> buf(3 * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = std::clamp(static_cast<double>(rgb[c * n + i]), 0.0, 1.0);
            buf[3 * i + c] = static_cast<png_byte>(std::lround(v * 255.0));
        }
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.string().c_str(), 0, buf.data(), 0, nullptr)) {
        throw std::runtime_error("write_png: " + path.string() + ": " + image.message);
    }
}

Tensor<float> read_png(const fs::path& path) {
    if (!fs::exists(path)) throw MissingFileError(path.string());
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
        throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        throw std::runtime_error("read_png: " + path.string() + ": " + image.message);
    }
    const std::size_t h = image.height, w = image.width, n = h * w;
    Tensor<float> out(Shape{3, h, w});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < 3; ++c) out[c * n + i] = static_cast<float>(buf[3 * i + c] / 255.0);
    return out;
}

std::string format_exact(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_fixed2(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, 2);
    return std::string(buf, res.ptr);
}

namespace {

std::string image_name(std::uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "images/%06llu.png", static_cast<unsigned long long>(id));
    return buf;
}

}  // namespace

std::string index_line(const synth::SpecimenRecord& rec) {
    std::ostringstream os;
    os << "{\"id\":" << rec.id << ",\"image\":\"" << image_name(rec.id) << "\",\"landmarks\":[";
    for (std::size_t i = 0; i < rec.landmarks.size(); ++i) {
        if (i) os << ',';
        os << '[' << format_fixed2(rec.landmarks[i].x) << ',' << format_fixed2(rec.landmarks[i].y) << ']';
    }
    os << "],\"weight_g\":" << format_exact(rec.weight_g) << ",\"mm_per_px\":" << format_exact(rec.mm_per_px) << '}';
    return os.str();
}

void save_dataset(const std::vector<synth::SpecimenRecord>& records, const fs::path& dir) {
    fs::create_directories(dir / "images");
    std::ofstream index(dir / kIndexFile, std::ios::binary | std::ios::trunc);
    if (!index) throw std::runtime_error("save_dataset: cannot write " + (dir / kIndexFile).string());
    for (const auto& rec : records) {
        write_png(dir / image_name(rec.id), rec.image);
        index << index_line(rec) << '\n';
    }
    if (!index) throw std::runtime_error("save_dataset: write failed for " + (dir / kIndexFile).string());
}

std::vector<synth::SpecimenRecord> load_dataset(const fs::path& dir) {
    const fs::path index_path = dir / kIndexFile;
    std::ifstream in(index_path, std::ios::binary);
    if (!in) throw MissingFileError(index_path.string());
    std::vector<synth::SpecimenRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("index: invalid JSON: ") + e.what(), line_no);
        }
        synth::SpecimenRecord rec;
        std::string image;
        try {
            rec.id = j.at("id").get<std::uint64_t>();
            image = j.at("image").get<std::string>();
            rec.weight_g = j.at("weight_g").get<double>();
            rec.mm_per_px = j.at("mm_per_px").get<double>();
            const auto& lm = j.at("landmarks");
            if (!lm.is_array() || lm.size() != kLandmarkCount) throw ParseError("index: expected 12 landmarks", line_no);
            for (std::size_t i = 0; i < kLandmarkCount; ++i) {
                const auto& p = lm.at(i);
                if (!p.is_array() || p.size() != 2) throw ParseError("index: landmark must be [x,y]", line_no);
                rec.landmarks[i] = {p.at(0).get<double>(), p.at(1).get<double>()};
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("index: bad field: ") + e.what(), line_no);
        }
        const fs::path img_path = dir / image;
        if (!fs::exists(img_path)) throw MissingFileError(img_path.string());
        rec.image = read_png(img_path);
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace kronmark::io
