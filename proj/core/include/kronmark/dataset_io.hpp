#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kronmark/synth.hpp"
#include "kronmark/tensor.hpp"

// On-disk dataset: `<dir>/index.jsonl` with one JSON object per record and
// one 8-bit RGB PNG per record under `<dir>/images/`.
//
//   {"id":3,"image":"images/000003.png","landmarks":[[x1,y1],...,[x12,y12]],
//    "weight_g":23.418,"mm_per_px":0.65}
//
// Coordinates are written with exactly two fractional digits; weight and
// scale use the shortest decimal text that reads back to the same double.
namespace kronmark::io {

inline constexpr const char* kIndexFile = "index.jsonl";

void write_png(const std::filesystem::path& path, const Tensor<float>& rgb);
// [3,H,W] in [0,1]; grayscale and alpha inputs are expanded/dropped.
Tensor<float> read_png(const std::filesystem::path& path);

// Shortest round-trip decimal form.
std::string format_exact(double v);
std::string format_fixed2(double v);

std::string index_line(const synth::SpecimenRecord& rec);

void save_dataset(const std::vector<synth::SpecimenRecord>& records, const std::filesystem::path& dir);
// Throws ParseError (with line number) for malformed index lines and
// MissingFileError when an index entry names an absent image.
std::vector<synth::SpecimenRecord> load_dataset(const std::filesystem::path& dir);

}  // namespace kronmark::io
