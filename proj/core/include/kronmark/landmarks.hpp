#pragma once

#include <array>
#include <cstddef>

namespace kronmark {

inline constexpr std::size_t kLandmarkCount = 12;

struct Point {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point&, const Point&) = default;
};

// Twelve ordered landmarks, index 0 holding landmark 1:
//   1  anterior tip of the antennal scale
//   2  anterior point of the tail         3  posterior point of the tail
//   4  carapace/abdomen junction, dorsal  5  mid-carapace, ventral
//   6  carapace/abdomen junction, ventral
//   7/8   first abdominal segment midpoint, dorsal/ventral
//   9/10  third abdominal segment midpoint, dorsal/ventral
//   11/12 last abdominal segment midpoint, dorsal/ventral
// Coordinates are pixels with pixel centers on integers, y pointing down.
using LandmarkSet = std::array<Point, kLandmarkCount>;

}  // namespace kronmark
