#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "errors.hpp"
#include "tensor.hpp"

namespace tlab {

// One side x side grayscale sample with a binary label.
struct Patch {
    std::size_t side = 0;
    std::vector<std::uint8_t> pixels;  // row-major, side * side
    std::uint8_t label = 0;            // 0 benign, 1 malicious
    std::string source_id;

    friend bool operator==(const Patch& a, const Patch& b) {
        return a.side == b.side && a.pixels == b.pixels && a.label == b.label;
    }
};

// Byte pixels to the [0,1] model scale, shaped [1, side, side].
inline Tensor to_unit(const Patch& p) {
    if (p.pixels.size() != p.side * p.side) {
        throw DimensionError("patch has " + std::to_string(p.pixels.size()) + " pixels, expected " +
                             std::to_string(p.side * p.side));
    }
    Tensor t({1, p.side, p.side});
    for (std::size_t i = 0; i < p.pixels.size(); ++i) t[i] = static_cast<float>(p.pixels[i]) / 255.0f;
    return t;
}

} // namespace tlab
