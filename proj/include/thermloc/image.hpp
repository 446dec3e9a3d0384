#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thermloc/errors.hpp"

namespace thermloc {

// 8-bit grayscale image; 0 = cold/dark, 255 = hot/bright.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // row-major

    GrayImage() = default;
    GrayImage(int w, int h, uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
    void set(int x, int y, uint8_t v) { pixels[static_cast<size_t>(y) * width + x] = v; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    // Bilinear sample at a sub-pixel location (pixel centers at integers);
    // coordinates are clamped to the image.
    double sample_bilinear(double x, double y) const;
};

// Binary 8-bit PGM (P5).
GrayImage read_pgm(const std::string& path);
void write_pgm(const GrayImage& img, const std::string& path);

}  // namespace thermloc
