#include "thermloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace thermloc {

double GrayImage::sample_bilinear(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height - 1));
    const int x0 = std::min(static_cast<int>(x), width - 2 >= 0 ? width - 2 : 0);
    const int y0 = std::min(static_cast<int>(y), height - 2 >= 0 ? height - 2 : 0);
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = at(x0, y0);
    const double v10 = at(std::min(x0 + 1, width - 1), y0);
    const double v01 = at(x0, std::min(y0 + 1, height - 1));
    const double v11 = at(std::min(x0 + 1, width - 1), std::min(y0 + 1, height - 1));
    return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) + v01 * (1 - fx) * fy +
           v11 * fx * fy;
}

GrayImage read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open image: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw ConfigError("not a binary PGM (P5): " + path);
    auto next_token = [&]() -> long {
        // skip whitespace and '#' comments
        while (true) {
            int c = f.peek();
            if (c == '#') {
                std::string line;
                std::getline(f, line);
            } else if (std::isspace(c)) {
                f.get();
            } else {
                break;
            }
        }
        long v;
        f >> v;
        return v;
    };
    const long w = next_token();
    const long h = next_token();
    const long maxval = next_token();
    if (w <= 0 || h <= 0 || maxval != 255)
        throw ConfigError("unsupported PGM header in " + path);
    f.get();  // single whitespace before raster
    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw ConfigError("truncated PGM raster in " + path);
    return img;
}

void write_pgm(const GrayImage& img, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open image for writing: " + path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
}

}  // namespace thermloc
