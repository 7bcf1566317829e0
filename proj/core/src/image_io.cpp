#include "ppap/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ppap {

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw std::invalid_argument("write_ppm: expects a (3, H, W) tensor");
    const int h = image.dim(1), w = image.dim(2);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + path);
    out << "P6\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
                row[static_cast<size_t>(x) * 3 + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
    }
    if (!out) throw std::runtime_error("write_ppm: write failed for " + path);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
    int w = 0, h = 0, maxv = 0;
    in >> w >> h >> maxv;
    in.get();  // single whitespace after header
    if (w <= 0 || h <= 0 || maxv != 255) throw std::runtime_error("read_ppm: bad header in " + path);
    std::vector<unsigned char> buf(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw std::runtime_error("read_ppm: truncated file " + path);
    Tensor img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = buf[(static_cast<size_t>(y) * w + x) * 3 + c] / 255.0;
    return img;
}

void draw_line(Tensor& img, double x0, double y0, double x1, double y1, const double rgb[3],
               double thickness) {
    const int h = img.dim(1), w = img.dim(2);
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    const int min_x = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - thickness - 1)));
    const int max_x = std::min(w - 1, static_cast<int>(std::ceil(std::max(x0, x1) + thickness + 1)));
    const int min_y = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - thickness - 1)));
    const int max_y = std::min(h - 1, static_cast<int>(std::ceil(std::max(y0, y1) + thickness + 1)));
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x) {
            double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double px = x0 + t * dx, py = y0 + t * dy;
            const double d = std::hypot(x - px, y - py);
            if (d > thickness + 0.5) continue;
            const double a = std::clamp(thickness + 0.5 - d, 0.0, 1.0);
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = img.at(c, y, x) * (1.0 - a) + rgb[c] * a;
        }
}

void splat_gaussian(Tensor& img, double cx, double cy, double sigma, const double rgb[3]) {
    const int h = img.dim(1), w = img.dim(2);
    const double r = 3.0 * sigma;
    const int min_x = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int max_x = std::min(w - 1, static_cast<int>(std::ceil(cx + r)));
    const int min_y = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int max_y = std::min(h - 1, static_cast<int>(std::ceil(cy + r)));
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x) {
            const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            const double a = std::exp(-d2 / (2.0 * sigma * sigma));
            for (int c = 0; c < 3; ++c)
                img.at(c, y, x) = std::clamp(img.at(c, y, x) * (1.0 - a) + rgb[c] * a, 0.0, 1.0);
        }
}

Tensor colorize_heatmap(const Tensor& field2d) {
    const int h = field2d.dim(0), w = field2d.dim(1);
    double lo = field2d.min(), hi = field2d.max();
    if (hi - lo < 1e-12) hi = lo + 1e-12;
    Tensor img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double t = (field2d.at(y, x) - lo) / (hi - lo);
            // black -> blue -> red -> yellow ramp
            img.at(0, y, x) = std::clamp(2.0 * t - 0.5, 0.0, 1.0);
            img.at(1, y, x) = std::clamp(2.0 * t - 1.0, 0.0, 1.0);
            img.at(2, y, x) = std::clamp(1.0 - 2.0 * t, 0.0, 1.0) * std::clamp(4.0 * t, 0.0, 1.0);
        }
    return img;
}

}  // namespace ppap
