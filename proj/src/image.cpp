#include "latvis/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace latvis {

GrayImage luminance(const RgbImage& rgb) {
    GrayImage g(rgb.width, rgb.height);
    for (int y = 0; y < rgb.height; ++y) {
        for (int x = 0; x < rgb.width; ++x) {
            const double v = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) +
                             0.114 * rgb.at(x, y, 2);
            g.at(x, y) = v / 255.0;
        }
    }
    return g;
}

NativeImage to_native(const GrayImage& g) {
    NativeImage n(g.width, g.height);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) n.pixels[i] = g.pixels[i] * 255.0;
    return n;
}

GrayImage from_native(const NativeImage& n) {
    GrayImage g(n.width, n.height);
    for (std::size_t i = 0; i < n.pixels.size(); ++i) g.pixels[i] = n.pixels[i] / 255.0;
    return g;
}

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
    if (out_w < 1 || out_h < 1) throw std::invalid_argument("resize: bad target size");
    if (img.width == out_w && img.height == out_h) return img;
    GrayImage out(out_w, out_h);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            const double top = img.at(x0, y0) * (1 - wx) + img.at(x1, y0) * wx;
            const double bot = img.at(x0, y1) * (1 - wx) + img.at(x1, y1) * wx;
            out.at(x, y) = top * (1 - wy) + bot * wy;
        }
    }
    return out;
}

namespace {

std::uint8_t quantize(double v) {
    const double r = std::round(v);
    return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            tok.push_back(static_cast<char>(c));
            while ((c = in.peek()) != EOF && !std::isspace(c)) {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    throw std::runtime_error("truncated netpbm header");
}

struct PnmHeader {
    int width = 0;
    int height = 0;
};

PnmHeader read_header(std::istream& in, const std::string& magic,
                      const std::filesystem::path& path) {
    if (next_token(in) != magic) {
        throw std::runtime_error("not a " + magic + " file: " + path.string());
    }
    PnmHeader h;
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    const int maxval = std::stoi(next_token(in));
    if (h.width < 1 || h.height < 1 || maxval != 255) {
        throw std::runtime_error("unsupported netpbm geometry: " + path.string());
    }
    in.get();  // single whitespace byte before raster
    return h;
}

std::vector<std::uint8_t> read_raster(std::istream& in, std::size_t n,
                                      const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes(n);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw std::runtime_error("truncated raster: " + path.string());
    }
    return bytes;
}

}  // namespace

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) bytes[i] = quantize(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const PnmHeader h = read_header(in, "P6", path);
    RgbImage img(h.width, h.height);
    const auto bytes = read_raster(in, img.pixels.size(), path);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i];
    return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    NativeImage n = to_native(img);
    write_pgm_native(path, n);
}

GrayImage read_pgm(const std::filesystem::path& path) {
    return from_native(read_pgm_native(path));
}

void write_pgm_native(const std::filesystem::path& path, const NativeImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<std::uint8_t> bytes(img.pixels.size());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) bytes[i] = quantize(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

NativeImage read_pgm_native(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    const PnmHeader h = read_header(in, "P5", path);
    NativeImage img(h.width, h.height);
    const auto bytes = read_raster(in, img.pixels.size(), path);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i];
    return img;
}

}  // namespace latvis
