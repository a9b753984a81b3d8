#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace latvis {

/// Grayscale image, values in [0,1], row-major.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

/// Grayscale image on the native 0-255 scale. This is the space adversarial
/// perturbations live in; integer-valued pixels stay integer under the
/// pinned attack parameters, so 8-bit files round-trip attacked images
/// exactly.
struct NativeImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;

    NativeImage() = default;
    NativeImage(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    friend bool operator==(const NativeImage&, const NativeImage&) = default;
};

/// Interleaved RGB, values in [0,255], row-major.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // 3 * width * height

    RgbImage() = default;
    RgbImage(int w, int h, double fill = 0.0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    double at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// 0.299 R + 0.587 G + 0.114 B, rescaled to [0,1].
GrayImage luminance(const RgbImage& rgb);

NativeImage to_native(const GrayImage& g);   // x255
GrayImage from_native(const NativeImage& n); // /255

/// Bilinear resample to out_w x out_h. Source coordinates are sampled at
/// (i+0.5)*scale - 0.5 and clamped, so corners map sensibly for both up-
/// and downscaling. Aspect ratio is the caller's problem.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

// Binary PPM (P6) / PGM (P5), 8-bit. Writers round to nearest and clamp.
void write_ppm(const std::filesystem::path& path, const RgbImage& img);
RgbImage read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);
void write_pgm_native(const std::filesystem::path& path, const NativeImage& img);
NativeImage read_pgm_native(const std::filesystem::path& path);

}  // namespace latvis
