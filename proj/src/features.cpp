#include "latvis/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace latvis {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// L2-normalize in place; an all-zero vector stays all-zero.
void l2_normalize(std::vector<double>& v) {
    double ss = 0.0;
    for (double x : v) ss += x * x;
    if (ss <= 0.0) return;
    const double inv = 1.0 / std::sqrt(ss);
    for (double& x : v) x *= inv;
}

void cap(std::vector<double>& v, double limit) {
    for (double& x : v) x = std::min(x, limit);
}

// Round a side to the nearest positive multiple of patch.
int patch_tiles(int extent, int patch) {
    return std::max(1, (extent + patch / 2) / patch);
}

}  // namespace

GradientField gradients(const GrayImage& img, OrientationRange range) {
    if (img.width < 2 || img.height < 2) {
        throw std::invalid_argument("gradients: image must be at least 2x2");
    }
    GradientField g;
    g.width = img.width;
    g.height = img.height;
    g.magnitude.resize(img.pixels.size());
    g.orientation.resize(img.pixels.size());
    const int w = img.width, h = img.height;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double dx, dy;
            if (x == 0) {
                dx = img.at(1, y) - img.at(0, y);
            } else if (x == w - 1) {
                dx = img.at(w - 1, y) - img.at(w - 2, y);
            } else {
                dx = (img.at(x + 1, y) - img.at(x - 1, y)) * 0.5;
            }
            if (y == 0) {
                dy = img.at(x, 1) - img.at(x, 0);
            } else if (y == h - 1) {
                dy = img.at(x, h - 1) - img.at(x, h - 2);
            } else {
                dy = (img.at(x, y + 1) - img.at(x, y - 1)) * 0.5;
            }
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            g.magnitude[i] = std::sqrt(dx * dx + dy * dy);
            double theta = std::atan2(dy, dx);
            if (theta < 0.0) theta += kTwoPi;
            if (theta >= kTwoPi) theta = 0.0;
            if (range == OrientationRange::HalfPi) {
                theta = std::fmod(theta, std::numbers::pi);
                if (theta < 0.0) theta = 0.0;
            }
            g.orientation[i] = theta;
        }
    }
    return g;
}

std::vector<double> sift_descriptor(const GrayImage& img, const SiftParams& p) {
    if (p.patch_size < 2 || p.spatial_bins < 1 || p.orientation_bins < 1) {
        throw std::invalid_argument("sift_descriptor: bad params");
    }
    const int gx = patch_tiles(img.width, p.patch_size);
    const int gy = patch_tiles(img.height, p.patch_size);
    const GrayImage work = resize_bilinear(img, gx * p.patch_size, gy * p.patch_size);
    const GradientField g = gradients(work, OrientationRange::Full2Pi);

    const int S = p.spatial_bins;
    const int O = p.orientation_bins;
    const int P = p.patch_size;
    const double bin_px = static_cast<double>(P) / S;

    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(gx) * gy * S * S * O);
    std::vector<double> hist(static_cast<std::size_t>(S) * S * O);

    for (int py = 0; py < gy; ++py) {
        for (int px = 0; px < gx; ++px) {
            std::fill(hist.begin(), hist.end(), 0.0);
            for (int y = 0; y < P; ++y) {
                const int iy = py * P + y;
                // Continuous spatial bin coordinate; bin b is centered at b.
                const double v = (y + 0.5) / bin_px - 0.5;
                const int v0 = static_cast<int>(std::floor(v));
                const double fv = v - v0;
                for (int x = 0; x < P; ++x) {
                    const int ix = px * P + x;
                    const std::size_t gi = static_cast<std::size_t>(iy) * g.width + ix;
                    const double m = g.magnitude[gi];
                    if (m == 0.0) continue;
                    const double u = (x + 0.5) / bin_px - 0.5;
                    const int u0 = static_cast<int>(std::floor(u));
                    const double fu = u - u0;
                    const double o = g.orientation[gi] / kTwoPi * O - 0.5;
                    const int o0 = static_cast<int>(std::floor(o));
                    const double fo = o - o0;
                    const int ob0 = ((o0 % O) + O) % O;
                    const int ob1 = (ob0 + 1) % O;
                    for (int dv = 0; dv <= 1; ++dv) {
                        const int vb = v0 + dv;
                        if (vb < 0 || vb >= S) continue;
                        for (int du = 0; du <= 1; ++du) {
                            const int ub = u0 + du;
                            if (ub < 0 || ub >= S) continue;
                            const double w =
                                m * (du ? fu : 1.0 - fu) * (dv ? fv : 1.0 - fv);
                            double* cell = &hist[(static_cast<std::size_t>(vb) * S + ub) * O];
                            cell[ob0] += w * (1.0 - fo);
                            cell[ob1] += w * fo;
                        }
                    }
                }
            }
            l2_normalize(hist);
            cap(hist, p.max_bin_value);
            l2_normalize(hist);
            cap(hist, p.max_bin_value);
            out.insert(out.end(), hist.begin(), hist.end());
        }
    }
    return out;
}

std::vector<double> hog_descriptor(const GrayImage& img, const HogParams& p) {
    if (p.resize_to < 2 || p.cell_size < 1 || p.orientation_bins < 1 || p.block_cells < 1) {
        throw std::invalid_argument("hog_descriptor: bad params");
    }
    const GrayImage work = resize_bilinear(img, p.resize_to, p.resize_to);
    const GradientField g = gradients(work, OrientationRange::HalfPi);

    // Only full cells participate; trailing pixels past the last full cell
    // are dropped (the 126/64 variant keeps a single 64-px cell).
    const int n = std::max(1, p.resize_to / p.cell_size);
    const int O = p.orientation_bins;
    const double bin_w = std::numbers::pi / O;
    const int span = std::min(n * p.cell_size, p.resize_to);

    std::vector<double> cells(static_cast<std::size_t>(n) * n * O, 0.0);
    for (int y = 0; y < span; ++y) {
        const int cy = std::min(y / p.cell_size, n - 1);
        for (int x = 0; x < span; ++x) {
            const std::size_t gi = static_cast<std::size_t>(y) * g.width + x;
            const double m = g.magnitude[gi];
            if (m == 0.0) continue;
            const int cx = std::min(x / p.cell_size, n - 1);
            const double o = g.orientation[gi] / bin_w - 0.5;
            const int o0 = static_cast<int>(std::floor(o));
            const double fo = o - o0;
            const int b0 = ((o0 % O) + O) % O;
            const int b1 = (b0 + 1) % O;
            double* cell = &cells[(static_cast<std::size_t>(cy) * n + cx) * O];
            cell[b0] += m * (1.0 - fo);
            cell[b1] += m * fo;
        }
    }

    const int B = std::min(p.block_cells, n);
    const int nb = n - B + 1;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(nb) * nb * B * B * O);
    std::vector<double> block(static_cast<std::size_t>(B) * B * O);
    for (int by = 0; by < nb; ++by) {
        for (int bx = 0; bx < nb; ++bx) {
            std::size_t k = 0;
            for (int cy = by; cy < by + B; ++cy) {
                for (int cx = bx; cx < bx + B; ++cx) {
                    const double* cell = &cells[(static_cast<std::size_t>(cy) * n + cx) * O];
                    for (int b = 0; b < O; ++b) block[k++] = cell[b];
                }
            }
            l2_normalize(block);
            cap(block, p.clip);
            l2_normalize(block);
            out.insert(out.end(), block.begin(), block.end());
        }
    }
    return out;
}

FeatureVariantSet FeatureVariantSet::defaults() {
    FeatureVariantSet set;
    for (int patch : {64, 128, 256}) {
        SiftParams sp;
        sp.patch_size = patch;
        set.sift.push_back(sp);
    }
    const int sizes[] = {64, 126, 256};
    const int cell_sizes[] = {32, 64, 128};
    for (int i = 0; i < 3; ++i) {
        HogParams hp;
        hp.resize_to = sizes[i];
        hp.cell_size = cell_sizes[i];
        set.hog.push_back(hp);
    }
    return set;
}

int FeatureVariantSet::total_dims(int input_side) const {
    int dims = 0;
    for (const SiftParams& sp : sift) {
        const int t = patch_tiles(input_side, sp.patch_size);
        dims += t * t * sp.dims_per_patch();
    }
    for (const HogParams& hp : hog) {
        const int n = std::max(1, hp.resize_to / hp.cell_size);
        const int B = std::min(hp.block_cells, n);
        const int nb = n - B + 1;
        dims += nb * nb * B * B * hp.orientation_bins;
    }
    return dims;
}

std::vector<double> part_features(const GrayImage& crop, const FeatureVariantSet& set) {
    std::vector<double> out;
    for (const SiftParams& sp : set.sift) {
        const auto d = sift_descriptor(crop, sp);
        out.insert(out.end(), d.begin(), d.end());
    }
    for (const HogParams& hp : set.hog) {
        const auto d = hog_descriptor(crop, hp);
        out.insert(out.end(), d.begin(), d.end());
    }
    return out;
}

}  // namespace latvis
