#pragma once

#include <string>
#include <vector>

#include "latvis/image.hpp"

namespace latvis {

/// Per-pixel gradient magnitude and orientation.
struct GradientField {
    int width = 0;
    int height = 0;
    std::vector<double> magnitude;
    std::vector<double> orientation;  // radians
};

/// Full2Pi keeps signed direction in [0,2pi) (dense descriptor patches);
/// HalfPi folds opposite directions together into [0,pi) (unsigned cell
/// histograms).
enum class OrientationRange { Full2Pi, HalfPi };

/// Central differences in the interior (delta/2), one-sided at borders.
GradientField gradients(const GrayImage& img, OrientationRange range);

struct SiftParams {
    int patch_size = 64;        // grid patch side, px
    double max_bin_value = 0.2; // per-bin cap inside each patch descriptor
    int orientation_bins = 8;
    int spatial_bins = 2;       // per side

    int dims_per_patch() const { return spatial_bins * spatial_bins * orientation_bins; }
};

struct HogParams {
    int resize_to = 64;   // square resample target, px
    int cell_size = 32;   // px per cell side
    int orientation_bins = 9;
    int block_cells = 2;  // block side, cells; shrinks when fewer cells fit
    double clip = 0.2;    // per-entry cap inside each block
};

/// Dense grid descriptor. The image is first resampled so an integer grid of
/// patch_size squares tiles it (each side rounds to the nearest multiple, at
/// least one). Each patch yields spatial_bins^2 x orientation_bins weighted
/// gradient-magnitude bins with bilinear spatial and orientation
/// interpolation, finished by: L2-normalize, cap at max_bin_value,
/// re-L2-normalize, cap again. The trailing cap keeps the documented bound
/// on every emitted bin; without it the re-normalization can push a
/// single-orientation patch's bins well past the cap. Patches concatenate
/// row-major. Zero-energy patches stay all-zero.
std::vector<double> sift_descriptor(const GrayImage& img, const SiftParams& p);

/// Cell/block descriptor. Image resampled to resize_to square; unsigned
/// 9-bin cell histograms (linear orientation interpolation, circular);
/// sliding blocks of block_cells^2 cells (stride one cell) are each
/// L2-normalized, clipped, re-L2-normalized. Blocks row-major, cells within
/// a block row-major. Only full cells participate; a too-small image
/// degenerates to a single cell and a single 1x1 block.
std::vector<double> hog_descriptor(const GrayImage& img, const HogParams& p);

/// The six descriptor parameterizations applied to every part crop.
struct FeatureVariantSet {
    std::vector<SiftParams> sift;
    std::vector<HogParams> hog;

    /// patchSize 64/128/256; image size 64/126/256 with 32/64/128-px cells.
    static FeatureVariantSet defaults();
    /// Descriptor length for a square input of the given side. Callers feed
    /// fixed-size crops, so this is also the RF input arity.
    int total_dims(int input_side) const;
};

/// Concatenation of every SIFT variant then every HOG variant, in set order.
std::vector<double> part_features(const GrayImage& crop, const FeatureVariantSet& set);

}  // namespace latvis
