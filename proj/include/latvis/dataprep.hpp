#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latvis/core_types.hpp"
#include "latvis/image.hpp"

namespace latvis {

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    bool visible = false;
};

/// The 15-point annotation scheme; indices follow the standard part list
/// order (also the order used by the text annotation files).
struct KeypointAnnotation {
    static constexpr std::array<std::string_view, 15> kNames = {
        "back",      "beak",      "belly",     "breast",     "crown",
        "forehead",  "left_eye",  "left_leg",  "left_wing",  "nape",
        "right_eye", "right_leg", "right_wing", "tail",      "throat"};

    std::string image_id;
    std::array<Keypoint, 15> points;

    Keypoint& by_name(std::string_view name);
    const Keypoint& by_name(std::string_view name) const;
};

enum class BoxSource { GroundTruthDerived, Predicted, Synthetic };

struct PartBox {
    PartKind part = PartKind::WholeImage;
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    BoxSource source = BoxSource::GroundTruthDerived;
};

struct BoxRules {
    double side_ratio = 0.25;  // box side as a fraction of the keypoint extent
    std::map<PartKind, double> per_part_ratio;
    double face_pad = 0.2;     // padding around the eyes-beak-crown hull
};

/// Square boxes centered on visible keypoints, side = ratio x extent where
/// extent is the max pairwise distance over all visible keypoints. The face
/// box is the padded hull of the visible eye/beak/crown points. Left/right
/// eye and wing collapse to one box (left preferred when both are visible).
/// Legs are ignored. Fewer than 2 visible keypoints leaves the extent
/// undefined and yields an empty map. Boxes are clipped to the image;
/// degenerate results are dropped.
std::map<PartKind, PartBox> boxes_from_keypoints(const KeypointAnnotation& a, int image_w,
                                                 int image_h, const BoxRules& rules = {});

/// Extracts the box intersection and resamples it to a resize_to square.
/// An intersection under 2px on a side is a missing part (nullopt).
std::optional<GrayImage> crop(const GrayImage& img, const PartBox& box, int resize_to);

/// Text annotation rows "image_id part_id x y visible" with 1-based part ids
/// in kNames order, grouped into one annotation per image id.
std::vector<KeypointAnnotation> read_keypoint_file(const std::filesystem::path& path);

/// Recipe for the procedural multi-part benchmark. Class identity is carried
/// by each part's glyph (distinct per class and part) and by a graded
/// foreground intensity; the intensity axis has deliberately small gaps so a
/// whole-image model leans on a brittle cue, while glyph geometry survives
/// in gradient-based descriptors.
struct SyntheticSpec {
    int n_classes = 8;
    int image_size = 32;
    int part_box_side = 12;
    double background = 60.0;        // native gray level
    double intensity_base = 120.0;   // class c foreground = base + step * c
    double intensity_step = 12.0;
    double noise_sigma = 8.0;        // additive gaussian, native units
    int jitter = 2;                  // part center jitter, px
    std::uint64_t seed = 1;
};

struct SyntheticImage {
    std::string id;
    ClassLabel label;
    RgbImage image;
    std::map<PartKind, PartBox> boxes;
};

struct SyntheticDataset {
    SyntheticSpec spec;
    std::vector<SyntheticImage> images;
};

/// The four rendered parts and where their glyphs live.
inline constexpr std::array<PartKind, 4> kSyntheticParts = {
    PartKind::Crown, PartKind::Wing, PartKind::Belly, PartKind::Tail};

/// Deterministic given spec.seed. Labels cycle through the classes so the
/// dataset stays balanced.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, int n_images);

/// Glyph pixel mask for (class, part), centered in a part_box_side square;
/// exposed for the containment audit.
std::vector<std::pair<int, int>> glyph_mask(int class_index, int part_index);

struct DatasetImage {
    std::string id;
    ClassLabel label;
    RgbImage image;
    std::map<PartKind, PartBox> boxes;
};

struct Dataset {
    std::vector<DatasetImage> images;
    int n_classes = 0;
};

/// Layout: dir/images/<id>.ppm, dir/labels.csv, dir/boxes.csv.
void write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace latvis
