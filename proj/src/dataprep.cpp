#include "latvis/dataprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "latvis/rng.hpp"

namespace latvis {

Keypoint& KeypointAnnotation::by_name(std::string_view name) {
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (kNames[i] == name) return points[i];
    }
    throw std::invalid_argument("unknown keypoint: " + std::string(name));
}

const Keypoint& KeypointAnnotation::by_name(std::string_view name) const {
    return const_cast<KeypointAnnotation*>(this)->by_name(name);
}

namespace {

constexpr std::pair<std::string_view, PartKind> kSingleKeypointParts[] = {
    {"back", PartKind::Back},     {"beak", PartKind::Beak},
    {"belly", PartKind::Belly},   {"breast", PartKind::Breast},
    {"crown", PartKind::Crown},   {"forehead", PartKind::Forehead},
    {"nape", PartKind::Nape},     {"tail", PartKind::Tail},
    {"throat", PartKind::Throat},
};

std::optional<PartBox> clipped_box(PartKind part, double x0, double y0, double x1, double y1,
                                   int image_w, int image_h, BoxSource source) {
    x0 = std::max(x0, 0.0);
    y0 = std::max(y0, 0.0);
    x1 = std::min(x1, static_cast<double>(image_w));
    y1 = std::min(y1, static_cast<double>(image_h));
    if (!(x0 < x1) || !(y0 < y1)) return std::nullopt;
    return PartBox{part, x0, y0, x1, y1, source};
}

std::string source_name(BoxSource s) {
    switch (s) {
        case BoxSource::GroundTruthDerived: return "ground-truth-derived";
        case BoxSource::Predicted: return "predicted";
        case BoxSource::Synthetic: return "synthetic";
    }
    return "unknown";
}

BoxSource source_from_name(const std::string& s) {
    if (s == "ground-truth-derived") return BoxSource::GroundTruthDerived;
    if (s == "predicted") return BoxSource::Predicted;
    if (s == "synthetic") return BoxSource::Synthetic;
    throw std::invalid_argument("unknown box source: " + s);
}

}  // namespace

std::map<PartKind, PartBox> boxes_from_keypoints(const KeypointAnnotation& a, int image_w,
                                                 int image_h, const BoxRules& rules) {
    std::map<PartKind, PartBox> boxes;
    std::vector<const Keypoint*> visible;
    for (const Keypoint& k : a.points) {
        if (k.visible) visible.push_back(&k);
    }
    if (visible.size() < 2) return boxes;  // extent undefined

    double extent = 0.0;
    for (std::size_t i = 0; i < visible.size(); ++i) {
        for (std::size_t j = i + 1; j < visible.size(); ++j) {
            const double dx = visible[i]->x - visible[j]->x;
            const double dy = visible[i]->y - visible[j]->y;
            extent = std::max(extent, std::hypot(dx, dy));
        }
    }
    if (extent <= 0.0) return boxes;

    const auto ratio_for = [&rules](PartKind part) {
        const auto it = rules.per_part_ratio.find(part);
        return it != rules.per_part_ratio.end() ? it->second : rules.side_ratio;
    };
    const auto centered = [&](PartKind part, const Keypoint& k) {
        const double half = ratio_for(part) * extent / 2.0;
        if (auto box = clipped_box(part, k.x - half, k.y - half, k.x + half, k.y + half,
                                   image_w, image_h, BoxSource::GroundTruthDerived)) {
            boxes.emplace(part, *box);
        }
    };

    for (const auto& [name, part] : kSingleKeypointParts) {
        const Keypoint& k = a.by_name(name);
        if (k.visible) centered(part, k);
    }
    // Left/right pairs collapse to one part; the left instance wins when both
    // are visible so crop statistics stay comparable across images.
    const auto pick_side = [&](std::string_view left, std::string_view right, PartKind part) {
        const Keypoint& l = a.by_name(left);
        const Keypoint& r = a.by_name(right);
        if (l.visible) {
            centered(part, l);
        } else if (r.visible) {
            centered(part, r);
        }
    };
    pick_side("left_eye", "right_eye", PartKind::Eye);
    pick_side("left_wing", "right_wing", PartKind::Wing);

    // Face: padded hull of the visible eye/beak/crown keypoints.
    double hx0 = 1e300, hy0 = 1e300, hx1 = -1e300, hy1 = -1e300;
    bool any = false;
    for (std::string_view name : {"left_eye", "right_eye", "beak", "crown"}) {
        const Keypoint& k = a.by_name(name);
        if (!k.visible) continue;
        any = true;
        hx0 = std::min(hx0, k.x);
        hy0 = std::min(hy0, k.y);
        hx1 = std::max(hx1, k.x);
        hy1 = std::max(hy1, k.y);
    }
    if (any) {
        const double px = (hx1 - hx0) * rules.face_pad;
        const double py = (hy1 - hy0) * rules.face_pad;
        if (auto box = clipped_box(PartKind::Face, hx0 - px, hy0 - py, hx1 + px, hy1 + py,
                                   image_w, image_h, BoxSource::GroundTruthDerived)) {
            boxes.emplace(PartKind::Face, *box);
        }
    }
    return boxes;
}

std::optional<GrayImage> crop(const GrayImage& img, const PartBox& box, int resize_to) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(box.x0)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(box.y0)));
    const int ix1 = std::min(img.width, static_cast<int>(std::ceil(box.x1)));
    const int iy1 = std::min(img.height, static_cast<int>(std::ceil(box.y1)));
    const int w = ix1 - ix0;
    const int h = iy1 - iy0;
    if (w < 2 || h < 2) return std::nullopt;
    GrayImage sub(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) sub.at(x, y) = img.at(ix0 + x, iy0 + y);
    }
    return resize_bilinear(sub, resize_to, resize_to);
}

std::vector<KeypointAnnotation> read_keypoint_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::vector<KeypointAnnotation> out;
    std::unordered_map<std::string, std::size_t> index;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string image_id;
        int part_id = 0, vis = 0;
        double x = 0.0, y = 0.0;
        if (!(ss >> image_id >> part_id >> x >> y >> vis) || part_id < 1 || part_id > 15) {
            throw std::runtime_error("bad annotation row at " + path.string() + ":" +
                                     std::to_string(line_no));
        }
        auto [it, inserted] = index.try_emplace(image_id, out.size());
        if (inserted) {
            out.emplace_back();
            out.back().image_id = image_id;
        }
        Keypoint& k = out[it->second].points[static_cast<std::size_t>(part_id - 1)];
        k.x = x;
        k.y = y;
        k.visible = vis != 0;
    }
    return out;
}

std::vector<std::pair<int, int>> glyph_mask(int class_index, int part_index) {
    const int shape = ((class_index + 3 * part_index) % 8 + 8) % 8;
    std::vector<std::pair<int, int>> px;
    for (int dy = -4; dy <= 4; ++dy) {
        for (int dx = -4; dx <= 4; ++dx) {
            const int r2 = dx * dx + dy * dy;
            const int cheb = std::max(std::abs(dx), std::abs(dy));
            bool on = false;
            switch (shape) {
                case 0: on = r2 <= 16; break;                                   // disk
                case 1: on = r2 >= 7 && r2 <= 20; break;                        // ring
                case 2: on = std::abs(dx) <= 1 || std::abs(dy) <= 1; break;     // plus
                case 3: on = std::abs(dx - dy) <= 1 || std::abs(dx + dy) <= 1; break;  // cross
                case 4: on = cheb == 3 || cheb == 4; break;                     // frame
                case 5: on = cheb <= 3; break;                                  // block
                case 6: on = dy == -3 || dy == -2 || dy == 1 || dy == 2; break; // h-bars
                case 7: on = dx == -3 || dx == -2 || dx == 1 || dx == 2; break; // v-bars
            }
            if (on) px.emplace_back(dx, dy);
        }
    }
    return px;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, int n_images) {
    if (spec.n_classes < 2 || spec.image_size < 16 || n_images < 1) {
        throw std::invalid_argument("generate_synthetic: bad spec");
    }
    const int s = spec.image_size;
    const int q = s / 4;
    const std::pair<int, int> centers[4] = {
        {q, q}, {3 * q, q}, {q, 3 * q}, {3 * q, 3 * q}};

    SyntheticDataset data;
    data.spec = spec;
    data.images.reserve(static_cast<std::size_t>(n_images));
    char idbuf[32];

    for (int i = 0; i < n_images; ++i) {
        const int c = i % spec.n_classes;
        Rng rng = Rng::derive(spec.seed, static_cast<std::uint64_t>(i));
        SyntheticImage img;
        std::snprintf(idbuf, sizeof(idbuf), "synth-%05d", i);
        img.id = idbuf;
        img.label = ClassLabel{c};
        img.image = RgbImage(s, s, spec.background);

        const double f = spec.intensity_base + spec.intensity_step * c;
        // Slight chroma per class; the channel deltas cancel in luminance.
        const double tint = ((c % 3) - 1) * 6.0;
        const double fr = f + tint;
        const double fg = f - tint * 0.65;
        const double fb = f + tint * 0.72;

        for (int p = 0; p < 4; ++p) {
            const int dx = static_cast<int>(rng.next_below(2u * spec.jitter + 1)) - spec.jitter;
            const int dy = static_cast<int>(rng.next_below(2u * spec.jitter + 1)) - spec.jitter;
            const int cx = centers[p].first + dx;
            const int cy = centers[p].second + dy;
            for (const auto& [gx, gy] : glyph_mask(c, p)) {
                const int x = cx + gx, y = cy + gy;
                if (x < 0 || x >= s || y < 0 || y >= s) continue;
                img.image.at(x, y, 0) = fr;
                img.image.at(x, y, 1) = fg;
                img.image.at(x, y, 2) = fb;
            }
            const double half = spec.part_box_side / 2.0;
            if (auto box = clipped_box(kSyntheticParts[static_cast<std::size_t>(p)], cx - half,
                                       cy - half, cx + half, cy + half, s, s,
                                       BoxSource::Synthetic)) {
                img.boxes.emplace(box->part, *box);
            }
        }
        if (spec.noise_sigma > 0.0) {
            for (double& v : img.image.pixels) {
                v = std::clamp(v + rng.next_normal() * spec.noise_sigma, 0.0, 255.0);
            }
        }
        data.images.push_back(std::move(img));
    }
    return data;
}

void write_dataset(const SyntheticDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream labels(dir / "labels.csv");
    std::ofstream boxes(dir / "boxes.csv");
    if (!labels || !boxes) throw std::runtime_error("cannot write dataset to " + dir.string());
    labels << "image_id,label\n";
    boxes << "image_id,part,x0,y0,x1,y1,source\n";
    char buf[128];
    for (const SyntheticImage& img : data.images) {
        write_ppm(dir / "images" / (img.id + ".ppm"), img.image);
        labels << img.id << "," << img.label.index << "\n";
        for (const auto& [part, box] : img.boxes) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g", box.x0, box.y0, box.x1,
                          box.y1);
            boxes << img.id << "," << part_name(part) << "," << buf << ","
                  << source_name(box.source) << "\n";
        }
    }
    const Json manifest{{"n_images", data.images.size()},
                        {"n_classes", data.spec.n_classes},
                        {"image_size", data.spec.image_size},
                        {"part_box_side", data.spec.part_box_side},
                        {"background", data.spec.background},
                        {"intensity_base", data.spec.intensity_base},
                        {"intensity_step", data.spec.intensity_step},
                        {"noise_sigma", data.spec.noise_sigma},
                        {"jitter", data.spec.jitter},
                        {"seed", data.spec.seed}};
    std::ofstream mf(dir / "manifest.json");
    mf << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& dir) {
    std::ifstream labels(dir / "labels.csv");
    if (!labels) throw std::runtime_error("cannot read " + (dir / "labels.csv").string());
    Dataset data;
    std::unordered_map<std::string, std::size_t> index;
    std::string line;
    std::getline(labels, line);  // header
    while (std::getline(labels, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("bad labels row: " + line);
        DatasetImage img;
        img.id = line.substr(0, comma);
        img.label = ClassLabel{std::stoi(line.substr(comma + 1))};
        data.n_classes = std::max(data.n_classes, img.label.index + 1);
        img.image = read_ppm(dir / "images" / (img.id + ".ppm"));
        index.emplace(img.id, data.images.size());
        data.images.push_back(std::move(img));
    }
    std::ifstream boxes(dir / "boxes.csv");
    if (!boxes) throw std::runtime_error("cannot read " + (dir / "boxes.csv").string());
    std::getline(boxes, line);  // header
    while (std::getline(boxes, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, part_s, x0, y0, x1, y1, src;
        if (!std::getline(ss, id, ',') || !std::getline(ss, part_s, ',') ||
            !std::getline(ss, x0, ',') || !std::getline(ss, y0, ',') ||
            !std::getline(ss, x1, ',') || !std::getline(ss, y1, ',') ||
            !std::getline(ss, src)) {
            throw std::runtime_error("bad boxes row: " + line);
        }
        const auto part = part_from_name(part_s);
        const auto it = index.find(id);
        if (!part || it == index.end()) throw std::runtime_error("bad boxes row: " + line);
        PartBox box{*part, std::stod(x0), std::stod(y0), std::stod(x1), std::stod(y1),
                    source_from_name(src)};
        data.images[it->second].boxes.emplace(*part, box);
    }
    return data;
}

}  // namespace latvis
