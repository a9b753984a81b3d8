#include "latvis/predictors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "latvis/digest.hpp"

namespace latvis {

PartPrediction top1(PartKind part, const std::optional<ProbabilityVector>& probs) {
    if (!probs || probs->values.empty()) return PartPrediction::unrecognized(part);
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs->values.size(); ++i) {
        if (probs->values[i] > probs->values[best]) best = i;
    }
    return PartPrediction{part, ClassLabel{static_cast<int>(best)}, probs->values[best], true};
}

void TablePredictor::set(const std::string& image_id, PartKind part,
                         std::optional<ProbabilityVector> probs) {
    if (probs) {
        if (probs->n_classes() != n_classes_) {
            throw std::invalid_argument("table row has wrong class count");
        }
        probs->validate();
    }
    rows_[{image_id, part}] = std::move(probs);
}

std::optional<ProbabilityVector> TablePredictor::predict(const PartQuery& q) const {
    const auto it = rows_.find({q.image_id, q.part});
    if (it == rows_.end()) return std::nullopt;
    return it->second;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace

TablePredictor TablePredictor::load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty table: " + path.string());
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "image_id" || header[1] != "part") {
        throw std::runtime_error("bad table header: " + path.string());
    }
    const int n = static_cast<int>(header.size()) - 2;
    TablePredictor table(n);
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv(line);
        const auto where = [&] { return path.string() + ":" + std::to_string(line_no); };
        if (fields.size() < 3) throw std::runtime_error("short row at " + where());
        const auto part = part_from_name(fields[1]);
        if (!part) throw std::runtime_error("unknown part at " + where());
        if (fields[2] == "UNRECOGNIZED") {
            table.set(fields[0], *part, std::nullopt);
            continue;
        }
        if (static_cast<int>(fields.size()) != n + 2) {
            throw std::runtime_error("wrong column count at " + where());
        }
        ProbabilityVector p;
        p.values.reserve(static_cast<std::size_t>(n));
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double v = std::stod(fields[static_cast<std::size_t>(i) + 2]);
            p.values.push_back(v);
            sum += v;
        }
        p.validate();
        if (std::abs(sum - 1.0) > 1e-6) {
            throw std::runtime_error("probabilities sum to " + std::to_string(sum) + " at " +
                                     where());
        }
        table.set(fields[0], *part, std::move(p));
    }
    return table;
}

void TablePredictor::save_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "image_id,part";
    for (int i = 0; i < n_classes_; ++i) out << ",p_" << i;
    out << "\n";
    char buf[32];
    for (const auto& [key, probs] : rows_) {
        out << key.first << "," << part_name(key.second);
        if (!probs) {
            out << ",UNRECOGNIZED\n";
            continue;
        }
        for (double v : probs->values) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << "," << buf;
        }
        out << "\n";
    }
}

ToyNet ToyNet::init(int input_dim, int hidden_dim, int n_classes, Rng& rng) {
    if (input_dim < 1 || hidden_dim < 0 || n_classes < 2) {
        throw std::invalid_argument("toynet init: bad dimensions");
    }
    ToyNet net;
    net.input_dim = input_dim;
    net.hidden_dim = hidden_dim;
    net.n_classes = n_classes;
    if (hidden_dim > 0) {
        const double s1 = std::sqrt(2.0 / input_dim);
        net.w1.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
        for (double& w : net.w1) w = rng.next_normal() * s1;
        net.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0);
        const double s2 = std::sqrt(2.0 / hidden_dim);
        net.w2.resize(static_cast<std::size_t>(n_classes) * hidden_dim);
        for (double& w : net.w2) w = rng.next_normal() * s2;
    } else {
        const double s2 = std::sqrt(1.0 / input_dim);
        net.w2.resize(static_cast<std::size_t>(n_classes) * input_dim);
        for (double& w : net.w2) w = rng.next_normal() * s2;
    }
    net.b2.assign(static_cast<std::size_t>(n_classes), 0.0);
    return net;
}

std::vector<double> ToyNet::logits(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_dim) {
        throw std::invalid_argument("toynet: input dimension mismatch");
    }
    std::vector<double> z2(static_cast<std::size_t>(n_classes));
    if (hidden_dim == 0) {
        for (int k = 0; k < n_classes; ++k) {
            const double* row = &w2[static_cast<std::size_t>(k) * input_dim];
            double s = b2[static_cast<std::size_t>(k)];
            for (int j = 0; j < input_dim; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
            z2[static_cast<std::size_t>(k)] = s;
        }
        return z2;
    }
    std::vector<double> a(static_cast<std::size_t>(hidden_dim));
    for (int h = 0; h < hidden_dim; ++h) {
        const double* row = &w1[static_cast<std::size_t>(h) * input_dim];
        double s = b1[static_cast<std::size_t>(h)];
        for (int j = 0; j < input_dim; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
        a[static_cast<std::size_t>(h)] = s > 0.0 ? s : 0.0;
    }
    for (int k = 0; k < n_classes; ++k) {
        const double* row = &w2[static_cast<std::size_t>(k) * hidden_dim];
        double s = b2[static_cast<std::size_t>(k)];
        for (int h = 0; h < hidden_dim; ++h) s += row[h] * a[static_cast<std::size_t>(h)];
        z2[static_cast<std::size_t>(k)] = s;
    }
    return z2;
}

namespace {

// In-place stable softmax; returns logsumexp for loss reuse.
double softmax_inplace(std::vector<double>& z) {
    double zmax = z[0];
    for (double v : z) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (double& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (double& v : z) v /= sum;
    return zmax + std::log(sum);
}

}  // namespace

ProbabilityVector ToyNet::forward(std::span<const double> x) const {
    std::vector<double> z = logits(x);
    softmax_inplace(z);
    return ProbabilityVector{std::move(z)};
}

double ToyNet::loss(std::span<const double> x, ClassLabel y) const {
    if (y.index < 0 || y.index >= n_classes) throw std::invalid_argument("toynet: bad label");
    std::vector<double> z = logits(x);
    const double target = z[static_cast<std::size_t>(y.index)];
    const double lse = softmax_inplace(z);
    return lse - target;
}

std::vector<double> ToyNet::input_gradient(std::span<const double> x, ClassLabel y) const {
    if (y.index < 0 || y.index >= n_classes) throw std::invalid_argument("toynet: bad label");
    if (static_cast<int>(x.size()) != input_dim) {
        throw std::invalid_argument("toynet: input dimension mismatch");
    }
    // dz2 = softmax - onehot
    std::vector<double> dz2 = logits(x);
    softmax_inplace(dz2);
    dz2[static_cast<std::size_t>(y.index)] -= 1.0;

    std::vector<double> dx(static_cast<std::size_t>(input_dim), 0.0);
    if (hidden_dim == 0) {
        for (int k = 0; k < n_classes; ++k) {
            const double g = dz2[static_cast<std::size_t>(k)];
            const double* row = &w2[static_cast<std::size_t>(k) * input_dim];
            for (int j = 0; j < input_dim; ++j) dx[static_cast<std::size_t>(j)] += g * row[j];
        }
        return dx;
    }
    // Recompute z1 to know which ReLU units were active.
    std::vector<double> z1(static_cast<std::size_t>(hidden_dim));
    for (int h = 0; h < hidden_dim; ++h) {
        const double* row = &w1[static_cast<std::size_t>(h) * input_dim];
        double s = b1[static_cast<std::size_t>(h)];
        for (int j = 0; j < input_dim; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
        z1[static_cast<std::size_t>(h)] = s;
    }
    std::vector<double> dz1(static_cast<std::size_t>(hidden_dim), 0.0);
    for (int k = 0; k < n_classes; ++k) {
        const double g = dz2[static_cast<std::size_t>(k)];
        const double* row = &w2[static_cast<std::size_t>(k) * hidden_dim];
        for (int h = 0; h < hidden_dim; ++h) dz1[static_cast<std::size_t>(h)] += g * row[h];
    }
    for (int h = 0; h < hidden_dim; ++h) {
        if (z1[static_cast<std::size_t>(h)] <= 0.0) continue;
        const double g = dz1[static_cast<std::size_t>(h)];
        const double* row = &w1[static_cast<std::size_t>(h) * input_dim];
        for (int j = 0; j < input_dim; ++j) dx[static_cast<std::size_t>(j)] += g * row[j];
    }
    return dx;
}

ToyNet::TrainStats ToyNet::train(const std::vector<std::vector<double>>& X,
                                 const std::vector<ClassLabel>& y, int epochs, double lr,
                                 int batch_size, Rng& rng) {
    if (X.empty() || X.size() != y.size()) throw std::invalid_argument("toynet train: bad data");
    if (batch_size < 1) throw std::invalid_argument("toynet train: bad batch size");
    const int n = static_cast<int>(X.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    std::vector<double> gw1(w1.size()), gb1(b1.size()), gw2(w2.size()), gb2(b2.size());
    std::vector<double> z1(static_cast<std::size_t>(hidden_dim));
    std::vector<double> a(static_cast<std::size_t>(hidden_dim));
    double epoch_loss = 0.0;

    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        epoch_loss = 0.0;
        for (int start = 0; start < n; start += batch_size) {
            const int stop = std::min(start + batch_size, n);
            const int bs = stop - start;
            std::fill(gw1.begin(), gw1.end(), 0.0);
            std::fill(gb1.begin(), gb1.end(), 0.0);
            std::fill(gw2.begin(), gw2.end(), 0.0);
            std::fill(gb2.begin(), gb2.end(), 0.0);
            for (int bi = start; bi < stop; ++bi) {
                const auto& x = X[static_cast<std::size_t>(order[static_cast<std::size_t>(bi)])];
                const int label = y[static_cast<std::size_t>(order[static_cast<std::size_t>(bi)])].index;
                // Forward, keeping hidden pre-activations for backprop.
                std::vector<double> dz2(static_cast<std::size_t>(n_classes));
                if (hidden_dim > 0) {
                    for (int h = 0; h < hidden_dim; ++h) {
                        const double* row = &w1[static_cast<std::size_t>(h) * input_dim];
                        double s = b1[static_cast<std::size_t>(h)];
                        for (int j = 0; j < input_dim; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
                        z1[static_cast<std::size_t>(h)] = s;
                        a[static_cast<std::size_t>(h)] = s > 0.0 ? s : 0.0;
                    }
                    for (int k = 0; k < n_classes; ++k) {
                        const double* row = &w2[static_cast<std::size_t>(k) * hidden_dim];
                        double s = b2[static_cast<std::size_t>(k)];
                        for (int h = 0; h < hidden_dim; ++h) s += row[h] * a[static_cast<std::size_t>(h)];
                        dz2[static_cast<std::size_t>(k)] = s;
                    }
                } else {
                    for (int k = 0; k < n_classes; ++k) {
                        const double* row = &w2[static_cast<std::size_t>(k) * input_dim];
                        double s = b2[static_cast<std::size_t>(k)];
                        for (int j = 0; j < input_dim; ++j) s += row[j] * x[static_cast<std::size_t>(j)];
                        dz2[static_cast<std::size_t>(k)] = s;
                    }
                }
                const double target = dz2[static_cast<std::size_t>(label)];
                const double lse = softmax_inplace(dz2);
                epoch_loss += lse - target;
                dz2[static_cast<std::size_t>(label)] -= 1.0;

                if (hidden_dim > 0) {
                    for (int k = 0; k < n_classes; ++k) {
                        const double g = dz2[static_cast<std::size_t>(k)];
                        gb2[static_cast<std::size_t>(k)] += g;
                        double* grow = &gw2[static_cast<std::size_t>(k) * hidden_dim];
                        for (int h = 0; h < hidden_dim; ++h) grow[h] += g * a[static_cast<std::size_t>(h)];
                    }
                    for (int h = 0; h < hidden_dim; ++h) {
                        if (z1[static_cast<std::size_t>(h)] <= 0.0) continue;
                        double g = 0.0;
                        for (int k = 0; k < n_classes; ++k) {
                            g += dz2[static_cast<std::size_t>(k)] *
                                 w2[static_cast<std::size_t>(k) * hidden_dim + h];
                        }
                        gb1[static_cast<std::size_t>(h)] += g;
                        double* grow = &gw1[static_cast<std::size_t>(h) * input_dim];
                        for (int j = 0; j < input_dim; ++j) grow[j] += g * x[static_cast<std::size_t>(j)];
                    }
                } else {
                    for (int k = 0; k < n_classes; ++k) {
                        const double g = dz2[static_cast<std::size_t>(k)];
                        gb2[static_cast<std::size_t>(k)] += g;
                        double* grow = &gw2[static_cast<std::size_t>(k) * input_dim];
                        for (int j = 0; j < input_dim; ++j) grow[j] += g * x[static_cast<std::size_t>(j)];
                    }
                }
            }
            const double step = lr / bs;
            for (std::size_t i = 0; i < w1.size(); ++i) w1[i] -= step * gw1[i];
            for (std::size_t i = 0; i < b1.size(); ++i) b1[i] -= step * gb1[i];
            for (std::size_t i = 0; i < w2.size(); ++i) w2[i] -= step * gw2[i];
            for (std::size_t i = 0; i < b2.size(); ++i) b2[i] -= step * gb2[i];
        }
        epoch_loss /= n;
        if (!std::isfinite(epoch_loss)) {
            throw std::runtime_error("toynet train diverged at epoch " + std::to_string(e) +
                                     " (loss not finite; reduce lr " + std::to_string(lr) + ")");
        }
    }
    return TrainStats{epoch_loss, accuracy(X, y)};
}

double ToyNet::accuracy(const std::vector<std::vector<double>>& X,
                        const std::vector<ClassLabel>& y) const {
    if (X.empty()) return 0.0;
    int correct = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const auto z = logits(X[i]);
        int best = 0;
        for (int k = 1; k < n_classes; ++k) {
            if (z[static_cast<std::size_t>(k)] > z[static_cast<std::size_t>(best)]) best = k;
        }
        if (best == y[i].index) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(X.size());
}

void ToyNet::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    const Json header{{"input_dim", input_dim},
                      {"hidden_dim", hidden_dim},
                      {"n_classes", n_classes}};
    out << "TOYNET1\n" << header.dump() << "\n";
    const auto dump = [&](const std::vector<double>& v) {
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    dump(w1);
    dump(b1);
    dump(w2);
    dump(b2);
}

ToyNet ToyNet::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::string magic, header_line;
    std::getline(in, magic);
    if (magic != "TOYNET1") throw std::runtime_error("not a toynet checkpoint: " + path.string());
    std::getline(in, header_line);
    const Json header = Json::parse(header_line);
    ToyNet net;
    net.input_dim = header.at("input_dim").get<int>();
    net.hidden_dim = header.at("hidden_dim").get<int>();
    net.n_classes = header.at("n_classes").get<int>();
    const auto read_vec = [&](std::vector<double>& v, std::size_t count) {
        v.resize(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double)) {
            throw std::runtime_error("truncated toynet checkpoint: " + path.string());
        }
    };
    if (net.hidden_dim > 0) {
        read_vec(net.w1, static_cast<std::size_t>(net.hidden_dim) * net.input_dim);
        read_vec(net.b1, static_cast<std::size_t>(net.hidden_dim));
        read_vec(net.w2, static_cast<std::size_t>(net.n_classes) * net.hidden_dim);
    } else {
        read_vec(net.w2, static_cast<std::size_t>(net.n_classes) * net.input_dim);
    }
    read_vec(net.b2, static_cast<std::size_t>(net.n_classes));
    return net;
}

std::string ToyNet::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto mix = [&h](const std::vector<double>& v) {
        const std::uint64_t part = fnv1a64(std::span<const double>(v));
        h ^= part;
        h *= 0x100000001b3ull;
    };
    mix(w1);
    mix(b1);
    mix(w2);
    mix(b2);
    return hex_digest(h);
}

double NativeToyNet::loss(std::span<const double> x_native, ClassLabel y) const {
    std::vector<double> unit(x_native.size());
    for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = x_native[i] / 255.0;
    return net_->loss(unit, y);
}

std::vector<double> NativeToyNet::gradient(std::span<const double> x_native,
                                           ClassLabel y) const {
    std::vector<double> unit(x_native.size());
    for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = x_native[i] / 255.0;
    std::vector<double> g = net_->input_gradient(unit, y);
    for (double& v : g) v /= 255.0;
    return g;
}

ToyNetPredictor::ToyNetPredictor(std::shared_ptr<const ToyNet> net, int input_side)
    : net_(std::move(net)), input_side_(input_side) {
    if (input_side_ * input_side_ != net_->input_dim) {
        throw std::invalid_argument("toynet predictor: side^2 != input_dim");
    }
}

std::optional<ProbabilityVector> ToyNetPredictor::predict(const PartQuery& q) const {
    if (q.crop == nullptr || q.crop->width < 1 || q.crop->height < 1) return std::nullopt;
    const GrayImage r = resize_bilinear(*q.crop, input_side_, input_side_);
    return net_->forward(r.pixels);
}

ForestPredictor::ForestPredictor(RandomForest forest, FeatureVariantSet variants)
    : forest_(std::move(forest)), variants_(std::move(variants)) {}

std::optional<ProbabilityVector> ForestPredictor::predict(const PartQuery& q) const {
    if (q.crop == nullptr || q.crop->width < 2 || q.crop->height < 2) return std::nullopt;
    return predict_features(part_features(*q.crop, variants_));
}

std::optional<ProbabilityVector> ForestPredictor::predict_features(
    std::span<const double> features) const {
    return forest_.predict_proba(features);
}

}  // namespace latvis
