#include "specguard/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace specguard {

void Dataset::validate() const {
    if (images.cols() != sample_dim())
        throw ShapeError("Dataset: image width " + std::to_string(images.cols()) + " vs dims " +
                         std::to_string(sample_dim()));
    if (static_cast<int>(labels.size()) != images.rows())
        throw ShapeError("Dataset: label count mismatch");
    for (int lab : labels)
        if (lab < 0 || lab >= classes)
            throw ContractError("Dataset: label " + std::to_string(lab) + " out of range");
    for (real v : images.raw())
        if (v < real(0) || v > real(1)) throw ContractError("Dataset: pixel outside [0,1]");
}

namespace {

Dataset synth_from(Rng& rng, const std::vector<std::vector<double>>& templates, int per_class,
                   int image_size, int channels, double noise_std) {
    const int classes = static_cast<int>(templates.size());
    Dataset d;
    d.channels = channels;
    d.height = image_size;
    d.width = image_size;
    d.classes = classes;

    const int dim = d.sample_dim();
    d.images = Matrix(classes * per_class, dim);
    d.labels.resize(static_cast<std::size_t>(classes) * per_class);
    int row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int s = 0; s < per_class; ++s, ++row) {
            d.labels[static_cast<std::size_t>(row)] = c;
            for (int k = 0; k < dim; ++k) {
                double v = templates[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] +
                           noise_std * rng.normal();
                v = std::min(1.0, std::max(0.0, v));
                // Snap to the byte grid used by the file format.
                v = std::round(v * 255.0) / 255.0;
                d.images.at(row, k) = static_cast<real>(v);
            }
        }
    }
    d.validate();
    return d;
}

std::vector<std::vector<double>> synth_templates(Rng& rng, int classes, int dim) {
    std::vector<std::vector<double>> templates(static_cast<std::size_t>(classes));
    for (auto& t : templates) {
        t.resize(static_cast<std::size_t>(dim));
        for (auto& v : t) v = rng.uniform();
    }
    return templates;
}

}  // namespace

Dataset synth_generate(int classes, int per_class, int image_size, std::uint64_t seed,
                       int channels, double noise_std) {
    if (classes < 2) throw ContractError("synth_generate: need at least 2 classes");
    if (per_class < 0) throw ContractError("synth_generate: per_class must be >= 0");
    Rng rng(seed);
    const auto templates = synth_templates(rng, classes, image_size * image_size * channels);
    return synth_from(rng, templates, per_class, image_size, channels, noise_std);
}

std::pair<Dataset, Dataset> synth_split(int classes, int per_class_train, int per_class_test,
                                        int image_size, std::uint64_t seed, int channels,
                                        double noise_std) {
    if (classes < 2) throw ContractError("synth_split: need at least 2 classes");
    if (per_class_train < 0 || per_class_test < 0)
        throw ContractError("synth_split: negative per-class count");
    Rng rng(seed);
    const auto templates = synth_templates(rng, classes, image_size * image_size * channels);
    Dataset train = synth_from(rng, templates, per_class_train, image_size, channels, noise_std);
    Dataset test = synth_from(rng, templates, per_class_test, image_size, channels, noise_std);
    return {std::move(train), std::move(test)};
}

namespace {

std::uint32_t read_u32_be(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw IoError("truncated header in " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

void write_u32_be(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

}  // namespace

Dataset load_idx_like(const std::string& images_path, const std::string& labels_path,
                      int expected_classes) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot open " + images_path);
    if (read_u32_be(imgs, images_path) != kImagesMagic)
        throw IoError("bad magic in " + images_path);
    const std::uint32_t count = read_u32_be(imgs, images_path);
    const std::uint32_t rows = read_u32_be(imgs, images_path);
    const std::uint32_t cols = read_u32_be(imgs, images_path);

    Dataset d;
    d.channels = 1;
    d.height = static_cast<int>(rows);
    d.width = static_cast<int>(cols);

    const std::size_t pixels = static_cast<std::size_t>(count) * rows * cols;
    std::vector<unsigned char> buf(pixels);
    imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels));
    if (static_cast<std::size_t>(imgs.gcount()) != pixels)
        throw IoError("truncated image payload in " + images_path);

    d.images = Matrix(static_cast<int>(count), static_cast<int>(rows * cols));
    for (std::size_t k = 0; k < pixels; ++k)
        d.images.raw()[k] = static_cast<real>(buf[k] / 255.0);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError("cannot open " + labels_path);
    if (read_u32_be(labs, labels_path) != kLabelsMagic)
        throw IoError("bad magic in " + labels_path);
    const std::uint32_t label_count = read_u32_be(labs, labels_path);
    if (label_count != count)
        throw IoError("label count " + std::to_string(label_count) + " does not match image count " +
                      std::to_string(count));
    std::vector<unsigned char> lab_buf(label_count);
    labs.read(reinterpret_cast<char*>(lab_buf.data()), static_cast<std::streamsize>(label_count));
    if (static_cast<std::size_t>(labs.gcount()) != label_count)
        throw IoError("truncated label payload in " + labels_path);

    int max_label = 0;
    d.labels.resize(label_count);
    for (std::size_t k = 0; k < lab_buf.size(); ++k) {
        d.labels[k] = lab_buf[k];
        max_label = std::max(max_label, d.labels[k]);
    }
    if (expected_classes > 0 && max_label >= expected_classes)
        throw ContractError("label overflow: found label " + std::to_string(max_label) +
                            " but expected classes < " + std::to_string(expected_classes));
    d.classes = expected_classes > 0 ? expected_classes : max_label + 1;
    d.validate();
    return d;
}

void save_idx_like(const Dataset& data, const std::string& images_path, const std::string& labels_path) {
    if (data.channels != 1) throw ContractError("save_idx_like: only single-channel datasets");
    if (data.classes > 256) throw ContractError("save_idx_like: labels exceed one byte");

    std::ofstream imgs(images_path, std::ios::binary);
    if (!imgs) throw IoError("cannot write " + images_path);
    write_u32_be(imgs, kImagesMagic);
    write_u32_be(imgs, static_cast<std::uint32_t>(data.count()));
    write_u32_be(imgs, static_cast<std::uint32_t>(data.height));
    write_u32_be(imgs, static_cast<std::uint32_t>(data.width));
    std::vector<unsigned char> buf(data.images.size());
    for (std::size_t k = 0; k < buf.size(); ++k) {
        const double v = static_cast<double>(data.images.raw()[k]);
        buf[k] = static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
    }
    imgs.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));

    std::ofstream labs(labels_path, std::ios::binary);
    if (!labs) throw IoError("cannot write " + labels_path);
    write_u32_be(labs, kLabelsMagic);
    write_u32_be(labs, static_cast<std::uint32_t>(data.labels.size()));
    std::vector<unsigned char> lab_buf(data.labels.size());
    for (std::size_t k = 0; k < lab_buf.size(); ++k)
        lab_buf[k] = static_cast<unsigned char>(data.labels[k]);
    labs.write(reinterpret_cast<const char*>(lab_buf.data()), static_cast<std::streamsize>(lab_buf.size()));
}

}  // namespace specguard
