#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specguard/matrix.hpp"

namespace specguard {

// Immutable after construction. Images are stored one flattened sample per
// row (channels * height * width), values in [0, 1].
struct Dataset {
    Matrix images;            // count x (channels * height * width)
    std::vector<int> labels;
    int channels = 1;
    int height = 0;
    int width = 0;
    int classes = 0;

    int count() const { return images.rows(); }
    int sample_dim() const { return channels * height * width; }
    void validate() const;
};

// Balanced synthetic set: one seeded template per class plus per-sample
// Gaussian noise (std 0.1), clamped to [0, 1] and snapped to the 8-bit grid
// so the on-disk byte format round-trips exactly.
Dataset synth_generate(int classes, int per_class, int image_size, std::uint64_t seed,
                       int channels = 1, double noise_std = 0.1);

// Train/test pair drawn from the same class templates; only the per-sample
// noise differs between the splits.
std::pair<Dataset, Dataset> synth_split(int classes, int per_class_train, int per_class_test,
                                        int image_size, std::uint64_t seed, int channels = 1,
                                        double noise_std = 0.1);

// MNIST-style IDX pair: big-endian headers, raw bytes scaled to [0,1] by /255.
// When expected_classes > 0, any label at or above it is a label-overflow
// error; otherwise the class count is inferred from the data.
Dataset load_idx_like(const std::string& images_path, const std::string& labels_path,
                      int expected_classes = 0);
void save_idx_like(const Dataset& data, const std::string& images_path, const std::string& labels_path);

}  // namespace specguard
