#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specguard/autograd.hpp"
#include "specguard/matrix.hpp"

namespace specguard {

struct VitConfig {
    int image_size = 16;
    int patch_size = 4;
    int channels = 1;
    int embed_dim = 32;
    int heads = 4;
    int head_dim = 8;
    int layers = 2;
    double mlp_ratio = 4.0;
    int classes = 10;

    int tokens() const { return (image_size / patch_size) * (image_size / patch_size); }
    int patch_dim() const { return patch_size * patch_size * channels; }
    int input_dim() const { return channels * image_size * image_size; }
    int hidden_dim() const { return static_cast<int>(mlp_ratio * embed_dim + 0.5); }
    void validate() const;
};

// All trainable tensors in a fixed, named order; the order defines the
// checkpoint layout and the SGD/momentum pairing.
struct VitParams {
    VitConfig cfg;
    std::vector<std::string> names;
    std::vector<Matrix> tensors;

    int index_of(const std::string& name) const;
    Matrix& tensor(const std::string& name);
    const Matrix& tensor(const std::string& name) const;
};

// Truncated-normal (std 0.02, cut at 2 std) projections, zero biases and
// positional embeddings, unit LayerNorm gains.
VitParams init_vit_params(const VitConfig& cfg, std::uint64_t seed);

// Mutable per-head view into the parameter storage, enumerated in
// (layer, head) ascending order. Mutations through a view are visible in the
// next forward.
struct AttentionWeightsRef {
    int layer = 0;
    int head = 0;
    Matrix* wq = nullptr;
    Matrix* wk = nullptr;
    Matrix* wv = nullptr;
};
std::vector<AttentionWeightsRef> extract_attention_weights(VitParams& params);

// Graph-based forward over a batch (one flattened image per row). Exposes the
// input leaf (for attacks), one leaf per parameter tensor (for SGD) and the
// mean cross-entropy.
struct VitGraph {
    Graph g;
    Graph::Value input;
    std::vector<Graph::Value> params;  // aligned with VitParams::tensors
    Graph::Value logits;               // batch x classes
    Graph::Value cls_loss;
};
void vit_forward(const VitParams& params, const Matrix& images, const std::vector<int>& labels,
                 VitGraph& out);

// Plain inference path (no graph). Optionally captures the post-LayerNorm
// attention input of every layer for the first sample in the batch.
Matrix vit_forward_plain(const VitParams& params, const Matrix& images,
                         std::vector<Matrix>* capture_attention_inputs = nullptr);

std::vector<int> predict(const VitParams& params, const Matrix& images);

// Checkpoint: magic line, config lines, tensor manifest, then raw row-major
// little-endian payloads in manifest order.
void save_checkpoint(const VitParams& params, const std::string& path);
VitParams load_checkpoint(const std::string& path);

}  // namespace specguard
