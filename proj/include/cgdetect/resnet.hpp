#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cgdetect/tensor.hpp"
#include "cgdetect/weights_io.hpp"

namespace cgd {

// Where the stride-2 downsampling convolution sits inside a bottleneck
// block. Original puts it on the first 1x1 (Caffe/Keras weight sets),
// V15 on the 3x3 (torchvision weight sets). Selected by the container
// metadata key "variant" (original | v1.5).
enum class ResNetVariant { Original, V15 };

struct ConvBn {
    ConvParams conv;
    BatchNormParams bn;
};

// 1x1 -> 3x3 -> 1x1 convolution triple with a shortcut connection.
struct BottleneckBlock {
    std::string name; // e.g. "stage2.block0", used in error messages
    ConvBn conv1, conv2, conv3;
    std::optional<ConvBn> projection; // 1x1 shortcut when dimensions change
    int stride = 1;

    int in_channels() const { return conv1.conv.kernel.c; }
    int out_channels() const { return conv3.conv.kernel.n; }
};

// relu(shortcut(x) + bn3(conv3(relu(bn2(conv2(relu(bn1(conv1(x)))))))))
Tensor block_forward(const BottleneckBlock& block, const Tensor& x);

struct TensorSpec {
    std::string name;
    std::vector<std::int64_t> shape;
};

// Every weight tensor the frozen network consumes, with its exact shape.
// Published in docs/architecture.md.
std::vector<TensorSpec> architecture_table();

// Per-stage channel/block layout: counts [3,4,6,3], channels
// 256 -> 512 -> 1024 -> 2048, spatial 56 -> 28 -> 14 -> 7.
struct StageSpec {
    int index;     // 1-based
    int blocks;
    int in_ch, mid_ch, out_ch;
    int stride;    // applied in the first block
};
const std::vector<StageSpec>& stage_specs();

// Frozen feature extractor: stem (7x7/64/s2 + BN + ReLU + 3x3/s2 maxpool),
// sixteen bottleneck blocks, global average pooling. Immutable once built.
class ResNet50 {
public:
    // Copies every parameter out of the store; throws FormatError naming the
    // first missing tensor or the first shape mismatch.
    static ResNet50 build(const WeightStore& store);

    // Forward pass over a preprocessed (n,3,224,224) batch; returns the
    // n x 2048 bottleneck feature matrix.
    Matrix extract(const Tensor& batch) const;

    ResNetVariant variant() const { return variant_; }
    const std::vector<BottleneckBlock>& blocks() const { return blocks_; }

private:
    ConvBn stem_;
    std::vector<BottleneckBlock> blocks_;
    ResNetVariant variant_ = ResNetVariant::Original;
};

} // namespace cgd
