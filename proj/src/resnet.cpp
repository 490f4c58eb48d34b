#include "cgdetect/resnet.hpp"

#include <sstream>

namespace cgd {

namespace {

std::string shape_to_str(const std::vector<std::int64_t>& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

void require_tensor(const WeightStore& store, const TensorSpec& spec) {
    if (!store.contains(spec.name)) {
        throw FormatError("weight container missing tensor '" + spec.name + "'");
    }
    const TensorEntry& e = store.entry(spec.name);
    if (e.shape != spec.shape) {
        throw FormatError("tensor '" + spec.name + "' has shape " + shape_to_str(e.shape) +
                          ", expected " + shape_to_str(spec.shape));
    }
}

BatchNormParams load_bn(const WeightStore& store, const std::string& prefix) {
    BatchNormParams bn;
    bn.gamma = store.vector1d(prefix + ".gamma");
    bn.beta = store.vector1d(prefix + ".beta");
    bn.running_mean = store.vector1d(prefix + ".running_mean");
    bn.running_var = store.vector1d(prefix + ".running_var");
    bn.epsilon = 1e-5f;
    return bn;
}

ConvBn load_conv_bn(const WeightStore& store, const std::string& conv_name,
                    const std::string& bn_prefix, int stride, int padding) {
    ConvBn cb;
    cb.conv.kernel = store.tensor4d(conv_name + ".kernel");
    cb.conv.stride = stride;
    cb.conv.padding = padding;
    cb.bn = load_bn(store, bn_prefix);
    return cb;
}

void append_bn_specs(std::vector<TensorSpec>& specs, const std::string& prefix, int ch) {
    for (const char* part : {".gamma", ".beta", ".running_mean", ".running_var"}) {
        specs.push_back({prefix + part, {ch}});
    }
}

} // namespace

const std::vector<StageSpec>& stage_specs() {
    static const std::vector<StageSpec> kStages = {
        {1, 3, 64, 64, 256, 1},
        {2, 4, 256, 128, 512, 2},
        {3, 6, 512, 256, 1024, 2},
        {4, 3, 1024, 512, 2048, 2},
    };
    return kStages;
}

std::vector<TensorSpec> architecture_table() {
    std::vector<TensorSpec> specs;
    specs.push_back({"stem.conv.kernel", {64, 3, 7, 7}});
    append_bn_specs(specs, "stem.bn", 64);
    for (const StageSpec& st : stage_specs()) {
        for (int b = 0; b < st.blocks; ++b) {
            const std::string p =
                "stage" + std::to_string(st.index) + ".block" + std::to_string(b);
            const int in_ch = b == 0 ? st.in_ch : st.out_ch;
            specs.push_back({p + ".conv1.kernel", {st.mid_ch, in_ch, 1, 1}});
            append_bn_specs(specs, p + ".bn1", st.mid_ch);
            specs.push_back({p + ".conv2.kernel", {st.mid_ch, st.mid_ch, 3, 3}});
            append_bn_specs(specs, p + ".bn2", st.mid_ch);
            specs.push_back({p + ".conv3.kernel", {st.out_ch, st.mid_ch, 1, 1}});
            append_bn_specs(specs, p + ".bn3", st.out_ch);
            if (b == 0) {
                specs.push_back({p + ".downsample.kernel", {st.out_ch, in_ch, 1, 1}});
                append_bn_specs(specs, p + ".downsample_bn", st.out_ch);
            }
        }
    }
    return specs;
}

Tensor block_forward(const BottleneckBlock& block, const Tensor& x) {
    if (x.c != block.in_channels()) {
        throw ShapeError("block " + block.name + ": input has " + std::to_string(x.c) +
                         " channels, expected " + std::to_string(block.in_channels()));
    }
    Tensor f;
    try {
        f = relu(batchnorm_infer(conv2d(x, block.conv1.conv), block.conv1.bn));
        f = relu(batchnorm_infer(conv2d(f, block.conv2.conv), block.conv2.bn));
        f = batchnorm_infer(conv2d(f, block.conv3.conv), block.conv3.bn);
    } catch (const ShapeError& e) {
        throw ShapeError("block " + block.name + ": " + e.what());
    }
    Tensor shortcut;
    if (block.projection) {
        shortcut = batchnorm_infer(conv2d(x, block.projection->conv), block.projection->bn);
    } else {
        shortcut = x;
    }
    if (!shortcut.same_shape(f)) {
        throw ShapeError("block " + block.name + ": shortcut shape " + shortcut.shape_str() +
                         " does not match residual path " + f.shape_str());
    }
    return relu(add(shortcut, f));
}

ResNet50 ResNet50::build(const WeightStore& store) {
    for (const TensorSpec& spec : architecture_table()) {
        require_tensor(store, spec);
    }

    ResNet50 model;
    auto vit = store.metadata.find("variant");
    if (vit != store.metadata.end()) {
        if (vit->second == "original") {
            model.variant_ = ResNetVariant::Original;
        } else if (vit->second == "v1.5") {
            model.variant_ = ResNetVariant::V15;
        } else {
            throw FormatError("unknown resnet variant '" + vit->second +
                              "' (expected original or v1.5)");
        }
    }

    model.stem_ = load_conv_bn(store, "stem.conv", "stem.bn", /*stride=*/2, /*padding=*/3);

    for (const StageSpec& st : stage_specs()) {
        for (int b = 0; b < st.blocks; ++b) {
            const std::string p =
                "stage" + std::to_string(st.index) + ".block" + std::to_string(b);
            BottleneckBlock blk;
            blk.name = p;
            blk.stride = b == 0 ? st.stride : 1;
            const int s1 = model.variant_ == ResNetVariant::Original ? blk.stride : 1;
            const int s2 = model.variant_ == ResNetVariant::Original ? 1 : blk.stride;
            blk.conv1 = load_conv_bn(store, p + ".conv1", p + ".bn1", s1, 0);
            blk.conv2 = load_conv_bn(store, p + ".conv2", p + ".bn2", s2, 1);
            blk.conv3 = load_conv_bn(store, p + ".conv3", p + ".bn3", 1, 0);
            if (b == 0) {
                blk.projection = load_conv_bn(store, p + ".downsample", p + ".downsample_bn",
                                              blk.stride, 0);
            }
            model.blocks_.push_back(std::move(blk));
        }
    }
    return model;
}

Matrix ResNet50::extract(const Tensor& batch) const {
    if (batch.c != 3 || batch.h != 224 || batch.w != 224) {
        throw ShapeError("extract: input shape " + batch.shape_str() +
                         " must be (n,3,224,224)");
    }
    Tensor x = relu(batchnorm_infer(conv2d(batch, stem_.conv), stem_.bn));
    x = maxpool2d(x, 3, 3, /*stride=*/2, /*padding=*/1);
    for (const BottleneckBlock& blk : blocks_) {
        x = block_forward(blk, x);
    }
    const Tensor pooled = global_avg_pool(x);

    Matrix features(batch.n, pooled.c);
    features.data = pooled.data;
    return features;
}

} // namespace cgd
