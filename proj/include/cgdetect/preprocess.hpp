#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgdetect/tensor.hpp"
#include "cgdetect/weights_io.hpp"

namespace cgd {

// 8-bit RGB image, row-major, three bytes per pixel.
struct RgbImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(int x, int y, int chan) const {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + chan];
    }
};

enum class ChannelOrder { RGB, BGR };

// Binary PPM (P6, maxval 255) decoder; exact pixel passthrough.
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes);
RgbImage load_ppm(const std::string& path);

// Bilinear interpolation with half-pixel centers; no aspect preservation.
RgbImage resize_bilinear(const RgbImage& img, int out_width, int out_height);

// Per-channel float = pixel - mean[channel], channels permuted to the
// declared order. Input must already be 224x224.
Tensor to_input_tensor(const RgbImage& img, const float means[3], ChannelOrder order);

// Mean values and channel order come from the weight container metadata.
struct PreprocessConfig {
    float mean_rgb[3] = {123.68f, 116.779f, 103.939f};
    ChannelOrder channel_order = ChannelOrder::RGB;
};

// Reads "mean_rgb" and "channel_order" from container metadata; throws
// FormatError when missing or malformed.
PreprocessConfig preprocess_config_from_metadata(
    const std::map<std::string, std::string>& metadata);

// Full path: decode -> resize to 224 -> mean-subtracted tensor.
Tensor preprocess_image(const RgbImage& img, const PreprocessConfig& cfg);

// One manifest line: <path>\t<label in {cg,pg}>\t<id>.
struct ManifestEntry {
    std::string path;
    int label = 0; // CG=1, PG=0
    std::string id;
};

std::vector<ManifestEntry> parse_manifest(const std::string& text);
std::vector<ManifestEntry> load_manifest(const std::string& path);

} // namespace cgd
