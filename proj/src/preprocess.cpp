#include "cgdetect/preprocess.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace cgd {

namespace {

// PPM header tokens are separated by whitespace; '#' starts a comment that
// runs to end of line.
struct PpmScanner {
    const std::vector<std::uint8_t>& bytes;
    size_t pos = 0;

    std::string next_token() {
        while (pos < bytes.size()) {
            const char ch = static_cast<char>(bytes[pos]);
            if (ch == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(static_cast<unsigned char>(ch))) {
                ++pos;
            } else {
                break;
            }
        }
        const size_t start = pos;
        while (pos < bytes.size() &&
               !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        if (start == pos) throw FormatError("PPM header ended unexpectedly");
        return std::string(bytes.begin() + start, bytes.begin() + pos);
    }

    int next_int(const char* what) {
        const std::string tok = next_token();
        try {
            size_t used = 0;
            const int v = std::stoi(tok, &used);
            if (used != tok.size()) throw std::invalid_argument(tok);
            return v;
        } catch (const std::exception&) {
            throw FormatError(std::string("PPM header: invalid ") + what + " '" + tok + "'");
        }
    }
};

} // namespace

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P') throw FormatError("not a PPM file (no P magic)");
    if (bytes[1] != '6') {
        throw FormatError(std::string("unsupported PPM type 'P") +
                          static_cast<char>(bytes[1]) + "' (only binary P6)");
    }
    PpmScanner sc{bytes, 2};
    const int width = sc.next_int("width");
    const int height = sc.next_int("height");
    const int maxval = sc.next_int("maxval");
    if (width < 1 || height < 1) throw FormatError("PPM dimensions must be positive");
    if (maxval != 255) {
        throw FormatError("PPM maxval " + std::to_string(maxval) + " unsupported (need 255)");
    }
    // exactly one whitespace byte separates the header from the raster
    if (sc.pos >= bytes.size() ||
        !std::isspace(static_cast<unsigned char>(bytes[sc.pos]))) {
        throw FormatError("PPM missing raster separator");
    }
    ++sc.pos;
    const size_t need = static_cast<size_t>(width) * height * 3;
    if (bytes.size() - sc.pos < need) {
        throw FormatError("PPM raster truncated: need " + std::to_string(need) +
                          " bytes, have " + std::to_string(bytes.size() - sc.pos));
    }
    RgbImage img;
    img.width = width;
    img.height = height;
    img.pixels.assign(bytes.begin() + sc.pos, bytes.begin() + sc.pos + need);
    return img;
}

RgbImage load_ppm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open image '" + path + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                    std::istreambuf_iterator<char>());
    try {
        return decode_ppm(bytes);
    } catch (const FormatError& e) {
        throw FormatError("'" + path + "': " + e.what());
    }
}

RgbImage resize_bilinear(const RgbImage& img, int out_width, int out_height) {
    if (img.width < 1 || img.height < 1) throw ShapeError("resize_bilinear: empty source");
    if (out_width == img.width && out_height == img.height) return img;

    RgbImage out;
    out.width = out_width;
    out.height = out_height;
    out.pixels.resize(static_cast<size_t>(out_width) * out_height * 3);

    const float sx = static_cast<float>(img.width) / out_width;
    const float sy = static_cast<float>(img.height) / out_height;
    for (int y = 0; y < out_height; ++y) {
        // half-pixel centers: sample source at (i + 0.5) * scale - 0.5
        float fy = (y + 0.5f) * sy - 0.5f;
        fy = std::clamp(fy, 0.0f, static_cast<float>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const float wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            float fx = (x + 0.5f) * sx - 0.5f;
            fx = std::clamp(fx, 0.0f, static_cast<float>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const float wx = fx - x0;
            for (int ch = 0; ch < 3; ++ch) {
                const float top = img.at(x0, y0, ch) * (1.0f - wx) + img.at(x1, y0, ch) * wx;
                const float bot = img.at(x0, y1, ch) * (1.0f - wx) + img.at(x1, y1, ch) * wx;
                const float v = top * (1.0f - wy) + bot * wy;
                out.pixels[(static_cast<size_t>(y) * out_width + x) * 3 + ch] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
            }
        }
    }
    return out;
}

Tensor to_input_tensor(const RgbImage& img, const float means[3], ChannelOrder order) {
    if (img.width != 224 || img.height != 224) {
        throw ShapeError("to_input_tensor: image is " + std::to_string(img.width) + "x" +
                         std::to_string(img.height) + ", expected 224x224");
    }
    Tensor t(1, 3, 224, 224);
    for (int ch = 0; ch < 3; ++ch) {
        // plane index in the output tensor for source channel ch
        const int plane = order == ChannelOrder::RGB ? ch : 2 - ch;
        float* dst = t.data.data() + static_cast<size_t>(plane) * 224 * 224;
        const float mean = means[ch];
        for (int y = 0; y < 224; ++y) {
            for (int x = 0; x < 224; ++x) {
                dst[y * 224 + x] = static_cast<float>(img.at(x, y, ch)) - mean;
            }
        }
    }
    return t;
}

PreprocessConfig preprocess_config_from_metadata(
    const std::map<std::string, std::string>& metadata) {
    PreprocessConfig cfg;
    auto it = metadata.find("channel_order");
    if (it == metadata.end()) {
        throw FormatError("weight container metadata missing 'channel_order'");
    }
    if (it->second == "RGB") {
        cfg.channel_order = ChannelOrder::RGB;
    } else if (it->second == "BGR") {
        cfg.channel_order = ChannelOrder::BGR;
    } else {
        throw FormatError("channel_order must be RGB or BGR, got '" + it->second + "'");
    }
    it = metadata.find("mean_rgb");
    if (it == metadata.end()) {
        throw FormatError("weight container metadata missing 'mean_rgb'");
    }
    std::istringstream ss(it->second);
    std::string part;
    int i = 0;
    while (std::getline(ss, part, ',') && i < 3) {
        try {
            cfg.mean_rgb[i] = std::stof(part);
        } catch (const std::exception&) {
            throw FormatError("mean_rgb component '" + part + "' is not a number");
        }
        ++i;
    }
    if (i != 3 || std::getline(ss, part, ',')) {
        throw FormatError("mean_rgb must be three comma-separated floats, got '" +
                          it->second + "'");
    }
    return cfg;
}

Tensor preprocess_image(const RgbImage& img, const PreprocessConfig& cfg) {
    const RgbImage resized = resize_bilinear(img, 224, 224);
    return to_input_tensor(resized, cfg.mean_rgb, cfg.channel_order);
}

std::vector<ManifestEntry> parse_manifest(const std::string& text) {
    std::vector<ManifestEntry> entries;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const size_t t1 = line.find('\t');
        const size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t1 == std::string::npos || t2 == std::string::npos) {
            throw FormatError("manifest line " + std::to_string(lineno) +
                              ": expected <path>\\t<label>\\t<id>");
        }
        ManifestEntry e;
        e.path = line.substr(0, t1);
        const std::string label = line.substr(t1 + 1, t2 - t1 - 1);
        e.id = line.substr(t2 + 1);
        if (label == "cg") {
            e.label = 1;
        } else if (label == "pg") {
            e.label = 0;
        } else {
            throw FormatError("manifest line " + std::to_string(lineno) + ": label '" +
                              label + "' must be cg or pg");
        }
        if (e.path.empty() || e.id.empty()) {
            throw FormatError("manifest line " + std::to_string(lineno) +
                              ": empty path or id");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open manifest '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_manifest(text);
}

} // namespace cgd
