#include "cgdetect/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include <json.hpp>

namespace cgd {

namespace {

constexpr char kMagic[4] = {'C', 'G', 'F', '1'};

void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& is, const std::string& what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("container truncated while reading " + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::vector<std::uint8_t> f32_to_le(const std::vector<float>& v) {
    std::vector<std::uint8_t> out(v.size() * 4);
    // little-endian host assumed for the fast path; static_assert keeps it honest
    static_assert(std::endian::native == std::endian::little,
                  "CGF1 writer requires a little-endian host");
    std::memcpy(out.data(), v.data(), out.size());
    return out;
}

} // namespace

std::int64_t TensorEntry::numel() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

void WeightStore::put_f32(const std::string& name, std::vector<std::int64_t> shape,
                          std::vector<float> values) {
    std::int64_t n = 1;
    for (auto d : shape) {
        if (d < 0) throw FormatError("tensor '" + name + "' has negative dimension");
        n *= d;
    }
    if (n != static_cast<std::int64_t>(values.size())) {
        throw FormatError("tensor '" + name + "' shape/value count mismatch");
    }
    TensorEntry e;
    e.dtype = TensorEntry::Dtype::F32;
    e.shape = std::move(shape);
    e.f32 = std::move(values);
    if (!entries_.count(name)) order_.push_back(name);
    entries_[name] = std::move(e);
}

void WeightStore::put_blob(const std::string& name, std::vector<std::uint8_t> bytes) {
    TensorEntry e;
    e.dtype = TensorEntry::Dtype::U8;
    e.shape = {static_cast<std::int64_t>(bytes.size())};
    e.bytes = std::move(bytes);
    if (!entries_.count(name)) order_.push_back(name);
    entries_[name] = std::move(e);
}

void WeightStore::put_tensor(const std::string& name, const Tensor& t) {
    put_f32(name, {t.n, t.c, t.h, t.w}, t.data);
}

void WeightStore::put_vector(const std::string& name, const std::vector<float>& v) {
    put_f32(name, {static_cast<std::int64_t>(v.size())}, v);
}

bool WeightStore::contains(const std::string& name) const { return entries_.count(name) != 0; }

const TensorEntry& WeightStore::entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("container has no tensor named '" + name + "'");
    return it->second;
}

Tensor WeightStore::tensor4d(const std::string& name) const {
    const TensorEntry& e = entry(name);
    if (e.dtype != TensorEntry::Dtype::F32) {
        throw FormatError("tensor '" + name + "' is not f32");
    }
    if (e.shape.size() > 4) {
        throw FormatError("tensor '" + name + "' has rank > 4");
    }
    std::int64_t dims[4] = {1, 1, 1, 1};
    const size_t off = 4 - e.shape.size();
    for (size_t i = 0; i < e.shape.size(); ++i) dims[off + i] = e.shape[i];
    Tensor t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
             static_cast<int>(dims[2]), static_cast<int>(dims[3]));
    t.data = e.f32;
    return t;
}

std::vector<float> WeightStore::vector1d(const std::string& name) const {
    const TensorEntry& e = entry(name);
    if (e.dtype != TensorEntry::Dtype::F32) {
        throw FormatError("tensor '" + name + "' is not f32");
    }
    return e.f32;
}

void save_weights(const WeightStore& store, const std::string& path) {
    nlohmann::json manifest = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& name : store.names()) {
        const TensorEntry& e = store.entry(name);
        const std::uint64_t len = e.dtype == TensorEntry::Dtype::F32
                                      ? e.f32.size() * 4
                                      : e.bytes.size();
        manifest.push_back({{"name", name},
                            {"dtype", e.dtype == TensorEntry::Dtype::F32 ? "f32" : "u8"},
                            {"shape", e.shape},
                            {"byte_offset", offset},
                            {"byte_length", len}});
        offset += len;
    }
    nlohmann::json header = {{"metadata", store.metadata}, {"tensors", manifest}};
    const std::string htext = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    write_u32le(os, static_cast<std::uint32_t>(htext.size()));
    os.write(htext.data(), static_cast<std::streamsize>(htext.size()));

    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto& name : store.names()) {
        const TensorEntry& e = store.entry(name);
        if (e.dtype == TensorEntry::Dtype::F32) {
            const auto raw = f32_to_le(e.f32);
            crc = crc32(crc, raw.data(), static_cast<uInt>(raw.size()));
            os.write(reinterpret_cast<const char*>(raw.data()),
                     static_cast<std::streamsize>(raw.size()));
        } else {
            crc = crc32(crc, e.bytes.data(), static_cast<uInt>(e.bytes.size()));
            os.write(reinterpret_cast<const char*>(e.bytes.data()),
                     static_cast<std::streamsize>(e.bytes.size()));
        }
    }
    write_u32le(os, static_cast<std::uint32_t>(crc));
    if (!os) throw IoError("write failed for '" + path + "'");
}

WeightStore load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open '" + path + "' for reading");
    is.seekg(0, std::ios::end);
    const std::int64_t file_size = is.tellg();
    is.seekg(0);

    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError("'" + path + "' is not a CGF1 container (bad magic)");
    }
    const std::uint32_t hlen = read_u32le(is, "header length");
    if (8 + static_cast<std::int64_t>(hlen) + 4 > file_size) {
        throw FormatError("'" + path + "' header length exceeds file size (corrupt)");
    }
    std::string htext(hlen, '\0');
    if (!is.read(htext.data(), hlen)) throw FormatError("'" + path + "' truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(htext);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("'" + path + "' header is not valid JSON: " + e.what());
    }

    WeightStore store;
    if (header.contains("metadata")) {
        for (auto& [k, v] : header["metadata"].items()) {
            store.metadata[k] = v.get<std::string>();
        }
    }

    const std::int64_t payload_begin = 8 + hlen;
    const std::int64_t payload_size = file_size - payload_begin - 4;
    if (payload_size < 0) throw FormatError("'" + path + "' too short for payload and checksum");

    // Pass 1: checksum the payload with O(1) transient memory.
    {
        uLong crc = crc32(0L, Z_NULL, 0);
        std::vector<unsigned char> buf(1 << 20);
        std::int64_t left = payload_size;
        while (left > 0) {
            const std::int64_t chunk = std::min<std::int64_t>(left, static_cast<std::int64_t>(buf.size()));
            if (!is.read(reinterpret_cast<char*>(buf.data()), chunk)) {
                throw FormatError("'" + path + "' truncated payload (corrupt)");
            }
            crc = crc32(crc, buf.data(), static_cast<uInt>(chunk));
            left -= chunk;
        }
        const std::uint32_t stored = read_u32le(is, "checksum");
        if (stored != static_cast<std::uint32_t>(crc)) {
            throw FormatError("'" + path + "' payload checksum mismatch (corrupt)");
        }
    }

    // Pass 2: materialize entries in manifest order.
    if (!header.contains("tensors") || !header["tensors"].is_array()) {
        throw FormatError("'" + path + "' header missing tensor manifest");
    }
    for (const auto& t : header["tensors"]) {
        const std::string name = t.at("name").get<std::string>();
        const std::string dtype = t.at("dtype").get<std::string>();
        const std::int64_t off = t.at("byte_offset").get<std::int64_t>();
        const std::int64_t len = t.at("byte_length").get<std::int64_t>();
        std::vector<std::int64_t> shape = t.at("shape").get<std::vector<std::int64_t>>();
        if (off < 0 || len < 0 || off + len > payload_size) {
            throw FormatError("'" + path + "' tensor '" + name +
                              "' extends beyond payload (corrupt)");
        }
        if (store.contains(name)) {
            throw FormatError("'" + path + "' duplicate tensor name '" + name + "'");
        }
        is.clear();
        is.seekg(payload_begin + off);
        if (dtype == "f32") {
            if (len % 4 != 0) throw FormatError("'" + path + "' f32 tensor '" + name +
                                                "' byte length not a multiple of 4");
            std::vector<float> vals(static_cast<size_t>(len / 4));
            if (!is.read(reinterpret_cast<char*>(vals.data()), len)) {
                throw FormatError("'" + path + "' truncated tensor '" + name + "'");
            }
            std::int64_t n = 1;
            for (auto d : shape) n *= d;
            if (n != static_cast<std::int64_t>(vals.size())) {
                throw FormatError("'" + path + "' tensor '" + name +
                                  "' shape does not match byte length");
            }
            store.put_f32(name, std::move(shape), std::move(vals));
        } else if (dtype == "u8") {
            std::vector<std::uint8_t> raw(static_cast<size_t>(len));
            if (!is.read(reinterpret_cast<char*>(raw.data()), len)) {
                throw FormatError("'" + path + "' truncated tensor '" + name + "'");
            }
            store.put_blob(name, std::move(raw));
        } else {
            throw FormatError("'" + path + "' tensor '" + name + "' has unknown dtype '" +
                              dtype + "'");
        }
    }
    return store;
}

void FeatureSet::validate() const {
    const std::int64_t n = features.rows;
    if (static_cast<std::int64_t>(labels.size()) != n ||
        static_cast<std::int64_t>(ids.size()) != n) {
        throw FormatError("feature set row counts inconsistent: " + std::to_string(n) +
                          " rows, " + std::to_string(labels.size()) + " labels, " +
                          std::to_string(ids.size()) + " ids");
    }
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw FormatError("label at row " + std::to_string(i) + " is " +
                              std::to_string(labels[i]) + ", expected 0 or 1");
        }
    }
}

void save_features(const FeatureSet& fs, const std::string& path,
                   const std::map<std::string, std::string>& metadata) {
    fs.validate();
    WeightStore store;
    store.metadata = metadata;
    store.put_f32("features", {fs.features.rows, fs.features.cols}, fs.features.data);
    std::vector<float> labels(fs.labels.begin(), fs.labels.end());
    store.put_f32("labels", {static_cast<std::int64_t>(labels.size())}, std::move(labels));
    std::vector<std::uint8_t> blob;
    for (const auto& id : fs.ids) {
        const std::uint32_t len = static_cast<std::uint32_t>(id.size());
        blob.push_back(static_cast<std::uint8_t>(len & 0xff));
        blob.push_back(static_cast<std::uint8_t>((len >> 8) & 0xff));
        blob.push_back(static_cast<std::uint8_t>((len >> 16) & 0xff));
        blob.push_back(static_cast<std::uint8_t>((len >> 24) & 0xff));
        blob.insert(blob.end(), id.begin(), id.end());
    }
    store.put_blob("ids", std::move(blob));
    save_weights(store, path);
}

FeatureSet load_features(const std::string& path,
                         std::map<std::string, std::string>* metadata_out) {
    WeightStore store = load_weights(path);
    if (metadata_out) *metadata_out = store.metadata;

    const TensorEntry& fe = store.entry("features");
    if (fe.dtype != TensorEntry::Dtype::F32 || fe.shape.size() != 2) {
        throw FormatError("'" + path + "' entry 'features' must be a 2-D f32 tensor");
    }
    FeatureSet fs;
    fs.features.rows = fe.shape[0];
    fs.features.cols = fe.shape[1];
    fs.features.data = fe.f32;

    const TensorEntry& le = store.entry("labels");
    if (le.dtype != TensorEntry::Dtype::F32 || le.shape.size() != 1) {
        throw FormatError("'" + path + "' entry 'labels' must be a 1-D f32 tensor");
    }
    if (le.shape[0] != fs.features.rows) {
        throw FormatError("'" + path + "' has " + std::to_string(fs.features.rows) +
                          " feature rows but " + std::to_string(le.shape[0]) + " labels");
    }
    fs.labels.reserve(le.f32.size());
    for (float v : le.f32) {
        if (v != 0.0f && v != 1.0f) {
            throw FormatError("'" + path + "' label value " + std::to_string(v) +
                              " is not 0 or 1");
        }
        fs.labels.push_back(static_cast<int>(v));
    }

    const TensorEntry& ie = store.entry("ids");
    if (ie.dtype != TensorEntry::Dtype::U8) {
        throw FormatError("'" + path + "' entry 'ids' must be a u8 blob");
    }
    size_t pos = 0;
    for (std::int64_t i = 0; i < fs.features.rows; ++i) {
        if (pos + 4 > ie.bytes.size()) {
            throw FormatError("'" + path + "' id blob ends before row " + std::to_string(i));
        }
        const std::uint32_t len = static_cast<std::uint32_t>(ie.bytes[pos]) |
                                  (static_cast<std::uint32_t>(ie.bytes[pos + 1]) << 8) |
                                  (static_cast<std::uint32_t>(ie.bytes[pos + 2]) << 16) |
                                  (static_cast<std::uint32_t>(ie.bytes[pos + 3]) << 24);
        pos += 4;
        if (pos + len > ie.bytes.size()) {
            throw FormatError("'" + path + "' id blob truncated at row " + std::to_string(i));
        }
        fs.ids.emplace_back(reinterpret_cast<const char*>(ie.bytes.data() + pos), len);
        pos += len;
    }
    if (pos != ie.bytes.size()) {
        throw FormatError("'" + path + "' id blob has trailing bytes; row counts inconsistent");
    }
    fs.validate();
    return fs;
}

FeatureSet load_features(const std::string& path) { return load_features(path, nullptr); }

} // namespace cgd
