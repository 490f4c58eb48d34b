#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "cgdetect/tensor.hpp"

namespace cgd {

// One named entry in a CGF1 container. Weight tensors are f32; the feature
// files reuse the container with a u8 blob entry for the id strings.
struct TensorEntry {
    enum class Dtype { F32, U8 };
    Dtype dtype = Dtype::F32;
    std::vector<std::int64_t> shape;
    std::vector<float> f32;
    std::vector<std::uint8_t> bytes;

    std::int64_t numel() const;
};

// Named tensor collection plus string metadata, as stored in a CGF1 file.
// Manifest order is preserved so load/save round-trips are byte identical.
class WeightStore {
public:
    void put_f32(const std::string& name, std::vector<std::int64_t> shape,
                 std::vector<float> values);
    void put_blob(const std::string& name, std::vector<std::uint8_t> bytes);
    void put_tensor(const std::string& name, const Tensor& t);
    void put_vector(const std::string& name, const std::vector<float>& v);

    bool contains(const std::string& name) const;
    const TensorEntry& entry(const std::string& name) const; // throws FormatError if absent
    const std::vector<std::string>& names() const { return order_; }
    std::size_t size() const { return order_.size(); }

    // Reassembles a 4-D tensor; rank < 4 shapes are left-padded with 1s.
    Tensor tensor4d(const std::string& name) const;
    std::vector<float> vector1d(const std::string& name) const;

    std::map<std::string, std::string> metadata;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, TensorEntry> entries_;
};

// Container format "CGF1": magic, u32le header length, UTF-8 JSON header
// holding metadata and the ordered tensor manifest {name, dtype, shape,
// byte_offset, byte_length}, raw little-endian payload, trailing u32le CRC32
// of the payload. See docs/format.md.
WeightStore load_weights(const std::string& path);
void save_weights(const WeightStore& store, const std::string& path);

// 2048-dim bottleneck feature rows with binary labels (CG=1, PG=0) and
// source-image identifiers.
struct FeatureSet {
    Matrix features;              // n x d
    std::vector<int> labels;      // n values in {0, 1}
    std::vector<std::string> ids; // n identifiers

    std::int64_t size() const { return features.rows; }
    void validate() const; // row-count consistency, labels in {0,1}
};

// Feature files reuse the CGF1 container with reserved names "features",
// "labels" and "ids" (ids as a length-prefixed UTF-8 blob).
FeatureSet load_features(const std::string& path);
void save_features(const FeatureSet& fs, const std::string& path,
                   const std::map<std::string, std::string>& metadata = {});
// Same, but also returns/accepts container metadata (resolved CLI config).
FeatureSet load_features(const std::string& path,
                         std::map<std::string, std::string>* metadata_out);

} // namespace cgd
