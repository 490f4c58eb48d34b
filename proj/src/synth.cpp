#include "cgdetect/synth.hpp"

#include <cmath>

#include "cgdetect/rng.hpp"

namespace cgd {

namespace {

std::vector<float> fill_uniform(Rng& rng, std::int64_t count, float lo, float hi) {
    std::vector<float> v(static_cast<size_t>(count));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

} // namespace

WeightStore synth_reference_weights(std::uint64_t seed) {
    WeightStore store;
    store.metadata["channel_order"] = "RGB";
    store.metadata["mean_rgb"] = "123.68,116.779,103.939";
    store.metadata["variant"] = "original";
    store.metadata["source"] = "synthetic-splitmix64-seed-" + std::to_string(seed);

    for (const TensorSpec& spec : architecture_table()) {
        Rng rng(hash_name(seed, spec.name.c_str()));
        std::int64_t numel = 1;
        for (auto d : spec.shape) numel *= d;

        std::vector<float> values;
        if (spec.shape.size() == 4) {
            // He-uniform: limit sqrt(6 / fan_in)
            const std::int64_t fan_in = spec.shape[1] * spec.shape[2] * spec.shape[3];
            const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
            values = fill_uniform(rng, numel, -limit, limit);
        } else if (spec.name.ends_with(".gamma") || spec.name.ends_with(".running_var")) {
            values = fill_uniform(rng, numel, 0.9f, 1.1f);
        } else {
            // beta, running_mean
            values = fill_uniform(rng, numel, -0.1f, 0.1f);
        }
        store.put_f32(spec.name, spec.shape, std::move(values));
    }
    return store;
}

Tensor synth_reference_input(std::uint64_t seed, int n) {
    Rng rng(hash_name(seed, "reference_input"));
    Tensor t(n, 3, 224, 224);
    for (auto& x : t.data) x = rng.uniform(-120.0f, 135.0f);
    return t;
}

} // namespace cgd
