#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cgdetect/error.hpp"

namespace cgd {

// Dense 4-D float32 tensor, NCHW, row-major. The carrier of all CNN math.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, float fill = 0.0f)
        : n(n_), c(c_), h(h_), w(w_),
          data(static_cast<size_t>(n_) * c_ * h_ * w_, fill) {}

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }

    std::size_t index(int in, int ic, int ih, int iw) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw;
    }

    float& at(int in, int ic, int ih, int iw) { return data[index(in, ic, ih, iw)]; }
    float at(int in, int ic, int ih, int iw) const { return data[index(in, ic, ih, iw)]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const;
};

// Dense row-major float32 matrix, used for feature sets and classifier math.
struct Matrix {
    std::int64_t rows = 0, cols = 0;
    std::vector<float> data;

    Matrix() = default;
    Matrix(std::int64_t r, std::int64_t c, float fill = 0.0f)
        : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    float& at(std::int64_t r, std::int64_t c) { return data[static_cast<size_t>(r) * cols + c]; }
    float at(std::int64_t r, std::int64_t c) const { return data[static_cast<size_t>(r) * cols + c]; }

    std::span<const float> row(std::int64_t r) const {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
    std::span<float> row(std::int64_t r) {
        return {data.data() + static_cast<size_t>(r) * cols, static_cast<size_t>(cols)};
    }
};

struct ConvParams {
    int stride = 1;
    int padding = 0; // symmetric zero padding
    Tensor kernel;   // (c_out, c_in, kh, kw)
    std::vector<float> bias; // length c_out, or empty for no bias
};

struct BatchNormParams {
    std::vector<float> gamma, beta, running_mean, running_var;
    float epsilon = 1e-5f;
};

// out[n,o,i,j] = bias[o] + sum_{c,m,n'} in_padded[n,c,i*s+m,j*s+n'] * k[o,c,m,n']
// Accumulation is float32, sequential per output cell in (c, kh, kw) order,
// so results are bit-reproducible. Fast path is im2col + matrix multiply with
// the same per-cell summation order.
Tensor conv2d(const Tensor& input, const ConvParams& params);

// Inference-mode batch norm using stored statistics:
// out = gamma * (x - running_mean) / sqrt(running_var + epsilon) + beta
Tensor batchnorm_infer(const Tensor& input, const BatchNormParams& params);

Tensor relu(const Tensor& input);

// Max over each (possibly padded) window; padded cells never win.
// Requires padding <= kernel/2 so no window is entirely padding.
Tensor maxpool2d(const Tensor& input, int kh, int kw, int stride, int padding);

// Mean over all h*w positions per (n, c); output shape (n, c, 1, 1).
Tensor global_avg_pool(const Tensor& input);

// Elementwise sum; shapes must match.
Tensor add(const Tensor& a, const Tensor& b);

// Affine map rows * weights + bias. input n x d, weights d x k, bias length k (or empty).
Matrix dense(const Matrix& input, const Matrix& weights, std::span<const float> bias);

// Computed output spatial size for conv/pool geometry; throws on invalid geometry.
int conv_out_dim(int in_dim, int kernel, int stride, int padding);

} // namespace cgd
