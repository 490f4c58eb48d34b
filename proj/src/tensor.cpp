#include "cgdetect/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cgd {

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

int conv_out_dim(int in_dim, int kernel, int stride, int padding) {
    if (stride < 1) throw ShapeError("stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw ShapeError("padding must be >= 0, got " + std::to_string(padding));
    const int span = in_dim + 2 * padding - kernel;
    if (span < 0) {
        throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(in_dim + 2 * padding));
    }
    const int out = span / stride + 1;
    if (out < 1) throw ShapeError("computed output dimension " + std::to_string(out) + " < 1");
    return out;
}

namespace {

// out (c_out x p) = w (c_out x k) * col (k x p), acc starts at bias[o].
// Per output cell the k loop runs strictly in order; vectorization is across
// p only, which keeps each cell's summation sequence identical to the
// direct-loop formulation.
void gemm_rowmajor(const float* w, const float* col, const float* bias,
                   int c_out, int k, int p, float* out) {
    constexpr int kBlock = 16;
    for (int o = 0; o < c_out; ++o) {
        const float* wrow = w + static_cast<size_t>(o) * k;
        float* orow = out + static_cast<size_t>(o) * p;
        const float b = bias ? bias[o] : 0.0f;
        int p0 = 0;
        for (; p0 + kBlock <= p; p0 += kBlock) {
            float acc[kBlock];
            for (int i = 0; i < kBlock; ++i) acc[i] = b;
            const float* colp = col + p0;
            for (int kk = 0; kk < k; ++kk) {
                const float wv = wrow[kk];
                const float* crow = colp + static_cast<size_t>(kk) * p;
                for (int i = 0; i < kBlock; ++i) acc[i] += wv * crow[i];
            }
            for (int i = 0; i < kBlock; ++i) orow[p0 + i] = acc[i];
        }
        for (; p0 < p; ++p0) {
            float acc = b;
            for (int kk = 0; kk < k; ++kk) {
                acc += wrow[kk] * col[static_cast<size_t>(kk) * p + p0];
            }
            orow[p0] = acc;
        }
    }
}

// Patch matrix: row index k = (c*kh + m)*kw + n', column index = i*ow + j.
void im2col(const float* in, int c, int h, int w, int kh, int kw,
            int stride, int padding, int oh, int ow, float* col) {
    const int p = oh * ow;
    for (int ic = 0; ic < c; ++ic) {
        const float* chan = in + static_cast<size_t>(ic) * h * w;
        for (int m = 0; m < kh; ++m) {
            for (int nn = 0; nn < kw; ++nn) {
                float* crow = col + (static_cast<size_t>(ic) * kh * kw + static_cast<size_t>(m) * kw + nn) * p;
                for (int i = 0; i < oh; ++i) {
                    const int y = i * stride + m - padding;
                    float* dst = crow + static_cast<size_t>(i) * ow;
                    if (y < 0 || y >= h) {
                        std::fill(dst, dst + ow, 0.0f);
                        continue;
                    }
                    const float* src = chan + static_cast<size_t>(y) * w;
                    for (int j = 0; j < ow; ++j) {
                        const int x = j * stride + nn - padding;
                        dst[j] = (x >= 0 && x < w) ? src[x] : 0.0f;
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(const Tensor& input, const ConvParams& params) {
    const Tensor& k = params.kernel;
    if (input.c != k.c) {
        throw ShapeError("conv2d: input has " + std::to_string(input.c) +
                         " channels but kernel expects " + std::to_string(k.c));
    }
    if (!params.bias.empty() && static_cast<int>(params.bias.size()) != k.n) {
        throw ShapeError("conv2d: bias length " + std::to_string(params.bias.size()) +
                         " != output channels " + std::to_string(k.n));
    }
    const int oh = conv_out_dim(input.h, k.h, params.stride, params.padding);
    const int ow = conv_out_dim(input.w, k.w, params.stride, params.padding);
    const int p = oh * ow;
    const int kdim = input.c * k.h * k.w;
    const float* bias = params.bias.empty() ? nullptr : params.bias.data();

    Tensor out(input.n, k.n, oh, ow);
    const bool direct = (k.h == 1 && k.w == 1 && params.stride == 1 && params.padding == 0);
    std::vector<float> col;
    if (!direct) col.resize(static_cast<size_t>(kdim) * p);

    for (int in = 0; in < input.n; ++in) {
        const float* src = input.data.data() + static_cast<size_t>(in) * input.c * input.h * input.w;
        float* dst = out.data.data() + static_cast<size_t>(in) * k.n * p;
        if (direct) {
            // 1x1 stride-1 convolution: the input itself is the patch matrix.
            gemm_rowmajor(k.data.data(), src, bias, k.n, kdim, p, dst);
        } else {
            im2col(src, input.c, input.h, input.w, k.h, k.w,
                   params.stride, params.padding, oh, ow, col.data());
            gemm_rowmajor(k.data.data(), col.data(), bias, k.n, kdim, p, dst);
        }
    }
    return out;
}

Tensor batchnorm_infer(const Tensor& input, const BatchNormParams& params) {
    const size_t c = static_cast<size_t>(input.c);
    if (params.gamma.size() != c || params.beta.size() != c ||
        params.running_mean.size() != c || params.running_var.size() != c) {
        throw ShapeError("batchnorm_infer: parameter vectors must have length " +
                         std::to_string(input.c));
    }
    if (!(params.epsilon > 0.0f)) throw ShapeError("batchnorm_infer: epsilon must be > 0");

    Tensor out(input.n, input.c, input.h, input.w);
    const int plane = input.h * input.w;
    for (int in = 0; in < input.n; ++in) {
        for (int ic = 0; ic < input.c; ++ic) {
            if (params.running_var[ic] < 0.0f) {
                throw ShapeError("batchnorm_infer: running_var[" + std::to_string(ic) + "] < 0");
            }
            const float g = params.gamma[ic];
            const float b = params.beta[ic];
            const float mean = params.running_mean[ic];
            const float denom = std::sqrt(params.running_var[ic] + params.epsilon);
            const float* src = input.data.data() + (static_cast<size_t>(in) * input.c + ic) * plane;
            float* dst = out.data.data() + (static_cast<size_t>(in) * input.c + ic) * plane;
            for (int i = 0; i < plane; ++i) {
                dst[i] = g * (src[i] - mean) / denom + b;
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& input) {
    Tensor out(input.n, input.c, input.h, input.w);
    for (size_t i = 0; i < input.data.size(); ++i) {
        out.data[i] = input.data[i] > 0.0f ? input.data[i] : 0.0f;
    }
    return out;
}

Tensor maxpool2d(const Tensor& input, int kh, int kw, int stride, int padding) {
    if (kh < 1 || kw < 1) throw ShapeError("maxpool2d: kernel must be >= 1");
    if (padding > kh / 2 || padding > kw / 2) {
        throw ShapeError("maxpool2d: padding " + std::to_string(padding) +
                         " > half of kernel; a window would be all padding");
    }
    const int oh = conv_out_dim(input.h, kh, stride, padding);
    const int ow = conv_out_dim(input.w, kw, stride, padding);

    Tensor out(input.n, input.c, oh, ow);
    for (int in = 0; in < input.n; ++in) {
        for (int ic = 0; ic < input.c; ++ic) {
            const float* src = input.data.data() + (static_cast<size_t>(in) * input.c + ic) * input.h * input.w;
            float* dst = out.data.data() + (static_cast<size_t>(in) * input.c + ic) * oh * ow;
            for (int i = 0; i < oh; ++i) {
                for (int j = 0; j < ow; ++j) {
                    float best = -std::numeric_limits<float>::infinity();
                    const int y0 = i * stride - padding;
                    const int x0 = j * stride - padding;
                    for (int m = 0; m < kh; ++m) {
                        const int y = y0 + m;
                        if (y < 0 || y >= input.h) continue;
                        for (int nn = 0; nn < kw; ++nn) {
                            const int x = x0 + nn;
                            if (x < 0 || x >= input.w) continue;
                            best = std::max(best, src[static_cast<size_t>(y) * input.w + x]);
                        }
                    }
                    dst[static_cast<size_t>(i) * ow + j] = best;
                }
            }
        }
    }
    return out;
}

Tensor global_avg_pool(const Tensor& input) {
    if (input.h < 1 || input.w < 1) throw ShapeError("global_avg_pool: empty spatial dims");
    Tensor out(input.n, input.c, 1, 1);
    const int plane = input.h * input.w;
    for (int in = 0; in < input.n; ++in) {
        for (int ic = 0; ic < input.c; ++ic) {
            const float* src = input.data.data() + (static_cast<size_t>(in) * input.c + ic) * plane;
            float sum = 0.0f;
            for (int i = 0; i < plane; ++i) sum += src[i];
            out.at(in, ic, 0, 0) = sum / static_cast<float>(plane);
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out(a.n, a.c, a.h, a.w);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

Matrix dense(const Matrix& input, const Matrix& weights, std::span<const float> bias) {
    if (input.cols != weights.rows) {
        throw ShapeError("dense: input cols " + std::to_string(input.cols) +
                         " != weight rows " + std::to_string(weights.rows));
    }
    if (!bias.empty() && static_cast<std::int64_t>(bias.size()) != weights.cols) {
        throw ShapeError("dense: bias length " + std::to_string(bias.size()) +
                         " != output dim " + std::to_string(weights.cols));
    }
    Matrix out(input.rows, weights.cols);
    for (std::int64_t i = 0; i < input.rows; ++i) {
        const float* in = input.data.data() + static_cast<size_t>(i) * input.cols;
        float* dst = out.data.data() + static_cast<size_t>(i) * out.cols;
        for (std::int64_t j = 0; j < weights.cols; ++j) dst[j] = bias.empty() ? 0.0f : bias[j];
        for (std::int64_t l = 0; l < input.cols; ++l) {
            const float v = in[l];
            const float* wrow = weights.data.data() + static_cast<size_t>(l) * weights.cols;
            for (std::int64_t j = 0; j < weights.cols; ++j) dst[j] += v * wrow[j];
        }
    }
    return out;
}

} // namespace cgd
