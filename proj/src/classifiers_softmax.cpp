#include "cgdetect/classifiers.hpp"

#include <cmath>
#include <numeric>

#include "cgdetect/rng.hpp"

namespace cgd {

double softmax_head_loss_grad(const Matrix& x, const std::vector<int>& labels,
                              std::span<const std::int64_t> rows,
                              const std::vector<double>& weights,
                              const std::vector<double>& bias,
                              std::vector<double>* grad_w, std::vector<double>* grad_b) {
    const std::int64_t d = x.cols;
    if (grad_w) grad_w->assign(static_cast<size_t>(d) * 2, 0.0);
    if (grad_b) grad_b->assign(2, 0.0);

    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (std::int64_t r : rows) {
        const float* row = x.data.data() + static_cast<size_t>(r) * d;
        double z[2] = {bias[0], bias[1]};
        for (std::int64_t j = 0; j < d; ++j) {
            z[0] += row[j] * weights[static_cast<size_t>(j) * 2];
            z[1] += row[j] * weights[static_cast<size_t>(j) * 2 + 1];
        }
        const double zmax = std::max(z[0], z[1]);
        const double e0 = std::exp(z[0] - zmax);
        const double e1 = std::exp(z[1] - zmax);
        const double q[2] = {e0 / (e0 + e1), e1 / (e0 + e1)};
        loss += cross_entropy(labels[static_cast<size_t>(r)], q);

        if (grad_w) {
            // d(mean CE)/dz = (q - onehot) / n
            double dz[2] = {q[0] * inv_n, q[1] * inv_n};
            dz[labels[static_cast<size_t>(r)]] -= inv_n;
            for (std::int64_t j = 0; j < d; ++j) {
                (*grad_w)[static_cast<size_t>(j) * 2] += row[j] * dz[0];
                (*grad_w)[static_cast<size_t>(j) * 2 + 1] += row[j] * dz[1];
            }
            (*grad_b)[0] += dz[0];
            (*grad_b)[1] += dz[1];
        }
    }
    return loss * inv_n;
}

SoftmaxHead train_softmax_head(const Matrix& x, const std::vector<int>& labels,
                               const AdamConfig& cfg) {
    require_both_classes(labels);
    if (cfg.batch_size < 1) throw ConfigError("adam: batch_size must be >= 1");
    if (!(cfg.lr > 0.0f)) throw ConfigError("adam: lr must be > 0");
    if (!(cfg.beta1 > 0.0f && cfg.beta1 < 1.0f && cfg.beta2 > 0.0f && cfg.beta2 < 1.0f)) {
        throw ConfigError("adam: beta1 and beta2 must lie in (0, 1)");
    }

    const std::int64_t n = x.rows;
    const std::int64_t d = x.cols;
    Rng rng(hash_name(cfg.seed, "softmax_head"));

    // Glorot uniform, limit sqrt(6 / (fan_in + fan_out)); zero bias.
    const float limit = std::sqrt(6.0f / static_cast<float>(d + 2));
    std::vector<double> w(static_cast<size_t>(d) * 2);
    for (auto& v : w) v = rng.uniform(-limit, limit);
    std::vector<double> b(2, 0.0);

    std::vector<double> mw(w.size(), 0.0), vw(w.size(), 0.0);
    std::vector<double> mb(2, 0.0), vb(2, 0.0);
    std::vector<double> gw, gb;

    std::vector<std::int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    SoftmaxHead head;
    head.adam = cfg;

    long t = 0; // update count
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::int64_t seen = 0;
        for (std::int64_t start = 0; start < n; start += cfg.batch_size) {
            const std::int64_t stop = std::min<std::int64_t>(start + cfg.batch_size, n);
            const std::span<const std::int64_t> batch(order.data() + start,
                                                      static_cast<size_t>(stop - start));
            const double batch_loss = softmax_head_loss_grad(x, labels, batch, w, b, &gw, &gb);
            epoch_loss += batch_loss * static_cast<double>(batch.size());
            seen += stop - start;

            const double lr_decayed =
                static_cast<double>(cfg.lr) / (1.0 + static_cast<double>(cfg.decay) * t);
            ++t;
            const double correction = std::sqrt(1.0 - std::pow(static_cast<double>(cfg.beta2), t)) /
                                      (1.0 - std::pow(static_cast<double>(cfg.beta1), t));
            const double step = lr_decayed * correction;
            for (size_t i = 0; i < w.size(); ++i) {
                mw[i] = cfg.beta1 * mw[i] + (1.0 - cfg.beta1) * gw[i];
                vw[i] = cfg.beta2 * vw[i] + (1.0 - cfg.beta2) * gw[i] * gw[i];
                w[i] -= step * mw[i] / (std::sqrt(vw[i]) + cfg.epsilon);
            }
            for (size_t i = 0; i < 2; ++i) {
                mb[i] = cfg.beta1 * mb[i] + (1.0 - cfg.beta1) * gb[i];
                vb[i] = cfg.beta2 * vb[i] + (1.0 - cfg.beta2) * gb[i] * gb[i];
                b[i] -= step * mb[i] / (std::sqrt(vb[i]) + cfg.epsilon);
            }
        }
        head.epoch_loss.push_back(epoch_loss / static_cast<double>(seen));
    }

    head.weights = Matrix(d, 2);
    for (size_t i = 0; i < w.size(); ++i) head.weights.data[i] = static_cast<float>(w[i]);
    head.bias = {static_cast<float>(b[0]), static_cast<float>(b[1])};
    return head;
}

Matrix SoftmaxHead::predict_proba(const Matrix& x) const {
    if (x.cols != weights.rows) {
        throw ShapeError("softmax head: feature dim " + std::to_string(x.cols) +
                         " != weight rows " + std::to_string(weights.rows));
    }
    Matrix out(x.rows, 2);
    for (std::int64_t i = 0; i < x.rows; ++i) {
        const float* row = x.data.data() + static_cast<size_t>(i) * x.cols;
        double z[2] = {bias[0], bias[1]};
        for (std::int64_t j = 0; j < x.cols; ++j) {
            z[0] += row[j] * weights.data[static_cast<size_t>(j) * 2];
            z[1] += row[j] * weights.data[static_cast<size_t>(j) * 2 + 1];
        }
        const double zmax = std::max(z[0], z[1]);
        const double e0 = std::exp(z[0] - zmax);
        const double e1 = std::exp(z[1] - zmax);
        out.at(i, 0) = static_cast<float>(e0 / (e0 + e1));
        out.at(i, 1) = static_cast<float>(e1 / (e0 + e1));
    }
    return out;
}

} // namespace cgd
