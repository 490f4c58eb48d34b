#include "cgdetect/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cgdetect/rng.hpp"

namespace cgd {

namespace {

// lexicographic row order; makes the whole pipeline independent of the
// input row permutation (accumulations always run in canonical order)
std::vector<std::int64_t> canonical_order(const Matrix& x) {
    std::vector<std::int64_t> order(static_cast<size_t>(x.rows));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
        const float* ra = x.data.data() + static_cast<size_t>(a) * x.cols;
        const float* rb = x.data.data() + static_cast<size_t>(b) * x.cols;
        for (std::int64_t j = 0; j < x.cols; ++j) {
            if (ra[j] != rb[j]) return ra[j] < rb[j];
        }
        return false;
    });
    return order;
}

Matrix reorder_rows(const Matrix& x, const std::vector<std::int64_t>& order) {
    Matrix out(x.rows, x.cols);
    for (size_t i = 0; i < order.size(); ++i) {
        std::copy_n(x.data.data() + static_cast<size_t>(order[i]) * x.cols, x.cols,
                    out.data.data() + i * static_cast<size_t>(x.cols));
    }
    return out;
}

// top-k PCA scores via the n x n Gram matrix and orthogonal iteration;
// exact eigenvectors are not needed, a stable subspace is enough
Matrix pca_reduce(const Matrix& x, int k, std::uint64_t seed) {
    const std::int64_t n = x.rows;
    const std::int64_t d = x.cols;

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const float* row = x.data.data() + static_cast<size_t>(i) * d;
        for (std::int64_t j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += row[j];
    }
    for (auto& m : mean) m /= static_cast<double>(n);

    std::vector<double> gram(static_cast<size_t>(n) * n);
    for (std::int64_t i = 0; i < n; ++i) {
        const float* ri = x.data.data() + static_cast<size_t>(i) * d;
        for (std::int64_t j = i; j < n; ++j) {
            const float* rj = x.data.data() + static_cast<size_t>(j) * d;
            double acc = 0.0;
            for (std::int64_t l = 0; l < d; ++l) {
                acc += (ri[l] - mean[static_cast<size_t>(l)]) * (rj[l] - mean[static_cast<size_t>(l)]);
            }
            gram[static_cast<size_t>(i) * n + j] = acc;
            gram[static_cast<size_t>(j) * n + i] = acc;
        }
    }

    Rng rng(hash_name(seed, "pca"));
    std::vector<double> q(static_cast<size_t>(n) * k);
    for (auto& v : q) v = rng.gaussian();

    std::vector<double> z(q.size());
    for (int iter = 0; iter < 50; ++iter) {
        // z = gram * q
        for (std::int64_t i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c) {
                double acc = 0.0;
                for (std::int64_t j = 0; j < n; ++j) {
                    acc += gram[static_cast<size_t>(i) * n + j] * q[static_cast<size_t>(j) * k + c];
                }
                z[static_cast<size_t>(i) * k + c] = acc;
            }
        }
        // Gram-Schmidt
        for (int c = 0; c < k; ++c) {
            for (int p = 0; p < c; ++p) {
                double dot = 0.0;
                for (std::int64_t i = 0; i < n; ++i) {
                    dot += z[static_cast<size_t>(i) * k + c] * z[static_cast<size_t>(i) * k + p];
                }
                for (std::int64_t i = 0; i < n; ++i) {
                    z[static_cast<size_t>(i) * k + c] -= dot * z[static_cast<size_t>(i) * k + p];
                }
            }
            double norm = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                norm += z[static_cast<size_t>(i) * k + c] * z[static_cast<size_t>(i) * k + c];
            }
            norm = std::sqrt(norm);
            if (norm < 1e-12) {
                for (std::int64_t i = 0; i < n; ++i) z[static_cast<size_t>(i) * k + c] = 0.0;
            } else {
                for (std::int64_t i = 0; i < n; ++i) z[static_cast<size_t>(i) * k + c] /= norm;
            }
        }
        std::swap(q, z);
    }

    // scores = U_k * Sigma_k, recovered as gram * q projected onto q
    Matrix out(n, k);
    for (std::int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                acc += gram[static_cast<size_t>(i) * n + j] * q[static_cast<size_t>(j) * k + c];
            }
            // gram q = U Sigma^2 U^T q ~ q sigma^2 per column; scores want
            // sqrt(eigenvalue) scaling, i.e. x_reduced = q * sigma
            out.at(i, c) = static_cast<float>(acc);
        }
    }
    // normalize columns to sigma scaling: column norm of gram*q is sigma^2,
    // want sigma, so divide each column by its norm^(1/2)... columns of q are
    // unit; gram*q column has norm sigma^2, so scores = (gram*q) / sigma
    for (int c = 0; c < k; ++c) {
        double norm = 0.0;
        for (std::int64_t i = 0; i < n; ++i) norm += static_cast<double>(out.at(i, c)) * out.at(i, c);
        norm = std::sqrt(norm); // = sigma^2
        const double sigma = std::sqrt(norm);
        if (sigma > 1e-12) {
            for (std::int64_t i = 0; i < n; ++i) {
                out.at(i, c) = static_cast<float>(out.at(i, c) / sigma);
            }
        }
    }
    return out;
}

std::vector<double> pairwise_sq_distances(const Matrix& x) {
    const std::int64_t n = x.rows;
    std::vector<double> d2(static_cast<size_t>(n) * n, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const float* ri = x.data.data() + static_cast<size_t>(i) * x.cols;
        for (std::int64_t j = i + 1; j < n; ++j) {
            const float* rj = x.data.data() + static_cast<size_t>(j) * x.cols;
            double acc = 0.0;
            for (std::int64_t l = 0; l < x.cols; ++l) {
                const double diff = static_cast<double>(ri[l]) - rj[l];
                acc += diff * diff;
            }
            d2[static_cast<size_t>(i) * n + j] = acc;
            d2[static_cast<size_t>(j) * n + i] = acc;
        }
    }
    return d2;
}

} // namespace

PerplexityCalibration perplexity_calibration(std::span<const double> sq_distances,
                                             double target) {
    if (sq_distances.empty()) throw ConfigError("perplexity: empty distance row");
    if (!(target >= 1.0)) throw ConfigError("perplexity: target must be >= 1");

    PerplexityCalibration cal;
    double beta = 1.0;
    double beta_lo = 0.0, beta_hi = std::numeric_limits<double>::infinity();
    std::vector<double> p(sq_distances.size());

    double best_gap = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 100; ++iter) {
        // H in bits and perplexity 2^H for the current beta
        const double dmin = *std::min_element(sq_distances.begin(), sq_distances.end());
        double sum = 0.0;
        for (size_t j = 0; j < p.size(); ++j) {
            p[j] = std::exp(-beta * (sq_distances[j] - dmin));
            sum += p[j];
        }
        double entropy_nats = 0.0;
        for (size_t j = 0; j < p.size(); ++j) {
            const double q = p[j] / sum;
            if (q > 1e-300) entropy_nats -= q * std::log(q);
        }
        const double perp = std::exp(entropy_nats); // 2^(H_bits) == e^(H_nats)
        const double gap = std::abs(perp - target);
        if (gap < best_gap) {
            best_gap = gap;
            cal.beta = beta;
            cal.achieved = perp;
        }
        if (gap <= 1e-3) {
            cal.converged = true;
            return cal;
        }
        if (perp > target) {
            beta_lo = beta; // too flat, sharpen
            beta = std::isinf(beta_hi) ? beta * 2.0 : 0.5 * (beta_lo + beta_hi);
        } else {
            beta_hi = beta;
            beta = beta_lo == 0.0 ? beta / 2.0 : 0.5 * (beta_lo + beta_hi);
        }
    }
    cal.converged = false;
    return cal;
}

std::vector<double> tsne_affinities(const Matrix& points, double perplexity) {
    const std::int64_t n = points.rows;
    const std::vector<double> d2 = pairwise_sq_distances(points);

    // conditional distributions from per-point calibrated bandwidths
    std::vector<double> cond(static_cast<size_t>(n) * n, 0.0);
    std::vector<double> row(static_cast<size_t>(n - 1));
    for (std::int64_t i = 0; i < n; ++i) {
        size_t w = 0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j != i) row[w++] = d2[static_cast<size_t>(i) * n + j];
        }
        const PerplexityCalibration cal = perplexity_calibration(row, perplexity);
        const double dmin = *std::min_element(row.begin(), row.end());
        double sum = 0.0;
        for (std::int64_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double v = std::exp(-cal.beta * (d2[static_cast<size_t>(i) * n + j] - dmin));
            cond[static_cast<size_t>(i) * n + j] = v;
            sum += v;
        }
        for (std::int64_t j = 0; j < n; ++j) {
            if (j != i) cond[static_cast<size_t>(i) * n + j] /= sum;
        }
    }

    // symmetrize: P_ij = (P_j|i + P_i|j) / 2n
    std::vector<double> p(static_cast<size_t>(n) * n, 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            p[static_cast<size_t>(i) * n + j] =
                (cond[static_cast<size_t>(i) * n + j] + cond[static_cast<size_t>(j) * n + i]) /
                (2.0 * static_cast<double>(n));
        }
    }
    return p;
}

TsneResult tsne_embed(const Matrix& points, const TsneConfig& cfg) {
    const std::int64_t n = points.rows;
    if (n < 10) throw ConfigError("tsne: need at least 10 points, got " + std::to_string(n));
    if (!(cfg.perplexity >= 1.0)) throw ConfigError("tsne: perplexity must be >= 1");
    if (cfg.perplexity >= static_cast<double>(n - 1) / 3.0) {
        throw ConfigError("tsne: perplexity " + std::to_string(cfg.perplexity) +
                          " infeasible for n=" + std::to_string(n) +
                          " (needs perplexity < (n-1)/3)");
    }
    if (cfg.iterations < 250) throw ConfigError("tsne: need at least 250 iterations");
    for (float v : points.data) {
        if (!std::isfinite(v)) throw NumericError("tsne: non-finite input");
    }

    const std::vector<std::int64_t> order = canonical_order(points);
    Matrix x = reorder_rows(points, order);
    if (cfg.pca_reduce && x.cols > cfg.pca_dims && n > cfg.pca_dims) {
        x = pca_reduce(x, cfg.pca_dims, cfg.seed);
    }

    std::vector<double> p = tsne_affinities(x, cfg.perplexity);
    const double exaggeration = cfg.early_exaggeration;

    Rng rng(hash_name(cfg.seed, "tsne_init"));
    std::vector<double> y(static_cast<size_t>(n) * 2);
    for (auto& v : y) v = rng.gaussian() * 1e-4;

    std::vector<double> vel(y.size(), 0.0);
    std::vector<double> gains(y.size(), 1.0);
    std::vector<double> grad(y.size(), 0.0);
    std::vector<double> q(static_cast<size_t>(n) * n, 0.0);

    TsneResult result;
    const int tail_start = cfg.iterations - 100;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerated = iter < cfg.exaggeration_iters;
        const double pscale = exaggerated ? exaggeration : 1.0;

        // student-t kernel and normalizer
        double zsum = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            for (std::int64_t j = i + 1; j < n; ++j) {
                const double dx = y[static_cast<size_t>(i) * 2] - y[static_cast<size_t>(j) * 2];
                const double dy = y[static_cast<size_t>(i) * 2 + 1] - y[static_cast<size_t>(j) * 2 + 1];
                const double w = 1.0 / (1.0 + dx * dx + dy * dy);
                q[static_cast<size_t>(i) * n + j] = w;
                q[static_cast<size_t>(j) * n + i] = w;
                zsum += 2.0 * w;
            }
        }

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            double gx = 0.0, gy = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double w = q[static_cast<size_t>(i) * n + j];
                const double mult =
                    (pscale * p[static_cast<size_t>(i) * n + j] - w / zsum) * w;
                gx += mult * (y[static_cast<size_t>(i) * 2] - y[static_cast<size_t>(j) * 2]);
                gy += mult * (y[static_cast<size_t>(i) * 2 + 1] - y[static_cast<size_t>(j) * 2 + 1]);
            }
            grad[static_cast<size_t>(i) * 2] = 4.0 * gx;
            grad[static_cast<size_t>(i) * 2 + 1] = 4.0 * gy;
        }

        const double momentum =
            iter < cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;
        for (size_t idx = 0; idx < y.size(); ++idx) {
            // gains: boost coordinates whose gradient flips direction
            const bool same_sign = (grad[idx] > 0.0) == (vel[idx] > 0.0);
            gains[idx] = same_sign ? std::max(gains[idx] * 0.8, 0.01) : gains[idx] + 0.2;
            vel[idx] = momentum * vel[idx] - cfg.learning_rate * gains[idx] * grad[idx];
            y[idx] += vel[idx];
        }
        // recentre
        double mx = 0.0, my = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            mx += y[static_cast<size_t>(i) * 2];
            my += y[static_cast<size_t>(i) * 2 + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
            y[static_cast<size_t>(i) * 2] -= mx;
            y[static_cast<size_t>(i) * 2 + 1] -= my;
        }

        if (iter >= tail_start) {
            // KL(P || Q) with the unexaggerated P, at the post-update layout
            double zs = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                for (std::int64_t j = i + 1; j < n; ++j) {
                    const double dx = y[static_cast<size_t>(i) * 2] - y[static_cast<size_t>(j) * 2];
                    const double dy =
                        y[static_cast<size_t>(i) * 2 + 1] - y[static_cast<size_t>(j) * 2 + 1];
                    const double w = 1.0 / (1.0 + dx * dx + dy * dy);
                    q[static_cast<size_t>(i) * n + j] = w;
                    q[static_cast<size_t>(j) * n + i] = w;
                    zs += 2.0 * w;
                }
            }
            double kl = 0.0;
            for (std::int64_t i = 0; i < n; ++i) {
                for (std::int64_t j = 0; j < n; ++j) {
                    const double pij = p[static_cast<size_t>(i) * n + j];
                    if (pij <= 0.0) continue;
                    const double qij = std::max(q[static_cast<size_t>(i) * n + j] / zs, 1e-300);
                    kl += pij * std::log(pij / qij);
                }
            }
            result.kl_tail.push_back(kl);
        }
    }
    result.kl_final = result.kl_tail.empty() ? 0.0 : result.kl_tail.back();

    // undo the canonical permutation
    result.embedding = Matrix(n, 2);
    for (size_t i = 0; i < order.size(); ++i) {
        result.embedding.at(order[i], 0) = static_cast<float>(y[i * 2]);
        result.embedding.at(order[i], 1) = static_cast<float>(y[i * 2 + 1]);
    }
    return result;
}

} // namespace cgd
