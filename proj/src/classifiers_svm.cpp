#include "cgdetect/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cgdetect/rng.hpp"

namespace cgd {

namespace {

// Full training Gram matrix in float; at desk scale (n up to a few
// thousand) this is cheaper than any caching scheme.
class GramCache {
public:
    GramCache(const Matrix& x, const SvmConfig& cfg) : n_(x.rows) {
        gram_.resize(static_cast<size_t>(n_) * n_);
        std::vector<double> sq(static_cast<size_t>(n_), 0.0);
        if (cfg.kernel == SvmConfig::Kernel::Rbf) {
            for (std::int64_t i = 0; i < n_; ++i) {
                const float* row = x.data.data() + static_cast<size_t>(i) * x.cols;
                double acc = 0.0;
                for (std::int64_t j = 0; j < x.cols; ++j) acc += static_cast<double>(row[j]) * row[j];
                sq[static_cast<size_t>(i)] = acc;
            }
        }
        for (std::int64_t i = 0; i < n_; ++i) {
            const float* a = x.data.data() + static_cast<size_t>(i) * x.cols;
            for (std::int64_t j = i; j < n_; ++j) {
                const float* b = x.data.data() + static_cast<size_t>(j) * x.cols;
                double dot = 0.0;
                for (std::int64_t l = 0; l < x.cols; ++l) {
                    dot += static_cast<double>(a[l]) * b[l];
                }
                double k;
                if (cfg.kernel == SvmConfig::Kernel::Linear) {
                    k = dot;
                } else {
                    const double d2 = sq[static_cast<size_t>(i)] + sq[static_cast<size_t>(j)] - 2.0 * dot;
                    k = std::exp(-cfg.gamma * std::max(d2, 0.0));
                }
                gram_[static_cast<size_t>(i) * n_ + j] = k;
                gram_[static_cast<size_t>(j) * n_ + i] = k;
            }
        }
    }

    double at(std::int64_t i, std::int64_t j) const {
        return gram_[static_cast<size_t>(i) * n_ + j];
    }

private:
    std::int64_t n_;
    std::vector<double> gram_;
};

struct SmoState {
    const GramCache& gram;
    const std::vector<double>& y; // +1 / -1
    double C;
    double tol;
    std::int64_t n;
    std::vector<double> alpha;
    std::vector<double> error; // f(x_i) - y_i, maintained incrementally
    double b = 0.0;
    Rng rng;

    SmoState(const GramCache& g, const std::vector<double>& y_, double C_, double tol_,
             std::int64_t n_, std::uint64_t seed)
        : gram(g), y(y_), C(C_), tol(tol_), n(n_),
          alpha(static_cast<size_t>(n_), 0.0), error(static_cast<size_t>(n_), 0.0),
          rng(hash_name(seed, "smo")) {
        for (std::int64_t i = 0; i < n; ++i) error[static_cast<size_t>(i)] = -y[static_cast<size_t>(i)];
    }

    bool take_step(std::int64_t i1, std::int64_t i2) {
        if (i1 == i2) return false;
        const double a1_old = alpha[static_cast<size_t>(i1)];
        const double a2_old = alpha[static_cast<size_t>(i2)];
        const double y1 = y[static_cast<size_t>(i1)];
        const double y2 = y[static_cast<size_t>(i2)];
        const double e1 = error[static_cast<size_t>(i1)];
        const double e2 = error[static_cast<size_t>(i2)];
        const double s = y1 * y2;

        double lo, hi;
        if (s < 0) {
            lo = std::max(0.0, a2_old - a1_old);
            hi = std::min(C, C + a2_old - a1_old);
        } else {
            lo = std::max(0.0, a1_old + a2_old - C);
            hi = std::min(C, a1_old + a2_old);
        }
        if (lo >= hi) return false;

        const double k11 = gram.at(i1, i1);
        const double k12 = gram.at(i1, i2);
        const double k22 = gram.at(i2, i2);
        const double eta = k11 + k22 - 2.0 * k12;

        double a2;
        if (eta > 0.0) {
            a2 = a2_old + y2 * (e1 - e2) / eta;
            a2 = std::clamp(a2, lo, hi);
        } else {
            // objective at the clip ends
            const double f1 = y1 * (e1 + b) - a1_old * k11 - s * a2_old * k12;
            const double f2 = y2 * (e2 + b) - a2_old * k22 - s * a1_old * k12;
            const double l1 = a1_old + s * (a2_old - lo);
            const double h1 = a1_old + s * (a2_old - hi);
            const double obj_lo = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 +
                                  s * lo * l1 * k12;
            const double obj_hi = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 +
                                  s * hi * h1 * k12;
            if (obj_lo < obj_hi - 1e-12) {
                a2 = lo;
            } else if (obj_lo > obj_hi + 1e-12) {
                a2 = hi;
            } else {
                a2 = a2_old;
            }
        }
        if (std::abs(a2 - a2_old) < 1e-12 * (a2 + a2_old + 1e-12)) return false;

        const double a1 = a1_old + s * (a2_old - a2);

        // intercept so that the updated multipliers satisfy KKT
        const double b1 = e1 + y1 * (a1 - a1_old) * k11 + y2 * (a2 - a2_old) * k12 + b;
        const double b2 = e2 + y1 * (a1 - a1_old) * k12 + y2 * (a2 - a2_old) * k22 + b;
        double b_new;
        if (a1 > 0.0 && a1 < C) {
            b_new = b1;
        } else if (a2 > 0.0 && a2 < C) {
            b_new = b2;
        } else {
            b_new = 0.5 * (b1 + b2);
        }

        const double d1 = y1 * (a1 - a1_old);
        const double d2 = y2 * (a2 - a2_old);
        for (std::int64_t i = 0; i < n; ++i) {
            error[static_cast<size_t>(i)] +=
                d1 * gram.at(i1, i) + d2 * gram.at(i2, i) - (b_new - b);
        }
        b = b_new;
        alpha[static_cast<size_t>(i1)] = a1;
        alpha[static_cast<size_t>(i2)] = a2;
        return true;
    }

    bool examine(std::int64_t i2) {
        const double y2 = y[static_cast<size_t>(i2)];
        const double a2 = alpha[static_cast<size_t>(i2)];
        const double e2 = error[static_cast<size_t>(i2)];
        const double r2 = e2 * y2;
        if (!((r2 < -tol && a2 < C) || (r2 > tol && a2 > 0.0))) return false;

        // second choice heuristic: maximize |E1 - E2| over non-bound points
        std::int64_t best = -1;
        double best_gap = -1.0;
        std::int64_t n_free = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double a = alpha[static_cast<size_t>(i)];
            if (a > 0.0 && a < C) {
                ++n_free;
                const double gap = std::abs(error[static_cast<size_t>(i)] - e2);
                if (gap > best_gap) {
                    best_gap = gap;
                    best = i;
                }
            }
        }
        if (best >= 0 && take_step(best, i2)) return true;

        if (n_free > 0) {
            const std::int64_t start = static_cast<std::int64_t>(rng.next_below(
                static_cast<std::uint64_t>(n)));
            for (std::int64_t k = 0; k < n; ++k) {
                const std::int64_t i = (start + k) % n;
                const double a = alpha[static_cast<size_t>(i)];
                if (a > 0.0 && a < C && take_step(i, i2)) return true;
            }
        }
        const std::int64_t start = static_cast<std::int64_t>(rng.next_below(
            static_cast<std::uint64_t>(n)));
        for (std::int64_t k = 0; k < n; ++k) {
            const std::int64_t i = (start + k) % n;
            if (take_step(i, i2)) return true;
        }
        return false;
    }
};

} // namespace

double SvmModel::decision_value(std::span<const float> x) const {
    const std::int64_t m = support_vectors.rows;
    const std::int64_t d = support_vectors.cols;
    if (static_cast<std::int64_t>(x.size()) != d) {
        throw ShapeError("svm: query dim " + std::to_string(x.size()) +
                         " != training dim " + std::to_string(d));
    }
    double f = intercept;
    for (std::int64_t i = 0; i < m; ++i) {
        const float* sv = support_vectors.data.data() + static_cast<size_t>(i) * d;
        double k;
        if (cfg.kernel == SvmConfig::Kernel::Linear) {
            double dot = 0.0;
            for (std::int64_t j = 0; j < d; ++j) dot += static_cast<double>(sv[j]) * x[j];
            k = dot;
        } else {
            double d2 = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                const double diff = static_cast<double>(sv[j]) - x[j];
                d2 += diff * diff;
            }
            k = std::exp(-cfg.gamma * d2);
        }
        f += dual_coef[static_cast<size_t>(i)] * k;
    }
    return f;
}

SvmModel train_svm(const Matrix& x, const std::vector<int>& labels, const SvmConfig& cfg) {
    require_both_classes(labels);
    if (!(cfg.C > 0.0)) throw ConfigError("svm: C must be > 0");
    if (cfg.kernel == SvmConfig::Kernel::Rbf && !(cfg.gamma > 0.0)) {
        throw ConfigError("svm: gamma must be > 0 for the rbf kernel");
    }
    if (!(cfg.tolerance > 0.0)) throw ConfigError("svm: tolerance must be > 0");

    const std::int64_t n = x.rows;
    std::vector<double> y(static_cast<size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) y[static_cast<size_t>(i)] = labels[static_cast<size_t>(i)] == 1 ? 1.0 : -1.0;

    const GramCache gram(x, cfg);
    SmoState smo(gram, y, cfg.C, cfg.tolerance, n, cfg.seed);

    // Sweep all points, then only the non-bound set while progress is made;
    // stop once max_passes consecutive sweeps change nothing.
    const int max_sweeps = 1000;
    int quiet = 0;
    bool examine_all = true;
    int sweeps = 0;
    bool converged = false;
    while (sweeps < max_sweeps) {
        ++sweeps;
        int changed = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            if (examine_all) {
                changed += smo.examine(i) ? 1 : 0;
            } else {
                const double a = smo.alpha[static_cast<size_t>(i)];
                if (a > 0.0 && a < cfg.C) changed += smo.examine(i) ? 1 : 0;
            }
        }
        if (changed == 0) {
            if (examine_all) {
                if (++quiet >= cfg.max_passes) {
                    converged = true;
                    break;
                }
            } else {
                examine_all = true;
            }
        } else {
            quiet = 0;
            examine_all = false;
        }
    }

    SvmModel model;
    model.cfg = cfg;
    model.converged = converged;
    if (!converged) {
        model.warning = "smo did not converge within " + std::to_string(max_sweeps) +
                        " sweeps; returning best iterate";
    }
    model.intercept = -smo.b; // decision value f(x) = sum alpha_i y_i k(x_i, x) + b

    // dual objective W(alpha) = sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
    double obj = 0.0;
    for (std::int64_t i = 0; i < n; ++i) obj += smo.alpha[static_cast<size_t>(i)];
    for (std::int64_t i = 0; i < n; ++i) {
        if (smo.alpha[static_cast<size_t>(i)] == 0.0) continue;
        for (std::int64_t j = 0; j < n; ++j) {
            if (smo.alpha[static_cast<size_t>(j)] == 0.0) continue;
            obj -= 0.5 * smo.alpha[static_cast<size_t>(i)] * smo.alpha[static_cast<size_t>(j)] *
                   y[static_cast<size_t>(i)] * y[static_cast<size_t>(j)] * gram.at(i, j);
        }
    }
    model.dual_objective = obj;

    double balance = 0.0;
    double max_viol = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = smo.alpha[static_cast<size_t>(i)];
        balance += a * y[static_cast<size_t>(i)];
        const double margin = y[static_cast<size_t>(i)] *
                              (smo.error[static_cast<size_t>(i)] + y[static_cast<size_t>(i)]);
        double viol = 0.0;
        if (a <= 0.0) {
            viol = std::max(0.0, 1.0 - margin);
        } else if (a >= cfg.C) {
            viol = std::max(0.0, margin - 1.0);
        } else {
            viol = std::abs(margin - 1.0);
        }
        max_viol = std::max(max_viol, viol);
    }
    model.alpha_y_balance = balance;
    model.kkt_max_violation = max_viol;

    std::int64_t n_sv = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (smo.alpha[static_cast<size_t>(i)] > 0.0) ++n_sv;
    }
    model.support_vectors = Matrix(n_sv, x.cols);
    model.dual_coef.reserve(static_cast<size_t>(n_sv));
    std::int64_t r = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = smo.alpha[static_cast<size_t>(i)];
        if (a <= 0.0) continue;
        std::copy_n(x.data.data() + static_cast<size_t>(i) * x.cols, x.cols,
                    model.support_vectors.data.data() + static_cast<size_t>(r) * x.cols);
        model.dual_coef.push_back(a * y[static_cast<size_t>(i)]);
        ++r;
    }
    return model;
}

} // namespace cgd
