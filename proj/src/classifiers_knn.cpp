#include "cgdetect/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cgd {

namespace {

double sq_distance(const float* a, const float* b, std::int64_t d) {
    double acc = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
        const double diff = static_cast<double>(a[j]) - static_cast<double>(b[j]);
        acc += diff * diff;
    }
    return acc;
}

} // namespace

std::vector<int> knn_predict(const KnnModel& model, const Matrix& queries,
                             std::vector<float>* scores) {
    const std::int64_t n = model.train_features.rows;
    const std::int64_t d = model.train_features.cols;
    if (n == 0) throw ConfigError("knn: empty training set");
    if (model.cfg.k < 1) throw ConfigError("knn: k must be >= 1");
    if (model.cfg.k > n) {
        throw ConfigError("knn: k=" + std::to_string(model.cfg.k) +
                          " exceeds training size " + std::to_string(n));
    }
    if (queries.cols != d) {
        throw ShapeError("knn: query dim " + std::to_string(queries.cols) +
                         " != training dim " + std::to_string(d));
    }

    const int k = model.cfg.k;
    std::vector<int> labels(static_cast<size_t>(queries.rows));
    if (scores) scores->assign(static_cast<size_t>(queries.rows), 0.0f);

    std::vector<std::pair<double, std::int64_t>> dist(static_cast<size_t>(n));
    for (std::int64_t q = 0; q < queries.rows; ++q) {
        const float* qrow = queries.data.data() + static_cast<size_t>(q) * d;
        double best0 = std::numeric_limits<double>::infinity();
        double best1 = best0;
        for (std::int64_t i = 0; i < n; ++i) {
            const double sd =
                sq_distance(qrow, model.train_features.data.data() + static_cast<size_t>(i) * d, d);
            dist[static_cast<size_t>(i)] = {sd, i};
            if (model.train_labels[static_cast<size_t>(i)] == 1) {
                best1 = std::min(best1, sd);
            } else {
                best0 = std::min(best0, sd);
            }
        }
        // equal distances resolve to the lowest training-row index
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        int votes1 = 0;
        for (int i = 0; i < k; ++i) {
            votes1 += model.train_labels[static_cast<size_t>(dist[static_cast<size_t>(i)].second)];
        }
        int label;
        if (2 * votes1 > k) {
            label = 1;
        } else if (2 * votes1 < k) {
            label = 0;
        } else {
            // split vote: side with the single nearest neighbor
            label = model.train_labels[static_cast<size_t>(dist[0].second)];
        }
        labels[static_cast<size_t>(q)] = label;
        if (scores) {
            // distance margin: positive when the nearest CG example is closer
            (*scores)[static_cast<size_t>(q)] =
                static_cast<float>(std::sqrt(best0) - std::sqrt(best1));
        }
    }
    return labels;
}

} // namespace cgd
