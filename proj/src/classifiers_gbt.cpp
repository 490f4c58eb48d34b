#include "cgdetect/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cgd {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double logistic_loss(const std::vector<double>& margin, const std::vector<int>& labels) {
    double loss = 0.0;
    for (size_t i = 0; i < margin.size(); ++i) {
        double p = sigmoid(margin[i]);
        p = std::clamp(p, 1e-12, 1.0 - 1e-12);
        loss += labels[i] == 1 ? -std::log(p) : -std::log(1.0 - p);
    }
    return loss / static_cast<double>(margin.size());
}

struct SplitCandidate {
    double gain = 0.0;
    int feature = -1;
    float threshold = 0.0f;
    bool valid = false;
};

} // namespace

float GbtTree::predict(std::span<const float> x) const {
    int node = 0;
    while (nodes[static_cast<size_t>(node)].left >= 0) {
        const Node& nd = nodes[static_cast<size_t>(node)];
        node = x[static_cast<size_t>(nd.feature)] < nd.threshold ? nd.left : nd.right;
    }
    return nodes[static_cast<size_t>(node)].value;
}

int GbtTree::depth() const {
    // longest root-to-leaf edge count
    std::vector<int> depth_of(nodes.size(), 0);
    int best = 0;
    for (size_t i = 0; i < nodes.size(); ++i) {
        const Node& nd = nodes[i];
        if (nd.left >= 0) {
            depth_of[static_cast<size_t>(nd.left)] = depth_of[i] + 1;
            depth_of[static_cast<size_t>(nd.right)] = depth_of[i] + 1;
            best = std::max(best, depth_of[i] + 1);
        }
    }
    return best;
}

double GbtModel::predict_proba(std::span<const float> x) const {
    double margin = base_score;
    for (const GbtTree& tree : trees) {
        margin += cfg.learning_rate * tree.predict(x);
    }
    return sigmoid(margin);
}

GbtModel train_gbt(const Matrix& x, const std::vector<int>& labels, const GbtConfig& cfg) {
    require_both_classes(labels);
    if (cfg.max_depth < 1) throw ConfigError("gbt: max_depth must be >= 1");
    if (cfg.n_estimators < 0) throw ConfigError("gbt: n_estimators must be >= 0");
    if (!(cfg.lambda >= 0.0f)) throw ConfigError("gbt: lambda must be >= 0");

    const std::int64_t n = x.rows;
    const std::int64_t d = x.cols;

    GbtModel model;
    model.cfg = cfg;
    const double prior =
        std::accumulate(labels.begin(), labels.end(), 0.0) / static_cast<double>(n);
    model.base_score = static_cast<float>(std::log(prior / (1.0 - prior)));

    // one global argsort per feature, stable so equal values keep row order
    std::vector<std::vector<std::int32_t>> sorted(static_cast<size_t>(d));
    for (std::int64_t f = 0; f < d; ++f) {
        auto& idx = sorted[static_cast<size_t>(f)];
        idx.resize(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) {
            return x.at(a, f) < x.at(b, f);
        });
    }

    std::vector<double> margin(static_cast<size_t>(n), model.base_score);
    std::vector<double> grad(static_cast<size_t>(n)), hess(static_cast<size_t>(n));

    for (int t = 0; t < cfg.n_estimators; ++t) {
        for (std::int64_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[static_cast<size_t>(i)]);
            grad[static_cast<size_t>(i)] = p - labels[static_cast<size_t>(i)];
            hess[static_cast<size_t>(i)] = std::max(p * (1.0 - p), 1e-16);
        }

        GbtTree tree;
        tree.nodes.push_back({});
        std::vector<std::int32_t> node_of(static_cast<size_t>(n), 0);
        std::vector<int> level_nodes = {0};

        for (int depth = 0; depth < cfg.max_depth && !level_nodes.empty(); ++depth) {
            const int first_level_node = level_nodes.front();
            const int last_level_node = level_nodes.back();
            const size_t n_level = level_nodes.size();
            auto local = [&](std::int32_t node) { return node - first_level_node; };

            // per-node totals
            std::vector<double> g_total(n_level, 0.0), h_total(n_level, 0.0);
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int32_t nd = node_of[static_cast<size_t>(i)];
                if (nd < first_level_node || nd > last_level_node) continue;
                g_total[static_cast<size_t>(local(nd))] += grad[static_cast<size_t>(i)];
                h_total[static_cast<size_t>(local(nd))] += hess[static_cast<size_t>(i)];
            }

            std::vector<SplitCandidate> best(n_level);
            std::vector<double> g_left(n_level), h_left(n_level);
            std::vector<std::int32_t> last_row(n_level);

            // exact greedy: one pass per feature over the presorted order,
            // accumulating left statistics for every node of this level
            for (std::int64_t f = 0; f < d; ++f) {
                std::fill(g_left.begin(), g_left.end(), 0.0);
                std::fill(h_left.begin(), h_left.end(), 0.0);
                std::fill(last_row.begin(), last_row.end(), -1);
                for (std::int32_t row : sorted[static_cast<size_t>(f)]) {
                    const std::int32_t nd = node_of[static_cast<size_t>(row)];
                    if (nd < first_level_node || nd > last_level_node) continue;
                    const size_t ln = static_cast<size_t>(local(nd));
                    // candidate boundary between the previous sample and this
                    // one, only where the feature value strictly increases
                    if (last_row[ln] >= 0) {
                        const float prev = x.at(last_row[ln], f);
                        const float curr = x.at(row, f);
                        if (curr > prev) {
                            const double gl = g_left[ln], hl = h_left[ln];
                            const double gr = g_total[ln] - gl, hr = h_total[ln] - hl;
                            if (hl >= cfg.min_child_weight && hr >= cfg.min_child_weight) {
                                const double gain =
                                    0.5 * (gl * gl / (hl + cfg.lambda) + gr * gr / (hr + cfg.lambda) -
                                           g_total[ln] * g_total[ln] / (h_total[ln] + cfg.lambda));
                                if (gain > best[ln].gain + 1e-12) {
                                    best[ln].gain = gain;
                                    best[ln].feature = static_cast<int>(f);
                                    best[ln].threshold =
                                        prev + (curr - prev) * 0.5f; // midpoint of distinct values
                                    best[ln].valid = true;
                                }
                            }
                        }
                    }
                    g_left[ln] += grad[static_cast<size_t>(row)];
                    h_left[ln] += hess[static_cast<size_t>(row)];
                    last_row[ln] = row;
                }
            }

            // materialize the accepted splits
            std::vector<int> next_level;
            std::vector<std::int32_t> child_base(n_level, -1);
            for (size_t ln = 0; ln < n_level; ++ln) {
                if (!best[ln].valid) continue;
                GbtTree::Node& nd = tree.nodes[static_cast<size_t>(level_nodes[ln])];
                nd.feature = best[ln].feature;
                nd.threshold = best[ln].threshold;
                nd.left = static_cast<int>(tree.nodes.size());
                nd.right = nd.left + 1;
                child_base[ln] = nd.left;
                tree.nodes.push_back({});
                tree.nodes.push_back({});
                next_level.push_back(nd.left);
                next_level.push_back(nd.right);
            }
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int32_t nd = node_of[static_cast<size_t>(i)];
                if (nd < first_level_node || nd > last_level_node) continue;
                const size_t ln = static_cast<size_t>(local(nd));
                if (child_base[ln] < 0) continue;
                const GbtTree::Node& parent = tree.nodes[static_cast<size_t>(level_nodes[ln])];
                node_of[static_cast<size_t>(i)] =
                    x.at(i, parent.feature) < parent.threshold ? parent.left : parent.right;
            }
            level_nodes = std::move(next_level);
        }

        // L2-regularized leaf weights w = -G / (H + lambda)
        {
            std::vector<double> g_leaf(tree.nodes.size(), 0.0), h_leaf(tree.nodes.size(), 0.0);
            for (std::int64_t i = 0; i < n; ++i) {
                const std::int32_t nd = node_of[static_cast<size_t>(i)];
                g_leaf[static_cast<size_t>(nd)] += grad[static_cast<size_t>(i)];
                h_leaf[static_cast<size_t>(nd)] += hess[static_cast<size_t>(i)];
            }
            for (size_t nd = 0; nd < tree.nodes.size(); ++nd) {
                if (tree.nodes[nd].left < 0) {
                    tree.nodes[nd].value =
                        static_cast<float>(-g_leaf[nd] / (h_leaf[nd] + cfg.lambda));
                }
            }
        }

        if (t == 0 && tree.nodes.size() == 1) {
            model.warning = "no informative split found; trees degenerate to the base score";
        }

        for (std::int64_t i = 0; i < n; ++i) {
            margin[static_cast<size_t>(i)] +=
                cfg.learning_rate * tree.nodes[static_cast<size_t>(node_of[static_cast<size_t>(i)])].value;
        }
        model.trees.push_back(std::move(tree));
        model.train_loss.push_back(logistic_loss(margin, labels));
    }
    return model;
}

} // namespace cgd
