#include "cgdetect/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "cgdetect/rng.hpp"

namespace cgd {

namespace {

FeatureSet subset(const FeatureSet& fs, const std::vector<std::int64_t>& rows) {
    FeatureSet out;
    out.features = Matrix(static_cast<std::int64_t>(rows.size()), fs.features.cols);
    out.labels.reserve(rows.size());
    out.ids.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        std::copy_n(fs.features.data.data() + static_cast<size_t>(rows[i]) * fs.features.cols,
                    fs.features.cols,
                    out.features.data.data() + i * static_cast<size_t>(fs.features.cols));
        out.labels.push_back(fs.labels[static_cast<size_t>(rows[i])]);
        out.ids.push_back(fs.ids[static_cast<size_t>(rows[i])]);
    }
    return out;
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
    if (truth.empty()) return 0.0;
    std::int64_t hits = 0;
    for (size_t i = 0; i < truth.size(); ++i) hits += truth[i] == pred[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// Run fn(i) for i in [0, count) on up to jobs threads. Results must be
// written to disjoint, preallocated slots so scheduling cannot matter.
void parallel_for(std::int64_t count, int jobs, const std::function<void(std::int64_t)>& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::int64_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    const int n_threads = static_cast<int>(std::min<std::int64_t>(jobs, count));
    for (int t = 0; t < n_threads; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::int64_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace

FoldPlan make_folds(const std::vector<int>& labels, int n_folds, std::uint64_t seed) {
    if (n_folds < 2) throw ConfigError("folds: need at least 2 folds");
    std::vector<std::int64_t> class_rows[2];
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw ConfigError("folds: label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " is not binary");
        }
        class_rows[labels[i]].push_back(static_cast<std::int64_t>(i));
    }
    for (int c = 0; c < 2; ++c) {
        if (static_cast<int>(class_rows[c].size()) < n_folds) {
            throw ConfigError("folds: class " + std::to_string(c) + " has only " +
                              std::to_string(class_rows[c].size()) + " samples for " +
                              std::to_string(n_folds) + " folds");
        }
    }

    FoldPlan plan;
    plan.n_folds = n_folds;
    plan.seed = seed;
    plan.assignments.assign(labels.size(), -1);

    Rng rng(hash_name(seed, "fold_plan"));
    std::vector<std::int64_t> load(static_cast<size_t>(n_folds), 0);
    for (int c = 0; c < 2; ++c) {
        auto& rows = class_rows[c];
        rng.shuffle(rows);
        const std::int64_t base = static_cast<std::int64_t>(rows.size()) / n_folds;
        const int extras = static_cast<int>(rows.size() % static_cast<size_t>(n_folds));

        // hand the one-extra folds to the currently least-loaded folds so the
        // overall fold sizes stay within one of each other
        std::vector<int> fold_order(static_cast<size_t>(n_folds));
        std::iota(fold_order.begin(), fold_order.end(), 0);
        std::stable_sort(fold_order.begin(), fold_order.end(),
                         [&](int a, int b) { return load[static_cast<size_t>(a)] < load[static_cast<size_t>(b)]; });

        size_t cursor = 0;
        for (int rank = 0; rank < n_folds; ++rank) {
            const int fold = fold_order[static_cast<size_t>(rank)];
            const std::int64_t take = base + (rank < extras ? 1 : 0);
            for (std::int64_t j = 0; j < take; ++j) {
                plan.assignments[static_cast<size_t>(rows[cursor++])] = fold;
            }
            load[static_cast<size_t>(fold)] += take;
        }
    }
    return plan;
}

RocCurve roc_auc(const std::vector<int>& labels, const std::vector<float>& scores) {
    if (labels.size() != scores.size()) {
        throw ShapeError("roc: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(scores.size()) + " scores");
    }
    std::int64_t pos = 0, neg = 0;
    for (int l : labels) (l == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) {
        throw NumericError("roc: undefined metric, only one class present");
    }

    std::vector<std::int64_t> idx(labels.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    });

    RocCurve curve;
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::int64_t tp = 0, fp = 0;
    double area = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        // group equal scores into one threshold step
        const float s = scores[static_cast<size_t>(idx[i])];
        std::int64_t dtp = 0, dfp = 0;
        while (i < idx.size() && scores[static_cast<size_t>(idx[i])] == s) {
            (labels[static_cast<size_t>(idx[i])] == 1 ? dtp : dfp) += 1;
            ++i;
        }
        const double fpr0 = static_cast<double>(fp) / neg;
        const double tpr0 = static_cast<double>(tp) / pos;
        tp += dtp;
        fp += dfp;
        const double fpr1 = static_cast<double>(fp) / neg;
        const double tpr1 = static_cast<double>(tp) / pos;
        area += (fpr1 - fpr0) * 0.5 * (tpr0 + tpr1);
        curve.points.push_back({fpr1, tpr1, static_cast<double>(s)});
    }
    curve.auc = area;
    return curve;
}

ConfusionMatrix confusion(const std::vector<int>& labels, const std::vector<int>& predictions) {
    if (labels.size() != predictions.size()) {
        throw ShapeError("confusion: " + std::to_string(labels.size()) + " labels vs " +
                         std::to_string(predictions.size()) + " predictions");
    }
    ConfusionMatrix cm;
    for (size_t i = 0; i < labels.size(); ++i) {
        cm.counts[labels[i]][predictions[i]] += 1;
    }
    for (int r = 0; r < 2; ++r) {
        const long long total = cm.counts[r][0] + cm.counts[r][1];
        if (total > 0) {
            cm.normalized[r][0] = static_cast<double>(cm.counts[r][0]) / total;
            cm.normalized[r][1] = static_cast<double>(cm.counts[r][1]) / total;
        }
    }
    return cm;
}

namespace {

struct FoldOutcome {
    std::vector<std::int64_t> test_rows;
    std::vector<int> predictions;
    std::vector<float> scores;
    double accuracy = 0.0;
    double seconds = 0.0;
    std::string warning;
};

FoldOutcome run_fold(const FeatureSet& fs, const ClassifierSpec& spec, const FoldPlan& plan,
                     int fold) {
    FoldOutcome out;
    std::vector<std::int64_t> train_rows;
    for (size_t i = 0; i < plan.assignments.size(); ++i) {
        if (plan.assignments[i] == fold) {
            out.test_rows.push_back(static_cast<std::int64_t>(i));
        } else {
            train_rows.push_back(static_cast<std::int64_t>(i));
        }
    }
    const auto t0 = std::chrono::steady_clock::now();

    const FeatureSet test = subset(fs, out.test_rows);
    if (spec.kind == ClassifierKind::Oracle) {
        // evaluation hook: the true labels leak straight through
        out.predictions = test.labels;
        out.scores.assign(test.labels.begin(), test.labels.end());
    } else {
        const FeatureSet train = subset(fs, train_rows);
        const TrainedClassifier model = TrainedClassifier::train(train, spec);
        if (!model.warning().empty()) out.warning = model.warning();
        Prediction pred = model.predict(test.features);
        out.predictions = std::move(pred.labels);
        out.scores = std::move(pred.scores);
    }
    out.accuracy = accuracy(test.labels, out.predictions);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

} // namespace

EvalReport cross_validate(const FeatureSet& fs, const ClassifierSpec& spec,
                          const FoldPlan& plan, int jobs) {
    fs.validate();
    if (static_cast<size_t>(fs.size()) != plan.assignments.size()) {
        throw ConfigError("cross_validate: plan covers " +
                          std::to_string(plan.assignments.size()) + " rows, feature set has " +
                          std::to_string(fs.size()));
    }

    EvalReport report;
    report.n_folds = plan.n_folds;
    report.n_samples = fs.size();
    report.seed = plan.seed;

    std::vector<FoldOutcome> outcomes(static_cast<size_t>(plan.n_folds));
    parallel_for(plan.n_folds, jobs, [&](std::int64_t f) {
        try {
            outcomes[static_cast<size_t>(f)] = run_fold(fs, spec, plan, static_cast<int>(f));
        } catch (const Error& e) {
            throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
        }
    });

    std::vector<int> pooled_truth, pooled_pred;
    std::vector<float> pooled_scores;
    for (const FoldOutcome& out : outcomes) {
        report.fold_accuracy.push_back(out.accuracy);
        report.fold_seconds.push_back(out.seconds);
        if (!out.warning.empty()) report.warnings.push_back(out.warning);
        for (size_t i = 0; i < out.test_rows.size(); ++i) {
            pooled_truth.push_back(fs.labels[static_cast<size_t>(out.test_rows[i])]);
            pooled_pred.push_back(out.predictions[i]);
            pooled_scores.push_back(out.scores[i]);
        }
    }

    const double k = static_cast<double>(plan.n_folds);
    report.mean_accuracy =
        std::accumulate(report.fold_accuracy.begin(), report.fold_accuracy.end(), 0.0) / k;
    double var = 0.0;
    for (double a : report.fold_accuracy) {
        var += (a - report.mean_accuracy) * (a - report.mean_accuracy);
    }
    report.variance = var / k; // population variance
    report.std_dev = std::sqrt(report.variance);
    report.confusion = confusion(pooled_truth, pooled_pred);
    report.roc = roc_auc(pooled_truth, pooled_scores);
    return report;
}

GridSpec GridSpec::svm_rbf_default() {
    GridSpec g;
    GridAxis c{"C", {}};
    for (int e = -2; e <= 10; ++e) c.values.push_back(std::pow(10.0, e));
    GridAxis gamma{"gamma", {}};
    for (int e = -9; e <= 3; ++e) gamma.values.push_back(std::pow(10.0, e));
    g.axes = {c, gamma};
    return g;
}

GridSpec GridSpec::svm_linear_default() {
    GridSpec g;
    GridAxis c{"C", {}};
    for (int e = -2; e <= 10; ++e) c.values.push_back(std::pow(10.0, e));
    g.axes = {c};
    return g;
}

namespace {

void apply_axis(ClassifierSpec& spec, const std::string& axis, double value) {
    if (axis == "C") {
        spec.svm.C = value;
    } else if (axis == "gamma") {
        spec.svm.gamma = value;
    } else if (axis == "k") {
        spec.knn.k = static_cast<int>(value);
    } else if (axis == "lr") {
        spec.gbt.learning_rate = static_cast<float>(value);
        spec.adam.lr = static_cast<float>(value);
    } else if (axis == "max_depth") {
        spec.gbt.max_depth = static_cast<int>(value);
    } else if (axis == "n_estimators") {
        spec.gbt.n_estimators = static_cast<int>(value);
    } else {
        throw ConfigError("grid: unknown axis '" + axis + "'");
    }
}

} // namespace

GridResult grid_search(const FeatureSet& fs, const ClassifierSpec& base, const GridSpec& grid,
                       const FoldPlan& plan, int jobs) {
    if (grid.axes.empty()) throw ConfigError("grid: no axes defined");
    for (const GridAxis& ax : grid.axes) {
        if (ax.values.empty()) throw ConfigError("grid: axis '" + ax.name + "' is empty");
    }

    std::size_t total = 1;
    for (const GridAxis& ax : grid.axes) total *= ax.values.size();

    GridResult result;
    result.axes = grid.axes;
    result.cells.resize(total);

    parallel_for(static_cast<std::int64_t>(total), jobs, [&](std::int64_t cell_idx) {
        GridCell& cell = result.cells[static_cast<size_t>(cell_idx)];
        // decode row-major cell index, first axis slowest
        std::size_t rest = static_cast<size_t>(cell_idx);
        cell.values.resize(grid.axes.size());
        for (size_t a = grid.axes.size(); a-- > 0;) {
            cell.values[a] = grid.axes[a].values[rest % grid.axes[a].values.size()];
            rest /= grid.axes[a].values.size();
        }
        ClassifierSpec spec = base;
        for (size_t a = 0; a < grid.axes.size(); ++a) {
            apply_axis(spec, grid.axes[a].name, cell.values[a]);
        }
        try {
            const EvalReport rep = cross_validate(fs, spec, plan);
            cell.mean_accuracy = rep.mean_accuracy;
        } catch (const Error& e) {
            cell.failed = true;
            cell.error = e.what();
            cell.mean_accuracy = std::numeric_limits<double>::quiet_NaN();
        }
    });

    bool any_ok = false;
    double best = -1.0;
    for (size_t i = 0; i < result.cells.size(); ++i) {
        const GridCell& cell = result.cells[i];
        if (cell.failed) continue;
        any_ok = true;
        if (cell.mean_accuracy > best) { // strict: ties keep the earlier cell
            best = cell.mean_accuracy;
            result.best_index = i;
        }
    }
    if (!any_ok) {
        std::string msg = "grid: every cell failed; first error: " + result.cells[0].error;
        throw NumericError(msg);
    }
    result.best_accuracy = best;
    result.best_spec = base;
    for (size_t a = 0; a < grid.axes.size(); ++a) {
        apply_axis(result.best_spec, grid.axes[a].name,
                   result.cells[result.best_index].values[a]);
    }
    return result;
}

std::vector<LearningCurveRow> learning_curve(const FeatureSet& fs, const ClassifierSpec& spec,
                                             const std::vector<double>& fractions,
                                             const FoldPlan& plan) {
    for (double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) {
            throw ConfigError("learning_curve: fraction " + std::to_string(f) +
                              " outside (0, 1]");
        }
    }

    std::vector<LearningCurveRow> rows;
    for (double fraction : fractions) {
        LearningCurveRow row;
        row.fraction = fraction;
        std::vector<double> train_acc, val_acc;

        for (int fold = 0; fold < plan.n_folds; ++fold) {
            std::vector<std::int64_t> train_rows, test_rows;
            for (size_t i = 0; i < plan.assignments.size(); ++i) {
                (plan.assignments[i] == fold ? test_rows : train_rows)
                    .push_back(static_cast<std::int64_t>(i));
            }
            // stratified, seeded subset of the training rows
            std::vector<std::int64_t> by_class[2];
            for (std::int64_t r : train_rows) by_class[fs.labels[static_cast<size_t>(r)]].push_back(r);
            Rng rng(hash_name(plan.seed ^ static_cast<std::uint64_t>(fold), "learning_curve"));
            std::vector<std::int64_t> use;
            for (int c = 0; c < 2; ++c) {
                rng.shuffle(by_class[c]);
                const auto take = static_cast<std::int64_t>(
                    std::llround(fraction * static_cast<double>(by_class[c].size())));
                for (std::int64_t j = 0; j < take; ++j) use.push_back(by_class[c][static_cast<size_t>(j)]);
            }
            std::sort(use.begin(), use.end());

            bool has[2] = {false, false};
            for (std::int64_t r : use) has[fs.labels[static_cast<size_t>(r)]] = true;
            if (!has[0] || !has[1]) {
                row.warning = "subset lost a class at fraction " + std::to_string(fraction);
                continue;
            }

            const FeatureSet train = subset(fs, use);
            const FeatureSet test = subset(fs, test_rows);
            if (spec.kind == ClassifierKind::Oracle) {
                train_acc.push_back(1.0);
                val_acc.push_back(1.0);
                continue;
            }
            const TrainedClassifier model = TrainedClassifier::train(train, spec);
            train_acc.push_back(accuracy(train.labels, model.predict(train.features).labels));
            val_acc.push_back(accuracy(test.labels, model.predict(test.features).labels));
        }

        row.folds_used = static_cast<int>(val_acc.size());
        if (val_acc.empty()) {
            row.skipped = true;
        } else {
            const double nt = static_cast<double>(train_acc.size());
            row.train_mean = std::accumulate(train_acc.begin(), train_acc.end(), 0.0) / nt;
            row.val_mean = std::accumulate(val_acc.begin(), val_acc.end(), 0.0) / nt;
            double tv = 0.0, vv = 0.0;
            for (double a : train_acc) tv += (a - row.train_mean) * (a - row.train_mean);
            for (double a : val_acc) vv += (a - row.val_mean) * (a - row.val_mean);
            row.train_std = std::sqrt(tv / nt);
            row.val_std = std::sqrt(vv / nt);
        }
        rows.push_back(row);
    }
    return rows;
}

} // namespace cgd
