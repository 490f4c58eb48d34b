#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cgdetect/classifiers.hpp"
#include "cgdetect/weights_io.hpp"

namespace cgd {

// Stratified fold assignment: folds disjoint and exhaustive, sizes differ by
// at most one, per-class counts per fold within one of proportionality.
struct FoldPlan {
    int n_folds = 5;
    std::vector<int> assignments; // per-sample fold index
    std::uint64_t seed = 0;
};

FoldPlan make_folds(const std::vector<int>& labels, int n_folds, std::uint64_t seed);

struct RocPoint {
    double fpr = 0.0, tpr = 0.0;
    double threshold = 0.0;
};

struct RocCurve {
    std::vector<RocPoint> points;
    double auc = 0.0;
};

// Threshold sweep over unique scores (ties grouped), trapezoidal AUC.
RocCurve roc_auc(const std::vector<int>& labels, const std::vector<float>& scores);

struct ConfusionMatrix {
    // counts[actual][predicted]: [[TN, FP], [FN, TP]]
    long long counts[2][2] = {{0, 0}, {0, 0}};
    double normalized[2][2] = {{0, 0}, {0, 0}}; // rows sum to 1 (or stay 0)
};

ConfusionMatrix confusion(const std::vector<int>& labels, const std::vector<int>& predictions);

struct EvalReport {
    int n_folds = 0;
    std::int64_t n_samples = 0;
    std::uint64_t seed = 0;
    std::vector<double> fold_accuracy;
    double mean_accuracy = 0.0;
    double std_dev = 0.0;
    double variance = 0.0; // population variance of per-fold accuracies
    ConfusionMatrix confusion;
    RocCurve roc;
    std::vector<double> fold_seconds; // wall clock; goes to the sidecar log only
    std::vector<std::string> warnings;
};

// Train on k-1 folds, test on the held-out fold, aggregate. Standardization
// statistics are fitted on each training split only. Predictions are pooled
// across folds for the confusion matrix and the ROC curve.
EvalReport cross_validate(const FeatureSet& fs, const ClassifierSpec& spec,
                          const FoldPlan& plan, int jobs = 1);

struct GridAxis {
    std::string name; // "C", "gamma", "k", ...
    std::vector<double> values;
};

struct GridSpec {
    std::vector<GridAxis> axes;

    // C in 10^-2..10^10, and for rbf gamma in 10^-9..10^3, decade steps.
    static GridSpec svm_rbf_default();
    static GridSpec svm_linear_default();
};

struct GridCell {
    std::vector<double> values; // one per axis
    double mean_accuracy = 0.0;
    bool failed = false;
    std::string error;
};

struct GridResult {
    std::vector<GridAxis> axes;
    std::vector<GridCell> cells; // row-major over axes, first axis slowest
    std::size_t best_index = 0;
    ClassifierSpec best_spec;
    double best_accuracy = 0.0;
};

// Best cell by mean CV accuracy; ties break toward the earlier cell, i.e.
// smaller first-axis value, then smaller second-axis value.
GridResult grid_search(const FeatureSet& fs, const ClassifierSpec& base,
                       const GridSpec& grid, const FoldPlan& plan, int jobs = 1);

struct LearningCurveRow {
    double fraction = 0.0;
    double train_mean = 0.0, train_std = 0.0;
    double val_mean = 0.0, val_std = 0.0;
    int folds_used = 0;
    bool skipped = false;
    std::string warning;
};

// Per fraction of the training folds: mean and std of train/validation
// accuracy across folds. Fractions whose subset loses a class are skipped
// with a warning.
std::vector<LearningCurveRow> learning_curve(const FeatureSet& fs, const ClassifierSpec& spec,
                                             const std::vector<double>& fractions,
                                             const FoldPlan& plan);

} // namespace cgd
