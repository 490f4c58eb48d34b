#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cgdetect/tensor.hpp"
#include "cgdetect/weights_io.hpp"

namespace cgd {

// Numerically stable softmax (max subtraction); components in (0,1), sum 1.
std::vector<float> softmax(std::span<const float> z);

// Categorical cross entropy -log q[true_class]; q clamped at 1e-12.
double cross_entropy(int true_class, std::span<const double> q);

// Per-dimension standardization fitted on training data only. stddev is
// floored at 1e-8 so constant dimensions pass through as zeros.
struct Standardizer {
    bool enabled = false;
    std::vector<float> mean, stddev;

    static Standardizer fit(const Matrix& x);
    static Standardizer disabled(std::int64_t dim);
    Matrix apply(const Matrix& x) const;
};

struct AdamConfig {
    float lr = 0.001f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
    float decay = 0.0f;
    int epochs = 200;
    int batch_size = 32;
    std::uint64_t seed = 0;
};

// Two-way softmax layer trained with minibatch Adam on mean cross entropy.
struct SoftmaxHead {
    Matrix weights;          // d x 2, Glorot-uniform initialized
    std::vector<float> bias; // 2, zero initialized
    AdamConfig adam;
    std::vector<double> epoch_loss; // monitored mean train loss per epoch

    Matrix predict_proba(const Matrix& x) const; // n x 2, rows sum to 1
};

SoftmaxHead train_softmax_head(const Matrix& x, const std::vector<int>& labels,
                               const AdamConfig& cfg);

// Mean cross-entropy loss and its gradient at the given parameters, all in
// double precision. Shared by the trainer and the finite-difference checks.
double softmax_head_loss_grad(const Matrix& x, const std::vector<int>& labels,
                              std::span<const std::int64_t> rows,
                              const std::vector<double>& weights, // d*2 row-major
                              const std::vector<double>& bias,    // 2
                              std::vector<double>* grad_w, std::vector<double>* grad_b);

struct KnnConfig {
    int k = 1;
};

struct KnnModel {
    KnnConfig cfg;
    Matrix train_features;
    std::vector<int> train_labels;
};

// Majority label of the k nearest training rows by euclidean distance;
// equal distances break toward the lowest training-row index. Scores are
// distance margins: d(nearest PG) - d(nearest CG).
std::vector<int> knn_predict(const KnnModel& model, const Matrix& queries,
                             std::vector<float>* scores = nullptr);

struct SvmConfig {
    enum class Kernel { Linear, Rbf };
    Kernel kernel = Kernel::Rbf;
    double C = 10.0;
    double gamma = 0.001; // rbf only
    double tolerance = 1e-3;
    int max_passes = 10;      // consecutive no-change sweeps before stopping
    std::uint64_t seed = 0;
};

// Soft-margin SVM trained with sequential minimal optimization on the dual.
// Decision value f(x) = sum_i alpha_i y_i k(x_i, x) + b.
struct SvmModel {
    SvmConfig cfg;
    Matrix support_vectors;        // m x d
    std::vector<double> dual_coef; // alpha_i * y_i, length m
    double intercept = 0.0;
    bool converged = true;
    std::string warning;
    double dual_objective = 0.0;     // W(alpha) at termination
    double kkt_max_violation = 0.0;  // max KKT residual at termination
    double alpha_y_balance = 0.0;    // sum alpha_i y_i (0 at convergence)

    double decision_value(std::span<const float> x) const;
};

SvmModel train_svm(const Matrix& x, const std::vector<int>& labels, const SvmConfig& cfg);

struct GbtConfig {
    float learning_rate = 0.1f;
    int max_depth = 3;
    int n_estimators = 100;
    float lambda = 1.0f;           // L2 on leaf weights
    float min_child_weight = 1.0f; // minimum hessian sum per child
};

// Depth-limited regression tree over log-odds. Leaf nodes have left < 0.
struct GbtTree {
    struct Node {
        int feature = -1;
        float threshold = 0.0f;
        int left = -1, right = -1;
        float value = 0.0f;
    };
    std::vector<Node> nodes;

    float predict(std::span<const float> x) const;
    int depth() const;
};

struct GbtModel {
    GbtConfig cfg;
    float base_score = 0.0f; // logit of the class prior
    std::vector<GbtTree> trees;
    std::vector<double> train_loss; // mean logistic loss after each tree
    std::string warning;

    // probability of class 1: sigmoid(base_score + lr * sum_k tree_k(x))
    double predict_proba(std::span<const float> x) const;
};

// Second-order (gradient + hessian) logistic boosting with exact greedy
// splits over sorted unique feature values and L2-regularized leaf weights.
GbtModel train_gbt(const Matrix& x, const std::vector<int>& labels, const GbtConfig& cfg);

// ---------------------------------------------------------------------------

enum class ClassifierKind { Softmax, Knn, SvmLinear, SvmRbf, Gbt, Oracle };

const char* classifier_kind_name(ClassifierKind kind);
ClassifierKind parse_classifier_kind(const std::string& name);

// Everything needed to train one classifier; hyperparameters for the kinds
// not selected are ignored.
struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::SvmRbf;
    AdamConfig adam;
    KnnConfig knn;
    SvmConfig svm;
    GbtConfig gbt;
    bool standardize = true;
    std::uint64_t seed = 0;
};

struct Prediction {
    std::vector<int> labels;
    std::vector<float> scores; // real-valued decision values usable for ROC
};

// A trained top classifier plus the standardization statistics it was
// fitted with. Immutable; predict is reentrant.
class TrainedClassifier {
public:
    static TrainedClassifier train(const FeatureSet& fs, const ClassifierSpec& spec);

    Prediction predict(const Matrix& features) const;

    ClassifierKind kind() const { return kind_; }
    std::int64_t feature_dim() const { return feature_dim_; }
    const std::string& warning() const { return warning_; }
    const Standardizer& standardizer() const { return standardizer_; }

    const SoftmaxHead* softmax_head() const { return softmax_.get(); }
    const SvmModel* svm() const { return svm_.get(); }
    const GbtModel* gbt() const { return gbt_.get(); }
    const KnnModel* knn() const { return knn_.get(); }

    // Persistence reuses the CGF1 container with classifier-specific tensor
    // names and a metadata block holding hyperparameters and the
    // standardization statistics.
    void save(const std::string& path,
              const std::map<std::string, std::string>& extra_metadata = {}) const;
    static TrainedClassifier load(const std::string& path);

private:
    ClassifierKind kind_ = ClassifierKind::SvmRbf;
    std::int64_t feature_dim_ = 0;
    Standardizer standardizer_;
    std::string warning_;
    std::shared_ptr<const SoftmaxHead> softmax_;
    std::shared_ptr<const KnnModel> knn_;
    std::shared_ptr<const SvmModel> svm_;
    std::shared_ptr<const GbtModel> gbt_;
};

// Both classes present and n >= 2; throws a degenerate-input error otherwise.
void require_both_classes(const std::vector<int>& labels);

} // namespace cgd
