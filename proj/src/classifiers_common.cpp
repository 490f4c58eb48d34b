#include "cgdetect/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace cgd {

std::vector<float> softmax(std::span<const float> z) {
    std::vector<float> out(z.size());
    if (z.empty()) return out;
    const float zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (size_t i = 0; i < z.size(); ++i) {
        const double e = std::exp(static_cast<double>(z[i]) - zmax);
        out[i] = static_cast<float>(e);
        sum += e;
    }
    for (auto& v : out) v = static_cast<float>(v / sum);
    return out;
}

double cross_entropy(int true_class, std::span<const double> q) {
    double p = q[static_cast<size_t>(true_class)];
    if (p < 1e-12) p = 1e-12;
    return -std::log(p);
}

Standardizer Standardizer::fit(const Matrix& x) {
    Standardizer s;
    s.enabled = true;
    const std::int64_t d = x.cols;
    s.mean.assign(static_cast<size_t>(d), 0.0f);
    s.stddev.assign(static_cast<size_t>(d), 1.0f);
    if (x.rows == 0) return s;

    std::vector<double> mean(static_cast<size_t>(d), 0.0);
    for (std::int64_t i = 0; i < x.rows; ++i) {
        const float* row = x.data.data() + static_cast<size_t>(i) * d;
        for (std::int64_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (std::int64_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(x.rows);

    std::vector<double> var(static_cast<size_t>(d), 0.0);
    for (std::int64_t i = 0; i < x.rows; ++i) {
        const float* row = x.data.data() + static_cast<size_t>(i) * d;
        for (std::int64_t j = 0; j < d; ++j) {
            const double dv = row[j] - mean[j];
            var[j] += dv * dv;
        }
    }
    for (std::int64_t j = 0; j < d; ++j) {
        s.mean[j] = static_cast<float>(mean[j]);
        const double sd = std::sqrt(var[j] / static_cast<double>(x.rows));
        s.stddev[j] = static_cast<float>(std::max(sd, 1e-8));
    }
    return s;
}

Standardizer Standardizer::disabled(std::int64_t dim) {
    Standardizer s;
    s.enabled = false;
    s.mean.assign(static_cast<size_t>(dim), 0.0f);
    s.stddev.assign(static_cast<size_t>(dim), 1.0f);
    return s;
}

Matrix Standardizer::apply(const Matrix& x) const {
    if (!enabled) return x;
    if (x.cols != static_cast<std::int64_t>(mean.size())) {
        throw ShapeError("standardizer fitted on " + std::to_string(mean.size()) +
                         " dims, input has " + std::to_string(x.cols));
    }
    Matrix out(x.rows, x.cols);
    for (std::int64_t i = 0; i < x.rows; ++i) {
        const float* src = x.data.data() + static_cast<size_t>(i) * x.cols;
        float* dst = out.data.data() + static_cast<size_t>(i) * x.cols;
        for (std::int64_t j = 0; j < x.cols; ++j) {
            dst[j] = (src[j] - mean[j]) / stddev[j];
        }
    }
    return out;
}

void require_both_classes(const std::vector<int>& labels) {
    bool has0 = false, has1 = false;
    for (int l : labels) {
        if (l == 0) has0 = true;
        else if (l == 1) has1 = true;
    }
    if (labels.size() < 2 || !has0 || !has1) {
        throw Error(ErrorKind::Data,
                    "degenerate input: training data must contain both classes "
                    "(got " + std::to_string(labels.size()) + " samples)");
    }
}

const char* classifier_kind_name(ClassifierKind kind) {
    switch (kind) {
    case ClassifierKind::Softmax: return "softmax";
    case ClassifierKind::Knn: return "knn";
    case ClassifierKind::SvmLinear: return "svm-linear";
    case ClassifierKind::SvmRbf: return "svm-rbf";
    case ClassifierKind::Gbt: return "gbt";
    case ClassifierKind::Oracle: return "oracle";
    }
    return "?";
}

ClassifierKind parse_classifier_kind(const std::string& name) {
    if (name == "softmax") return ClassifierKind::Softmax;
    if (name == "knn") return ClassifierKind::Knn;
    if (name == "svm-linear") return ClassifierKind::SvmLinear;
    if (name == "svm-rbf") return ClassifierKind::SvmRbf;
    if (name == "gbt") return ClassifierKind::Gbt;
    if (name == "oracle") return ClassifierKind::Oracle;
    throw ConfigError("unknown classifier '" + name +
                      "' (expected softmax, knn, svm-linear, svm-rbf or gbt)");
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::map<std::string, std::string>& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("model file missing metadata key '" + key + "'");
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw FormatError("model metadata '" + key + "' is not a number: " + it->second);
    }
}

long parse_long(const std::map<std::string, std::string>& meta, const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("model file missing metadata key '" + key + "'");
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw FormatError("model metadata '" + key + "' is not an integer: " + it->second);
    }
}

Matrix matrix_from_entry(const TensorEntry& e, const std::string& name) {
    if (e.dtype != TensorEntry::Dtype::F32 || e.shape.size() != 2) {
        throw FormatError("model entry '" + name + "' must be a 2-D f32 tensor");
    }
    Matrix m(e.shape[0], e.shape[1]);
    m.data = e.f32;
    return m;
}

} // namespace

TrainedClassifier TrainedClassifier::train(const FeatureSet& fs, const ClassifierSpec& spec) {
    fs.validate();
    if (spec.kind == ClassifierKind::Oracle) {
        throw ConfigError("the oracle classifier is an evaluation hook and cannot be trained");
    }
    require_both_classes(fs.labels);

    TrainedClassifier tc;
    tc.kind_ = spec.kind;
    tc.feature_dim_ = fs.features.cols;
    tc.standardizer_ = spec.standardize ? Standardizer::fit(fs.features)
                                        : Standardizer::disabled(fs.features.cols);
    const Matrix x = tc.standardizer_.apply(fs.features);

    switch (spec.kind) {
    case ClassifierKind::Softmax: {
        AdamConfig cfg = spec.adam;
        cfg.seed = spec.seed;
        tc.softmax_ = std::make_shared<SoftmaxHead>(train_softmax_head(x, fs.labels, cfg));
        break;
    }
    case ClassifierKind::Knn: {
        if (spec.knn.k < 1) throw ConfigError("knn: k must be >= 1");
        if (spec.knn.k > static_cast<int>(fs.labels.size())) {
            throw ConfigError("knn: k=" + std::to_string(spec.knn.k) + " exceeds training size " +
                              std::to_string(fs.labels.size()));
        }
        auto m = std::make_shared<KnnModel>();
        m->cfg = spec.knn;
        m->train_features = x;
        m->train_labels = fs.labels;
        tc.knn_ = std::move(m);
        break;
    }
    case ClassifierKind::SvmLinear:
    case ClassifierKind::SvmRbf: {
        SvmConfig cfg = spec.svm;
        cfg.kernel = spec.kind == ClassifierKind::SvmLinear ? SvmConfig::Kernel::Linear
                                                            : SvmConfig::Kernel::Rbf;
        cfg.seed = spec.seed;
        auto m = std::make_shared<SvmModel>(train_svm(x, fs.labels, cfg));
        tc.warning_ = m->warning;
        tc.svm_ = std::move(m);
        break;
    }
    case ClassifierKind::Gbt: {
        auto m = std::make_shared<GbtModel>(train_gbt(x, fs.labels, spec.gbt));
        tc.warning_ = m->warning;
        tc.gbt_ = std::move(m);
        break;
    }
    case ClassifierKind::Oracle:
        break; // unreachable
    }
    return tc;
}

Prediction TrainedClassifier::predict(const Matrix& features) const {
    if (features.cols != feature_dim_) {
        throw ShapeError("predict: feature dim " + std::to_string(features.cols) +
                         " does not match training dim " + std::to_string(feature_dim_));
    }
    const Matrix x = standardizer_.apply(features);
    Prediction pred;
    pred.labels.resize(static_cast<size_t>(x.rows));
    pred.scores.resize(static_cast<size_t>(x.rows));

    switch (kind_) {
    case ClassifierKind::Softmax: {
        const Matrix proba = softmax_->predict_proba(x);
        for (std::int64_t i = 0; i < x.rows; ++i) {
            const float p1 = proba.at(i, 1);
            pred.scores[i] = p1;
            pred.labels[i] = p1 >= 0.5f ? 1 : 0;
        }
        break;
    }
    case ClassifierKind::Knn: {
        std::vector<float> scores;
        pred.labels = knn_predict(*knn_, x, &scores);
        pred.scores = std::move(scores);
        break;
    }
    case ClassifierKind::SvmLinear:
    case ClassifierKind::SvmRbf: {
        for (std::int64_t i = 0; i < x.rows; ++i) {
            const double f = svm_->decision_value(x.row(i));
            pred.scores[i] = static_cast<float>(f);
            pred.labels[i] = f >= 0.0 ? 1 : 0;
        }
        break;
    }
    case ClassifierKind::Gbt: {
        for (std::int64_t i = 0; i < x.rows; ++i) {
            const double p1 = gbt_->predict_proba(x.row(i));
            pred.scores[i] = static_cast<float>(p1);
            pred.labels[i] = p1 >= 0.5 ? 1 : 0;
        }
        break;
    }
    case ClassifierKind::Oracle:
        throw ConfigError("oracle classifier cannot predict");
    }
    return pred;
}

void TrainedClassifier::save(const std::string& path,
                             const std::map<std::string, std::string>& extra_metadata) const {
    WeightStore store;
    store.metadata = extra_metadata;
    store.metadata["container"] = "cgdetect-classifier";
    store.metadata["classifier"] = classifier_kind_name(kind_);
    store.metadata["feature_dim"] = std::to_string(feature_dim_);
    store.metadata["standardize"] = standardizer_.enabled ? "true" : "false";
    store.put_vector("standardize.mean", standardizer_.mean);
    store.put_vector("standardize.std", standardizer_.stddev);

    switch (kind_) {
    case ClassifierKind::Softmax: {
        const SoftmaxHead& h = *softmax_;
        store.metadata["adam.lr"] = fmt_double(h.adam.lr);
        store.metadata["adam.beta1"] = fmt_double(h.adam.beta1);
        store.metadata["adam.beta2"] = fmt_double(h.adam.beta2);
        store.metadata["adam.epsilon"] = fmt_double(h.adam.epsilon);
        store.metadata["adam.decay"] = fmt_double(h.adam.decay);
        store.metadata["adam.epochs"] = std::to_string(h.adam.epochs);
        store.metadata["adam.batch_size"] = std::to_string(h.adam.batch_size);
        store.metadata["adam.seed"] = std::to_string(h.adam.seed);
        store.put_f32("softmax.weights", {h.weights.rows, h.weights.cols}, h.weights.data);
        store.put_vector("softmax.bias", h.bias);
        break;
    }
    case ClassifierKind::Knn: {
        store.metadata["knn.k"] = std::to_string(knn_->cfg.k);
        store.put_f32("knn.features", {knn_->train_features.rows, knn_->train_features.cols},
                      knn_->train_features.data);
        std::vector<float> labels(knn_->train_labels.begin(), knn_->train_labels.end());
        store.put_vector("knn.labels", labels);
        break;
    }
    case ClassifierKind::SvmLinear:
    case ClassifierKind::SvmRbf: {
        const SvmModel& m = *svm_;
        store.metadata["svm.kernel"] =
            m.cfg.kernel == SvmConfig::Kernel::Linear ? "linear" : "rbf";
        store.metadata["svm.C"] = fmt_double(m.cfg.C);
        store.metadata["svm.gamma"] = fmt_double(m.cfg.gamma);
        store.metadata["svm.tolerance"] = fmt_double(m.cfg.tolerance);
        store.metadata["svm.intercept"] = fmt_double(m.intercept);
        store.metadata["svm.converged"] = m.converged ? "true" : "false";
        store.put_f32("svm.support_vectors",
                      {m.support_vectors.rows, m.support_vectors.cols}, m.support_vectors.data);
        // dual coefficients are doubles; stored as a raw LE f64 blob so the
        // reloaded model reproduces decision values bit-for-bit
        std::vector<std::uint8_t> blob(m.dual_coef.size() * 8);
        std::memcpy(blob.data(), m.dual_coef.data(), blob.size());
        store.put_blob("svm.dual_coef_f64", std::move(blob));
        break;
    }
    case ClassifierKind::Gbt: {
        const GbtModel& m = *gbt_;
        store.metadata["gbt.learning_rate"] = fmt_double(m.cfg.learning_rate);
        store.metadata["gbt.max_depth"] = std::to_string(m.cfg.max_depth);
        store.metadata["gbt.n_estimators"] = std::to_string(m.cfg.n_estimators);
        store.metadata["gbt.lambda"] = fmt_double(m.cfg.lambda);
        store.metadata["gbt.min_child_weight"] = fmt_double(m.cfg.min_child_weight);
        store.metadata["gbt.base_score"] = fmt_double(m.base_score);
        store.metadata["gbt.n_trees"] = std::to_string(m.trees.size());
        for (size_t t = 0; t < m.trees.size(); ++t) {
            const auto& nodes = m.trees[t].nodes;
            std::vector<float> flat;
            flat.reserve(nodes.size() * 5);
            for (const auto& nd : nodes) {
                flat.push_back(static_cast<float>(nd.feature));
                flat.push_back(nd.threshold);
                flat.push_back(static_cast<float>(nd.left));
                flat.push_back(static_cast<float>(nd.right));
                flat.push_back(nd.value);
            }
            char name[64];
            std::snprintf(name, sizeof name, "gbt.tree%04zu.nodes", t);
            store.put_f32(name, {static_cast<std::int64_t>(nodes.size()), 5}, std::move(flat));
        }
        break;
    }
    case ClassifierKind::Oracle:
        throw ConfigError("oracle classifier cannot be persisted");
    }
    save_weights(store, path);
}

TrainedClassifier TrainedClassifier::load(const std::string& path) {
    const WeightStore store = load_weights(path);
    auto kit = store.metadata.find("classifier");
    if (kit == store.metadata.end()) {
        throw FormatError("'" + path + "' is not a classifier container (no 'classifier' key)");
    }

    TrainedClassifier tc;
    tc.kind_ = parse_classifier_kind(kit->second);
    tc.feature_dim_ = parse_long(store.metadata, "feature_dim");
    tc.standardizer_.enabled = store.metadata.at("standardize") == "true";
    tc.standardizer_.mean = store.vector1d("standardize.mean");
    tc.standardizer_.stddev = store.vector1d("standardize.std");

    switch (tc.kind_) {
    case ClassifierKind::Softmax: {
        auto h = std::make_shared<SoftmaxHead>();
        h->adam.lr = static_cast<float>(parse_double(store.metadata, "adam.lr"));
        h->adam.epochs = static_cast<int>(parse_long(store.metadata, "adam.epochs"));
        h->adam.batch_size = static_cast<int>(parse_long(store.metadata, "adam.batch_size"));
        h->weights = matrix_from_entry(store.entry("softmax.weights"), "softmax.weights");
        h->bias = store.vector1d("softmax.bias");
        tc.softmax_ = std::move(h);
        break;
    }
    case ClassifierKind::Knn: {
        auto m = std::make_shared<KnnModel>();
        m->cfg.k = static_cast<int>(parse_long(store.metadata, "knn.k"));
        m->train_features = matrix_from_entry(store.entry("knn.features"), "knn.features");
        for (float v : store.vector1d("knn.labels")) m->train_labels.push_back(static_cast<int>(v));
        tc.knn_ = std::move(m);
        break;
    }
    case ClassifierKind::SvmLinear:
    case ClassifierKind::SvmRbf: {
        auto m = std::make_shared<SvmModel>();
        m->cfg.kernel = store.metadata.at("svm.kernel") == "linear" ? SvmConfig::Kernel::Linear
                                                                    : SvmConfig::Kernel::Rbf;
        m->cfg.C = parse_double(store.metadata, "svm.C");
        m->cfg.gamma = parse_double(store.metadata, "svm.gamma");
        m->cfg.tolerance = parse_double(store.metadata, "svm.tolerance");
        m->intercept = parse_double(store.metadata, "svm.intercept");
        m->converged = store.metadata.at("svm.converged") == "true";
        m->support_vectors =
            matrix_from_entry(store.entry("svm.support_vectors"), "svm.support_vectors");
        const TensorEntry& ce = store.entry("svm.dual_coef_f64");
        if (ce.dtype != TensorEntry::Dtype::U8 || ce.bytes.size() % 8 != 0 ||
            static_cast<std::int64_t>(ce.bytes.size() / 8) != m->support_vectors.rows) {
            throw FormatError("svm dual coefficient blob malformed");
        }
        m->dual_coef.resize(ce.bytes.size() / 8);
        std::memcpy(m->dual_coef.data(), ce.bytes.data(), ce.bytes.size());
        tc.svm_ = std::move(m);
        break;
    }
    case ClassifierKind::Gbt: {
        auto m = std::make_shared<GbtModel>();
        m->cfg.learning_rate = static_cast<float>(parse_double(store.metadata, "gbt.learning_rate"));
        m->cfg.max_depth = static_cast<int>(parse_long(store.metadata, "gbt.max_depth"));
        m->cfg.n_estimators = static_cast<int>(parse_long(store.metadata, "gbt.n_estimators"));
        m->cfg.lambda = static_cast<float>(parse_double(store.metadata, "gbt.lambda"));
        m->base_score = static_cast<float>(parse_double(store.metadata, "gbt.base_score"));
        const long n_trees = parse_long(store.metadata, "gbt.n_trees");
        for (long t = 0; t < n_trees; ++t) {
            char name[64];
            std::snprintf(name, sizeof name, "gbt.tree%04ld.nodes", t);
            const TensorEntry& e = store.entry(name);
            if (e.shape.size() != 2 || e.shape[1] != 5) {
                throw FormatError(std::string("malformed tree tensor '") + name + "'");
            }
            GbtTree tree;
            for (std::int64_t r = 0; r < e.shape[0]; ++r) {
                const float* row = e.f32.data() + static_cast<size_t>(r) * 5;
                GbtTree::Node nd;
                nd.feature = static_cast<int>(row[0]);
                nd.threshold = row[1];
                nd.left = static_cast<int>(row[2]);
                nd.right = static_cast<int>(row[3]);
                nd.value = row[4];
                tree.nodes.push_back(nd);
            }
            m->trees.push_back(std::move(tree));
        }
        tc.gbt_ = std::move(m);
        break;
    }
    case ClassifierKind::Oracle:
        throw FormatError("oracle classifier cannot be loaded");
    }
    return tc;
}

} // namespace cgd
