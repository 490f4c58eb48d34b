#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cgdetect/tensor.hpp"

namespace cgd {

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    int momentum_switch_iter = 250;
    std::uint64_t seed = 0;
    bool pca_reduce = true; // pre-reduce to pca_dims when input is wider
    int pca_dims = 50;
};

struct PerplexityCalibration {
    double beta = 1.0; // precision 1 / (2 sigma^2)
    double achieved = 0.0;
    bool converged = false;
};

// Binary search for the bandwidth whose conditional distribution over the
// given squared distances hits the target perplexity within 1e-3
// (at most 100 iterations). Non-convergence returns the best iterate.
PerplexityCalibration perplexity_calibration(std::span<const double> sq_distances,
                                             double target);

struct TsneResult {
    Matrix embedding;            // n x 2
    std::vector<double> kl_tail; // KL divergence over the final 100 iterations
    double kl_final = 0.0;
};

// Exact O(n^2) embedding: input-order canonicalization, optional PCA
// pre-reduction, perplexity-calibrated symmetrized affinities, then
// gradient descent with early exaggeration, momentum schedule and gains.
TsneResult tsne_embed(const Matrix& points, const TsneConfig& cfg);

// Symmetrized affinity matrix (zero diagonal, sums to 1); exposed for tests.
std::vector<double> tsne_affinities(const Matrix& points, double perplexity);

} // namespace cgd
