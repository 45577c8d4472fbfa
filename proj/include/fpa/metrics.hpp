#pragma once

// Evaluation machinery: Jacobi eigen-solver for small symmetric matrices,
// singular values via the normal-equations route, Gaussian feature
// statistics, and the random-feature Frechet distance (RFFD) used as the
// desk-scale stand-in for FID.

#include <cstdint>
#include <functional>
#include <vector>

#include "fpa/tensor.hpp"

namespace fpa {

struct EigenResult {
    std::vector<double> values;   // descending
    std::vector<double> vectors;  // column j of the n x n matrix is the eigenvector of values[j]
};

// Cyclic Jacobi rotations; intended for n <= 128.
EigenResult symmetric_eigen(const std::vector<double>& m, int n);

// Singular values of an arbitrary rows x cols matrix, descending, computed
// as sqrt of the eigenvalues of the Gram matrix.
std::vector<double> singular_values(const std::vector<double>& m, int rows, int cols);

struct GaussianStats {
    std::vector<double> mean;
    std::vector<double> cov;  // dim x dim, row-major
    int dim = 0;
    int count = 0;
};

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features);

// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)); symmetric PSD handling
// via ridge 1e-6 and eigenvalue clamping at zero.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Fixed random-weight conv embedder (never trained): 3 stride-2 conv layers
// with leaky-relu, global average pool, 64-dim features. Deterministic per seed.
class FeatureExtractor {
public:
    static constexpr int kFeatureDim = 64;

    FeatureExtractor(int channels, uint64_t seed);

    std::vector<double> extract(const Tensor<float>& image) const;

private:
    Tensor<float> w1_, b1_, w2_, b2_, w3_, b3_;
};

// RFFD between a set of real images and images drawn from a sampler.
double rffd(const std::vector<Tensor<float>>& real,
            const std::function<Tensor<float>(int)>& fake_sampler, int n, uint64_t feature_seed);

}  // namespace fpa
