#include "fpa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fpa {

EigenResult symmetric_eigen(const std::vector<double>& m, int n) {
    if (n < 1 || m.size() != static_cast<size_t>(n) * n)
        throw std::invalid_argument("symmetric_eigen: bad matrix size");
    if (n > 128) throw std::invalid_argument("symmetric_eigen: n > 128 unsupported");
    std::vector<double> a = m;
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

    auto off = [&]() {
        double s = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) s += a[static_cast<size_t>(p) * n + q] * a[static_cast<size_t>(p) * n + q];
        return s;
    };

    for (int sweep = 0; sweep < 100 && off() > 1e-24; ++sweep) {
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = a[static_cast<size_t>(p) * n + q];
                if (std::fabs(apq) < 1e-300) continue;
                double app = a[static_cast<size_t>(p) * n + p];
                double aqq = a[static_cast<size_t>(q) * n + q];
                double theta = (aqq - app) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = a[static_cast<size_t>(i) * n + p];
                    double aiq = a[static_cast<size_t>(i) * n + q];
                    a[static_cast<size_t>(i) * n + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * n + q] = s * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    double apj = a[static_cast<size_t>(p) * n + j];
                    double aqj = a[static_cast<size_t>(q) * n + j];
                    a[static_cast<size_t>(p) * n + j] = c * apj - s * aqj;
                    a[static_cast<size_t>(q) * n + j] = s * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = v[static_cast<size_t>(i) * n + p];
                    double viq = v[static_cast<size_t>(i) * n + q];
                    v[static_cast<size_t>(i) * n + p] = c * vip - s * viq;
                    v[static_cast<size_t>(i) * n + q] = s * vip + c * viq;
                }
            }
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return a[static_cast<size_t>(x) * n + x] > a[static_cast<size_t>(y) * n + y];
    });
    EigenResult res;
    res.values.resize(n);
    res.vectors.assign(static_cast<size_t>(n) * n, 0.0);
    for (int j = 0; j < n; ++j) {
        res.values[j] = a[static_cast<size_t>(order[j]) * n + order[j]];
        for (int i = 0; i < n; ++i)
            res.vectors[static_cast<size_t>(i) * n + j] = v[static_cast<size_t>(i) * n + order[j]];
    }
    return res;
}

std::vector<double> singular_values(const std::vector<double>& m, int rows, int cols) {
    if (rows < 1 || cols < 1 || m.size() != static_cast<size_t>(rows) * cols)
        throw std::invalid_argument("singular_values: bad matrix size");
    // Gram matrix over the smaller side
    int n = std::min(rows, cols);
    std::vector<double> g(static_cast<size_t>(n) * n, 0.0);
    if (cols <= rows) {
        for (int i = 0; i < cols; ++i)
            for (int j = i; j < cols; ++j) {
                double s = 0.0;
                for (int r = 0; r < rows; ++r) s += m[static_cast<size_t>(r) * cols + i] * m[static_cast<size_t>(r) * cols + j];
                g[static_cast<size_t>(i) * n + j] = g[static_cast<size_t>(j) * n + i] = s;
            }
    } else {
        for (int i = 0; i < rows; ++i)
            for (int j = i; j < rows; ++j) {
                double s = 0.0;
                for (int cidx = 0; cidx < cols; ++cidx)
                    s += m[static_cast<size_t>(i) * cols + cidx] * m[static_cast<size_t>(j) * cols + cidx];
                g[static_cast<size_t>(i) * n + j] = g[static_cast<size_t>(j) * n + i] = s;
            }
    }
    auto eig = symmetric_eigen(g, n);
    std::vector<double> sv(n);
    for (int i = 0; i < n; ++i) sv[i] = std::sqrt(std::max(0.0, eig.values[i]));
    return sv;
}

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& features) {
    if (features.empty()) throw std::invalid_argument("fit_gaussian: no samples");
    int d = static_cast<int>(features[0].size());
    GaussianStats st;
    st.dim = d;
    st.count = static_cast<int>(features.size());
    st.mean.assign(d, 0.0);
    st.cov.assign(static_cast<size_t>(d) * d, 0.0);
    for (const auto& f : features)
        for (int i = 0; i < d; ++i) st.mean[i] += f[i];
    for (auto& v : st.mean) v /= st.count;
    for (const auto& f : features)
        for (int i = 0; i < d; ++i) {
            double di = f[i] - st.mean[i];
            for (int j = i; j < d; ++j) st.cov[static_cast<size_t>(i) * d + j] += di * (f[j] - st.mean[j]);
        }
    double denom = std::max(1, st.count - 1);
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            double v = st.cov[static_cast<size_t>(i) * d + j] / denom;
            st.cov[static_cast<size_t>(i) * d + j] = st.cov[static_cast<size_t>(j) * d + i] = v;
        }
    return st;
}

namespace {

// B = V diag(sqrt(clamp(lambda))) V^T
std::vector<double> psd_sqrt(const std::vector<double>& m, int n) {
    auto eig = symmetric_eigen(m, n);
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        double s = std::sqrt(std::max(0.0, eig.values[k]));
        if (s == 0.0) continue;
        for (int i = 0; i < n; ++i) {
            double vik = eig.vectors[static_cast<size_t>(i) * n + k] * s;
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] += vik * eig.vectors[static_cast<size_t>(j) * n + k];
        }
    }
    return out;
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int n) {
    std::vector<double> c(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double av = a[static_cast<size_t>(i) * n + k];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) c[static_cast<size_t>(i) * n + j] += av * b[static_cast<size_t>(k) * n + j];
        }
    return c;
}

}  // namespace

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.dim != b.dim) throw std::invalid_argument("frechet_distance: dimension mismatch");
    int n = a.dim;
    double mean_term = 0.0;
    for (int i = 0; i < n; ++i) {
        double d = a.mean[i] - b.mean[i];
        mean_term += d * d;
    }
    std::vector<double> sa = a.cov, sb = b.cov;
    for (int i = 0; i < n; ++i) {
        sa[static_cast<size_t>(i) * n + i] += 1e-6;
        sb[static_cast<size_t>(i) * n + i] += 1e-6;
    }
    // Tr((Sa Sb)^(1/2)) = Tr((Sa^(1/2) Sb Sa^(1/2))^(1/2)), symmetric inner form
    auto ra = psd_sqrt(sa, n);
    auto inner = matmul_sq(matmul_sq(ra, sb, n), ra, n);
    // symmetrize the numerical residue before the second eigen pass
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = 0.5 * (inner[static_cast<size_t>(i) * n + j] + inner[static_cast<size_t>(j) * n + i]);
            inner[static_cast<size_t>(i) * n + j] = inner[static_cast<size_t>(j) * n + i] = v;
        }
    auto eig = symmetric_eigen(inner, n);
    double tr_sqrt = 0.0;
    for (double l : eig.values) tr_sqrt += std::sqrt(std::max(0.0, l));
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += sa[static_cast<size_t>(i) * n + i] + sb[static_cast<size_t>(i) * n + i];
    return std::max(0.0, mean_term + tr - 2.0 * tr_sqrt);
}

FeatureExtractor::FeatureExtractor(int channels, uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto gauss = [&rng](std::vector<int> shape, int fan_in) {
        std::normal_distribution<float> d(0.f, 1.f / std::sqrt(static_cast<float>(fan_in)));
        Tensor<float> t(std::move(shape));
        for (auto& v : t.mutable_data()) v = d(rng);
        return t;
    };
    w1_ = gauss({16, channels, 3, 3}, channels * 9);
    b1_ = Tensor<float>::zeros({16});
    w2_ = gauss({32, 16, 3, 3}, 16 * 9);
    b2_ = Tensor<float>::zeros({32});
    w3_ = gauss({kFeatureDim, 32, 3, 3}, 32 * 9);
    b3_ = Tensor<float>::zeros({kFeatureDim});
}

std::vector<double> FeatureExtractor::extract(const Tensor<float>& image) const {
    NoGradGuard ng;
    auto h1 = leaky_relu(conv2d(image, w1_, b1_, 2, 1), 0.2f);
    auto h2 = leaky_relu(conv2d(h1, w2_, b2_, 2, 1), 0.2f);
    auto h3 = leaky_relu(conv2d(h2, w3_, b3_, 2, 1), 0.2f);
    int c = h3.dim(0);
    size_t hw = static_cast<size_t>(h3.dim(1)) * h3.dim(2);
    std::vector<double> feat(c, 0.0);
    for (int i = 0; i < c; ++i) {
        double s = 0.0;
        for (size_t p = 0; p < hw; ++p) s += h3.data()[static_cast<size_t>(i) * hw + p];
        feat[i] = s / static_cast<double>(hw);
    }
    return feat;
}

double rffd(const std::vector<Tensor<float>>& real,
            const std::function<Tensor<float>(int)>& fake_sampler, int n, uint64_t feature_seed) {
    if (real.empty()) throw std::invalid_argument("rffd: no real images");
    FeatureExtractor fx(real[0].dim(0), feature_seed);
    std::vector<std::vector<double>> fr, ff;
    for (int i = 0; i < n; ++i) fr.push_back(fx.extract(real[static_cast<size_t>(i) % real.size()]));
    for (int i = 0; i < n; ++i) ff.push_back(fx.extract(fake_sampler(i)));
    return frechet_distance(fit_gaussian(fr), fit_gaussian(ff));
}

}  // namespace fpa
