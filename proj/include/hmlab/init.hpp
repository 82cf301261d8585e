#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "hmlab/tensor.hpp"

namespace hmlab::init {

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// One RNG stream per concern, derived from the master seed by label, so
// changing how one consumer draws does not perturb the others.
inline std::mt19937_64 labeled_rng(uint64_t seed, const std::string& label) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                      static_cast<uint32_t>(fnv1a(label)),
                      static_cast<uint32_t>(fnv1a(label) >> 32)};
    return std::mt19937_64(seq);
}

inline Tensor<double> gaussian(int64_t n, int64_t m, std::mt19937_64& rng) {
    Tensor<double> t = Tensor<double>::zeros({n, m});
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : t.data) v = dist(rng);
    return t;
}

// Thin-Q Householder QR of a tall matrix [n x m], n >= m. Columns are
// sign-corrected by diag(R) so the result is unique for a given input.
inline Tensor<double> qr_thin_q(Tensor<double> a) {
    const int64_t n = a.shape[0], m = a.shape[1];
    require(n >= m, "qr_thin_q expects tall input, got " + shape_str(a.shape));
    std::vector<std::vector<double>> vs(m);
    std::vector<double> rdiag(m);
    for (int64_t j = 0; j < m; ++j) {
        std::vector<double> v(n - j);
        double norm = 0;
        for (int64_t i = j; i < n; ++i) {
            v[i - j] = a.at(i, j);
            norm += v[i - j] * v[i - j];
        }
        norm = std::sqrt(norm);
        const double alpha = v[0] >= 0 ? -norm : norm;
        rdiag[j] = alpha;
        v[0] -= alpha;
        double vnorm2 = 0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 > 0) {
            for (int64_t c = j; c < m; ++c) {
                double dot = 0;
                for (int64_t i = j; i < n; ++i) dot += v[i - j] * a.at(i, c);
                const double s = 2.0 * dot / vnorm2;
                for (int64_t i = j; i < n; ++i) a.at(i, c) -= s * v[i - j];
            }
        }
        vs[j] = std::move(v);
    }
    // Q = H_0 ... H_{m-1} applied to the first m columns of I
    Tensor<double> q = Tensor<double>::zeros({n, m});
    for (int64_t j = 0; j < m; ++j) q.at(j, j) = 1.0;
    for (int64_t j = m - 1; j >= 0; --j) {
        const auto& v = vs[j];
        double vnorm2 = 0;
        for (double x : v) vnorm2 += x * x;
        if (vnorm2 == 0) continue;
        for (int64_t c = 0; c < m; ++c) {
            double dot = 0;
            for (int64_t i = j; i < n; ++i) dot += v[i - j] * q.at(i, c);
            const double s = 2.0 * dot / vnorm2;
            for (int64_t i = j; i < n; ++i) q.at(i, c) -= s * v[i - j];
        }
    }
    for (int64_t j = 0; j < m; ++j) {
        const double sign = rdiag[j] >= 0 ? 1.0 : -1.0;
        for (int64_t i = 0; i < n; ++i) q.at(i, j) *= sign;
    }
    return q;
}

// Semi-orthogonal [n x m] from a standard-normal draw: Q^T Q = I when tall,
// Q Q^T = I when wide.
inline Tensor<double> orthogonal(int64_t n, int64_t m, std::mt19937_64& rng) {
    if (n >= m) return qr_thin_q(gaussian(n, m, rng));
    Tensor<double> qt = qr_thin_q(gaussian(m, n, rng));
    Tensor<double> q = Tensor<double>::zeros({n, m});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < m; ++j) q.at(i, j) = qt.at(j, i);
    return q;
}

inline double glorot_sigma(int64_t fanin, int64_t fanout) {
    return std::sqrt(6.0 / static_cast<double>(fanin + fanout));
}

inline std::vector<double> glorot_uniform(int64_t count, int64_t fanin, int64_t fanout,
                                          std::mt19937_64& rng) {
    const double sigma = glorot_sigma(fanin, fanout);
    std::uniform_real_distribution<double> dist(-sigma, sigma);
    std::vector<double> out(static_cast<size_t>(count));
    for (auto& v : out) v = dist(rng);
    return out;
}

}  // namespace hmlab::init
