#pragma once

#include "hmlab/tensor.hpp"

// Serial reference cells: per-row branch-based evaluation of the recurrence
// equations, forward only, no tape. The production cells are the vectorized
// masked forms in cells.hpp; these loops are kept independent of that path
// so tests and the kernel benchmark can compare against them.
namespace hmlab::ref {

template <typename Real>
struct StepOut {
    Tensor<Real> h, c, z;  // z empty when the layer produces none
};

namespace detail {

// pre[i, :] += scale * row_i(X) * M
template <typename Real>
inline void add_rowmat(const Tensor<Real>& X, const Tensor<Real>& M, int64_t i,
                       Real scale, std::vector<Real>& pre) {
    const int64_t k = X.shape[1], n = M.shape[1];
    if (scale == Real(0)) return;
    for (int64_t p = 0; p < k; ++p) {
        const Real a = scale * X.at(i, p);
        for (int64_t j = 0; j < n; ++j) pre[j] += a * M.data[p * n + j];
    }
}

template <typename Real>
inline Real sigm(Real x) { return Real(1) / (Real(1) + std::exp(-x)); }

template <typename Real>
inline Real hard_sigmoid(Real x, Real alpha) {
    Real y = alpha * x + Real(0.5);
    return y < Real(0) ? Real(0) : (y > Real(1) ? Real(1) : y);
}

template <typename Real>
inline Real round_z(Real y) { return y >= Real(0.5) ? Real(1) : Real(0); }

}  // namespace detail

template <typename Real>
StepOut<Real> lstm_step(const Tensor<Real>& x, const Tensor<Real>& h_prev,
                        const Tensor<Real>& c_prev, const Tensor<Real>& W,
                        const Tensor<Real>& U, const Tensor<Real>& b) {
    const int64_t B = x.shape[0], H = h_prev.shape[1];
    StepOut<Real> out;
    out.h = Tensor<Real>::zeros({B, H});
    out.c = Tensor<Real>::zeros({B, H});
    std::vector<Real> pre(static_cast<size_t>(4 * H));
    for (int64_t i = 0; i < B; ++i) {
        for (int64_t j = 0; j < 4 * H; ++j) pre[j] = b.data[j];
        detail::add_rowmat(x, W, i, Real(1), pre);
        detail::add_rowmat(h_prev, U, i, Real(1), pre);
        for (int64_t j = 0; j < H; ++j) {
            const Real ig = detail::sigm(pre[j]);
            const Real fg = detail::sigm(pre[H + j]);
            const Real u = std::tanh(pre[2 * H + j]);
            const Real og = detail::sigm(pre[3 * H + j]);
            const Real c = c_prev.at(i, j) * fg + u * ig;
            out.c.at(i, j) = c;
            out.h.at(i, j) = og * std::tanh(c);
        }
    }
    return out;
}

template <typename Real>
StepOut<Real> hmlstm_bottom_step(const Tensor<Real>& x, const Tensor<Real>& h_prev,
                                 const Tensor<Real>& c_prev, const Tensor<Real>& z_prev,
                                 const Tensor<Real>& h_above_prev, const Tensor<Real>& W,
                                 const Tensor<Real>& U, const Tensor<Real>* V,
                                 const Tensor<Real>& b, Real alpha) {
    const int64_t B = x.shape[0], H = h_prev.shape[1];
    StepOut<Real> out;
    out.h = Tensor<Real>::zeros({B, H});
    out.c = Tensor<Real>::zeros({B, H});
    out.z = Tensor<Real>::zeros({B, 1});
    std::vector<Real> pre(static_cast<size_t>(4 * H + 1));
    for (int64_t i = 0; i < B; ++i) {
        for (int64_t j = 0; j < 4 * H + 1; ++j) pre[j] = b.data[j];
        detail::add_rowmat(x, W, i, Real(1), pre);
        detail::add_rowmat(h_prev, U, i, Real(1), pre);
        if (V) detail::add_rowmat(h_above_prev, *V, i, z_prev.data[i], pre);
        out.z.data[i] = detail::round_z(detail::hard_sigmoid(pre[4 * H], alpha));
        const bool flush = z_prev.data[i] == Real(1);
        for (int64_t j = 0; j < H; ++j) {
            const Real ig = detail::sigm(pre[j]);
            const Real fg = detail::sigm(pre[H + j]);
            const Real u = std::tanh(pre[2 * H + j]);
            const Real og = detail::sigm(pre[3 * H + j]);
            const Real c = flush ? u * ig : c_prev.at(i, j) * fg + u * ig;
            out.c.at(i, j) = c;
            out.h.at(i, j) = og * std::tanh(c);
        }
    }
    return out;
}

template <typename Real>
StepOut<Real> hmlstm_middle_step(const Tensor<Real>& h_below, const Tensor<Real>& z_below,
                                 const Tensor<Real>& h_prev, const Tensor<Real>& c_prev,
                                 const Tensor<Real>& z_prev, const Tensor<Real>& h_above_prev,
                                 const Tensor<Real>& W, const Tensor<Real>& U,
                                 const Tensor<Real>* V, const Tensor<Real>& b, Real alpha) {
    const int64_t B = h_below.shape[0], H = h_prev.shape[1];
    StepOut<Real> out;
    out.h = Tensor<Real>::zeros({B, H});
    out.c = Tensor<Real>::zeros({B, H});
    out.z = Tensor<Real>::zeros({B, 1});
    std::vector<Real> pre(static_cast<size_t>(4 * H + 1));
    for (int64_t i = 0; i < B; ++i) {
        for (int64_t j = 0; j < 4 * H + 1; ++j) pre[j] = b.data[j];
        detail::add_rowmat(h_below, W, i, z_below.data[i], pre);
        detail::add_rowmat(h_prev, U, i, Real(1), pre);
        if (V) detail::add_rowmat(h_above_prev, *V, i, z_prev.data[i], pre);
        out.z.data[i] = detail::round_z(detail::hard_sigmoid(pre[4 * H], alpha));
        const bool flush = z_prev.data[i] == Real(1);
        const bool copy = !flush && z_below.data[i] == Real(0);
        for (int64_t j = 0; j < H; ++j) {
            if (copy) {
                out.c.at(i, j) = c_prev.at(i, j);
                out.h.at(i, j) = h_prev.at(i, j);
                continue;
            }
            const Real ig = detail::sigm(pre[j]);
            const Real fg = detail::sigm(pre[H + j]);
            const Real u = std::tanh(pre[2 * H + j]);
            const Real og = detail::sigm(pre[3 * H + j]);
            const Real c = flush ? u * ig : c_prev.at(i, j) * fg + u * ig;
            out.c.at(i, j) = c;
            out.h.at(i, j) = og * std::tanh(c);
        }
    }
    return out;
}

template <typename Real>
StepOut<Real> hmlstm_top_step(const Tensor<Real>& h_below, const Tensor<Real>& z_below,
                              const Tensor<Real>& h_prev, const Tensor<Real>& c_prev,
                              const Tensor<Real>& W, const Tensor<Real>& U,
                              const Tensor<Real>& b, bool copy_last) {
    const int64_t B = h_below.shape[0], H = h_prev.shape[1];
    StepOut<Real> out;
    out.h = Tensor<Real>::zeros({B, H});
    out.c = Tensor<Real>::zeros({B, H});
    std::vector<Real> pre(static_cast<size_t>(4 * H));
    for (int64_t i = 0; i < B; ++i) {
        for (int64_t j = 0; j < 4 * H; ++j) pre[j] = b.data[j];
        detail::add_rowmat(h_below, W, i, z_below.data[i], pre);
        detail::add_rowmat(h_prev, U, i, Real(1), pre);
        const bool update = z_below.data[i] == Real(1);
        for (int64_t j = 0; j < H; ++j) {
            const Real ig = detail::sigm(pre[j]);
            const Real fg = detail::sigm(pre[H + j]);
            const Real u = std::tanh(pre[2 * H + j]);
            const Real og = detail::sigm(pre[3 * H + j]);
            if (update) {
                const Real c = c_prev.at(i, j) * fg + u * ig;
                out.c.at(i, j) = c;
                out.h.at(i, j) = og * std::tanh(c);
            } else {
                out.c.at(i, j) = c_prev.at(i, j);
                out.h.at(i, j) =
                    copy_last ? h_prev.at(i, j) : og * std::tanh(c_prev.at(i, j));
            }
        }
    }
    return out;
}

template <typename Real>
StepOut<Real> hmrnn_bottom_step(const Tensor<Real>& x, const Tensor<Real>& h_prev,
                                const Tensor<Real>& z_prev, const Tensor<Real>& h_above_prev,
                                const Tensor<Real>& W, const Tensor<Real>& U,
                                const Tensor<Real>* V, Real alpha) {
    const int64_t B = x.shape[0], H = h_prev.shape[1];
    StepOut<Real> out;
    out.h = Tensor<Real>::zeros({B, H});
    out.z = Tensor<Real>::zeros({B, 1});
    std::vector<Real> pre(static_cast<size_t>(H + 1));
    for (int64_t i = 0; i < B; ++i) {
        std::fill(pre.begin(), pre.end(), Real(0));
        detail::add_rowmat(x, W, i, Real(1), pre);
        detail::add_rowmat(h_prev, U, i, Real(1) - z_prev.data[i], pre);
        if (V) detail::add_rowmat(h_above_prev, *V, i, z_prev.data[i], pre);
        out.z.data[i] = detail::round_z(detail::hard_sigmoid(pre[H], alpha));
        for (int64_t j = 0; j < H; ++j) out.h.at(i, j) = std::tanh(pre[j]);
    }
    return out;
}

template <typename Real>
StepOut<Real> hmrnn_middle_step(const Tensor<Real>& h_below, const Tensor<Real>& z_below,
                                const Tensor<Real>& h_prev, const Tensor<Real>& z_prev,
                                const Tensor<Real>& h_above_prev, const Tensor<Real>& W,
                                const Tensor<Real>& U, const Tensor<Real>* V, Real alpha) {
    const int64_t B = h_below.shape[0], H = h_prev.shape[1];
    StepOut<Real> out;
    out.h = Tensor<Real>::zeros({B, H});
    out.z = Tensor<Real>::zeros({B, 1});
    std::vector<Real> pre(static_cast<size_t>(H + 1));
    for (int64_t i = 0; i < B; ++i) {
        const bool flush = z_prev.data[i] == Real(1);
        const bool copy = !flush && z_below.data[i] == Real(0);
        std::fill(pre.begin(), pre.end(), Real(0));
        detail::add_rowmat(h_below, W, i, Real(1), pre);
        if (flush || copy) {
            if (V) detail::add_rowmat(h_above_prev, *V, i, Real(1), pre);
        } else {
            detail::add_rowmat(h_prev, U, i, Real(1), pre);
        }
        out.z.data[i] = detail::round_z(detail::hard_sigmoid(pre[H], alpha));
        for (int64_t j = 0; j < H; ++j)
            out.h.at(i, j) = copy ? h_prev.at(i, j) : std::tanh(pre[j]);
    }
    return out;
}

template <typename Real>
StepOut<Real> hmrnn_top_step(const Tensor<Real>& h_below, const Tensor<Real>& z_below,
                             const Tensor<Real>& h_prev, const Tensor<Real>& W,
                             const Tensor<Real>& U) {
    const int64_t B = h_below.shape[0], H = h_prev.shape[1];
    StepOut<Real> out;
    out.h = Tensor<Real>::zeros({B, H});
    std::vector<Real> pre(static_cast<size_t>(H));
    for (int64_t i = 0; i < B; ++i) {
        if (z_below.data[i] == Real(0)) {
            for (int64_t j = 0; j < H; ++j) out.h.at(i, j) = h_prev.at(i, j);
            continue;
        }
        std::fill(pre.begin(), pre.end(), Real(0));
        detail::add_rowmat(h_below, W, i, Real(1), pre);
        detail::add_rowmat(h_prev, U, i, Real(1), pre);
        for (int64_t j = 0; j < H; ++j) out.h.at(i, j) = std::tanh(pre[j]);
    }
    return out;
}

}  // namespace hmlab::ref
