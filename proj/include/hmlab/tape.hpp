#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "hmlab/kernels.hpp"
#include "hmlab/tensor.hpp"

namespace hmlab {

template <typename Real>
struct Parameter {
    std::string name;
    Tensor<Real> value;
    Tensor<Real> grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Tensor<Real> v, bool train = true)
        : name(std::move(n)), value(std::move(v)), trainable(train) {
        grad = Tensor<Real>::zeros(value.shape);
    }

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), Real(0)); }
};

struct Var {
    int32_t idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode tape. Every op appends a node holding the produced tensor and
// a closure implementing its backward rule; replaying the closures in reverse
// creation order accumulates gradients into every reachable tensor and,
// through leaf nodes, into Parameters.
template <typename Real>
class Tape {
  public:
    struct Node {
        Tensor<Real> value;
        Tensor<Real> grad;
        std::function<void(Tape&, int32_t)> backward;
        Parameter<Real>* param = nullptr;
    };

    static bool& debug_mode() {
        static bool dbg = false;
        return dbg;
    }

    const Tensor<Real>& value(Var v) const { return nodes_[v.idx].value; }
    const Tensor<Real>& grad(Var v) const { return nodes_[v.idx].grad; }
    size_t size() const { return nodes_.size(); }

    Var constant(Tensor<Real> t) { return push(std::move(t)); }

    Var leaf(Parameter<Real>& p) {
        Var v = push(p.value);
        nodes_[v.idx].param = &p;
        return v;
    }

    Var matmul(Var a, Var b) {
        const auto& A = val(a);
        const auto& B = val(b);
        require(A.shape.size() == 2 && B.shape.size() == 2 && A.shape[1] == B.shape[0],
                "matmul shape mismatch: " + shape_str(A.shape) + " x " + shape_str(B.shape));
        const int64_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
        Tensor<Real> C = Tensor<Real>::zeros({m, n});
        kernels::gemm_nn(A.data.data(), B.data.data(), C.data.data(), m, k, n);
        return push(std::move(C), [a, b, m, k, n](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            kernels::gemm_nt(g.data.data(), t.val(b).data.data(),
                             t.gref(a).data.data(), m, n, k, true);
            kernels::gemm_tn(t.val(a).data.data(), g.data.data(),
                             t.gref(b).data.data(), k, m, n, true);
        });
    }

    // Elementwise sum; also accepts a row vector b broadcast over the rows
    // of a (bias add).
    Var add(Var a, Var b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.same_shape(B)) {
            Tensor<Real> C = A;
            for (int64_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
            return push(std::move(C), [a, b](Tape& t, int32_t self) {
                accumulate(t.gref(a), t.nodes_[self].grad);
                accumulate(t.gref(b), t.nodes_[self].grad);
            });
        }
        require(A.shape.size() == 2 && B.size() == A.shape[1],
                "add shape mismatch: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
        const int64_t m = A.shape[0], n = A.shape[1];
        Tensor<Real> C = A;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) C.data[i * n + j] += B.data[j];
        return push(std::move(C), [a, b, m, n](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            accumulate(t.gref(a), g);
            auto& gb = t.gref(b);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < n; ++j) gb.data[j] += g.data[i * n + j];
        });
    }

    Var sub(Var a, Var b) {
        const auto& A = val(a);
        const auto& B = val(b);
        require(A.same_shape(B),
                "sub shape mismatch: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
        Tensor<Real> C = A;
        for (int64_t i = 0; i < C.size(); ++i) C.data[i] -= B.data[i];
        return push(std::move(C), [a, b](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            accumulate(t.gref(a), g);
            auto& gb = t.gref(b);
            for (int64_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
        });
    }

    // Hadamard product; b may also be an [m x 1] column, broadcast across the
    // columns of a (boundary masks).
    Var mul(Var a, Var b) {
        const auto& A = val(a);
        const auto& B = val(b);
        if (A.same_shape(B)) {
            Tensor<Real> C = A;
            for (int64_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
            return push(std::move(C), [a, b](Tape& t, int32_t self) {
                const auto& g = t.nodes_[self].grad;
                const auto& va = t.val(a);
                const auto& vb = t.val(b);
                auto& ga = t.gref(a);
                auto& gb = t.gref(b);
                for (int64_t i = 0; i < g.size(); ++i) {
                    ga.data[i] += g.data[i] * vb.data[i];
                    gb.data[i] += g.data[i] * va.data[i];
                }
            });
        }
        require(A.shape.size() == 2 && B.shape.size() == 2 && B.shape[0] == A.shape[0] &&
                    B.shape[1] == 1,
                "mul shape mismatch: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
        const int64_t m = A.shape[0], n = A.shape[1];
        Tensor<Real> C = A;
        for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) C.data[i * n + j] *= B.data[i];
        return push(std::move(C), [a, b, m, n](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto& va = t.val(a);
            const auto& vb = t.val(b);
            auto& ga = t.gref(a);
            auto& gb = t.gref(b);
            for (int64_t i = 0; i < m; ++i) {
                Real acc = 0;
                for (int64_t j = 0; j < n; ++j) {
                    ga.data[i * n + j] += g.data[i * n + j] * vb.data[i];
                    acc += g.data[i * n + j] * va.data[i * n + j];
                }
                gb.data[i] += acc;
            }
        });
    }

    // scale * x + shift, elementwise with compile-time constants.
    Var affine(Var a, Real scale, Real shift) {
        Tensor<Real> C = val(a);
        for (auto& v : C.data) v = scale * v + shift;
        return push(std::move(C), [a, scale](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            auto& ga = t.gref(a);
            for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += scale * g.data[i];
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        require(!parts.empty(), "concat of nothing");
        const int64_t m = val(parts[0]).shape[0];
        int64_t n = 0;
        for (Var p : parts) {
            const auto& t = val(p);
            require(t.shape.size() == 2 && t.shape[0] == m,
                    "concat row mismatch: " + shape_str(t.shape) + " vs " +
                        shape_str(val(parts[0]).shape));
            n += t.shape[1];
        }
        Tensor<Real> C = Tensor<Real>::zeros({m, n});
        int64_t off = 0;
        for (Var p : parts) {
            const auto& t = val(p);
            const int64_t w = t.shape[1];
            for (int64_t i = 0; i < m; ++i)
                std::copy_n(t.data.data() + i * w, w, C.data.data() + i * n + off);
            off += w;
        }
        auto parts_copy = parts;
        return push(std::move(C), [parts_copy, m, n](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            int64_t off = 0;
            for (Var p : parts_copy) {
                auto& gp = t.gref(p);
                const int64_t w = t.val(p).shape[1];
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < w; ++j)
                        gp.data[i * w + j] += g.data[i * n + off + j];
                off += w;
            }
        });
    }

    Var slice_cols(Var a, int64_t c0, int64_t c1) {
        const auto& A = val(a);
        require(A.shape.size() == 2 && 0 <= c0 && c0 < c1 && c1 <= A.shape[1],
                "slice [" + std::to_string(c0) + ", " + std::to_string(c1) +
                    ") out of bounds for " + shape_str(A.shape));
        const int64_t m = A.shape[0], n = A.shape[1], w = c1 - c0;
        Tensor<Real> C = Tensor<Real>::zeros({m, w});
        for (int64_t i = 0; i < m; ++i)
            std::copy_n(A.data.data() + i * n + c0, w, C.data.data() + i * w);
        return push(std::move(C), [a, c0, m, n, w](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            auto& ga = t.gref(a);
            for (int64_t i = 0; i < m; ++i)
                for (int64_t j = 0; j < w; ++j) ga.data[i * n + c0 + j] += g.data[i * w + j];
        });
    }

    Var sigmoid(Var a) {
        Tensor<Real> C = val(a);
        for (auto& v : C.data) v = Real(1) / (Real(1) + std::exp(-v));
        return push(std::move(C), [a](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto& y = t.nodes_[self].value;
            auto& ga = t.gref(a);
            for (int64_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * y.data[i] * (Real(1) - y.data[i]);
        });
    }

    Var tanh_(Var a) {
        Tensor<Real> C = val(a);
        for (auto& v : C.data) v = std::tanh(v);
        return push(std::move(C), [a](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto& y = t.nodes_[self].value;
            auto& ga = t.gref(a);
            for (int64_t i = 0; i < g.size(); ++i)
                ga.data[i] += g.data[i] * (Real(1) - y.data[i] * y.data[i]);
        });
    }

    Var relu(Var a) {
        Tensor<Real> C = val(a);
        for (auto& v : C.data) v = v > Real(0) ? v : Real(0);
        return push(std::move(C), [a](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto& y = t.nodes_[self].value;
            auto& ga = t.gref(a);
            for (int64_t i = 0; i < g.size(); ++i)
                if (y.data[i] > Real(0)) ga.data[i] += g.data[i];
        });
    }

    // max(0, min(1, alpha*x + 0.5)); gradient alpha strictly inside the ramp.
    Var hard_sigmoid(Var a, Real alpha) {
        require(alpha > Real(0), "hard_sigmoid slope must be > 0, got " + std::to_string(alpha));
        Tensor<Real> C = val(a);
        for (auto& v : C.data) {
            v = alpha * v + Real(0.5);
            if (v < Real(0)) v = Real(0);
            if (v > Real(1)) v = Real(1);
        }
        return push(std::move(C), [a, alpha](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto& y = t.nodes_[self].value;
            auto& ga = t.gref(a);
            for (int64_t i = 0; i < g.size(); ++i)
                if (y.data[i] > Real(0) && y.data[i] < Real(1))
                    ga.data[i] += alpha * g.data[i];
        });
    }

    // Round to {0, 1}, ties at 0.5 go up. Backward is the straight-through
    // identity: the upstream gradient passes through untouched.
    Var st_round(Var a) {
        Tensor<Real> C = val(a);
        for (auto& v : C.data) {
            if (v < Real(0) || v > Real(1)) {
                if (debug_mode())
                    std::cerr << "st_round: input " << v << " outside [0,1], clamping\n";
                v = v < Real(0) ? Real(0) : Real(1);
            }
            v = v >= Real(0.5) ? Real(1) : Real(0);
        }
        return push(std::move(C), [a](Tape& t, int32_t self) {
            accumulate(t.gref(a), t.nodes_[self].grad);
        });
    }

    Var layer_norm(Var a, Var gain, Var bias, Real eps) {
        const auto& A = val(a);
        require(eps > Real(0), "layer_norm eps must be > 0");
        require(A.shape.size() == 2 && A.shape[1] > 0,
                "layer_norm needs a non-empty 2-D input, got " + shape_str(A.shape));
        const int64_t m = A.shape[0], n = A.shape[1];
        require(val(gain).size() == n && val(bias).size() == n,
                "layer_norm gain/bias must match last dim " + std::to_string(n));
        auto xhat = std::make_shared<Tensor<Real>>(Tensor<Real>::zeros({m, n}));
        auto istd = std::make_shared<std::vector<Real>>(m);
        Tensor<Real> C = Tensor<Real>::zeros({m, n});
        const auto& G = val(gain);
        const auto& B = val(bias);
        for (int64_t i = 0; i < m; ++i) {
            Real mean = 0;
            for (int64_t j = 0; j < n; ++j) mean += A.data[i * n + j];
            mean /= Real(n);
            Real var = 0;
            for (int64_t j = 0; j < n; ++j) {
                Real d = A.data[i * n + j] - mean;
                var += d * d;
            }
            var /= Real(n);
            const Real is = Real(1) / std::sqrt(var + eps);
            (*istd)[i] = is;
            for (int64_t j = 0; j < n; ++j) {
                Real xh = (A.data[i * n + j] - mean) * is;
                xhat->data[i * n + j] = xh;
                C.data[i * n + j] = xh * G.data[j] + B.data[j];
            }
        }
        return push(std::move(C), [a, gain, bias, xhat, istd, m, n](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            const auto& G = t.val(gain);
            auto& ga = t.gref(a);
            auto& gg = t.gref(gain);
            auto& gb = t.gref(bias);
            for (int64_t i = 0; i < m; ++i) {
                Real sum_dxh = 0, sum_dxh_xh = 0;
                for (int64_t j = 0; j < n; ++j) {
                    const Real gij = g.data[i * n + j];
                    const Real xh = xhat->data[i * n + j];
                    gg.data[j] += gij * xh;
                    gb.data[j] += gij;
                    const Real dxh = gij * G.data[j];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh;
                }
                const Real inv_n = Real(1) / Real(n);
                for (int64_t j = 0; j < n; ++j) {
                    const Real dxh = g.data[i * n + j] * G.data[j];
                    const Real xh = xhat->data[i * n + j];
                    ga.data[i * n + j] +=
                        (*istd)[i] * (dxh - inv_n * sum_dxh - xh * inv_n * sum_dxh_xh);
                }
            }
        });
    }

    // Row gather from an embedding table; backward scatter-adds.
    Var lookup(Var table, const std::vector<int32_t>& ids) {
        const auto& T = val(table);
        require(T.shape.size() == 2, "lookup table must be 2-D, got " + shape_str(T.shape));
        const int64_t v = T.shape[0], d = T.shape[1];
        const int64_t m = static_cast<int64_t>(ids.size());
        Tensor<Real> C = Tensor<Real>::zeros({m, d});
        for (int64_t i = 0; i < m; ++i) {
            require(ids[i] >= 0 && ids[i] < v,
                    "lookup id " + std::to_string(ids[i]) + " out of range [0, " +
                        std::to_string(v) + ")");
            std::copy_n(T.data.data() + ids[i] * d, d, C.data.data() + i * d);
        }
        auto ids_copy = ids;
        return push(std::move(C), [table, ids_copy, d](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            auto& gt = t.gref(table);
            for (size_t i = 0; i < ids_copy.size(); ++i)
                for (int64_t j = 0; j < d; ++j)
                    gt.data[ids_copy[i] * d + j] += g.data[static_cast<int64_t>(i) * d + j];
        });
    }

    // Per-row -ln softmax(logits)[target]; log-sum-exp stabilized.
    Var cross_entropy_rows(Var logits, const std::vector<int32_t>& targets) {
        const auto& L = val(logits);
        require(L.shape.size() == 2, "cross_entropy expects [batch x vocab] logits");
        const int64_t m = L.shape[0], n = L.shape[1];
        require(static_cast<int64_t>(targets.size()) == m,
                "cross_entropy target count " + std::to_string(targets.size()) +
                    " != batch " + std::to_string(m));
        auto probs = std::make_shared<Tensor<Real>>(Tensor<Real>::zeros({m, n}));
        Tensor<Real> C = Tensor<Real>::zeros({m, 1});
        for (int64_t i = 0; i < m; ++i) {
            require(targets[i] >= 0 && targets[i] < n,
                    "target " + std::to_string(targets[i]) + " out of range [0, " +
                        std::to_string(n) + ")");
            Real mx = L.data[i * n];
            for (int64_t j = 1; j < n; ++j) mx = std::max(mx, L.data[i * n + j]);
            Real z = 0;
            for (int64_t j = 0; j < n; ++j) {
                const Real e = std::exp(L.data[i * n + j] - mx);
                probs->data[i * n + j] = e;
                z += e;
            }
            for (int64_t j = 0; j < n; ++j) probs->data[i * n + j] /= z;
            C.data[i] = -(L.data[i * n + targets[i]] - mx - std::log(z));
        }
        auto tgt = targets;
        return push(std::move(C), [logits, probs, tgt, n](Tape& t, int32_t self) {
            const auto& g = t.nodes_[self].grad;
            auto& gl = t.gref(logits);
            const int64_t m = static_cast<int64_t>(tgt.size());
            for (int64_t i = 0; i < m; ++i) {
                for (int64_t j = 0; j < n; ++j)
                    gl.data[i * n + j] += g.data[i] * probs->data[i * n + j];
                gl.data[i * n + tgt[i]] -= g.data[i];
            }
        });
    }

    Var sum_all(Var a) {
        const auto& A = val(a);
        Real s = 0;
        for (Real v : A.data) s += v;
        return push(Tensor<Real>::from({1}, {s}), [a](Tape& t, int32_t self) {
            const Real g = t.nodes_[self].grad.data[0];
            auto& ga = t.gref(a);
            for (auto& v : ga.data) v += g;
        });
    }

    Var mean_all(Var a) {
        const int64_t n = val(a).size();
        require(n > 0, "mean of empty tensor");
        return affine(sum_all(a), Real(1) / Real(n), Real(0));
    }

    Var sum_squares(Var a) {
        const auto& A = val(a);
        Real s = 0;
        for (Real v : A.data) s += v * v;
        return push(Tensor<Real>::from({1}, {s}), [a](Tape& t, int32_t self) {
            const Real g = t.nodes_[self].grad.data[0];
            const auto& va = t.val(a);
            auto& ga = t.gref(a);
            for (int64_t i = 0; i < va.size(); ++i) ga.data[i] += Real(2) * g * va.data[i];
        });
    }

    // Mean cross-entropy over the batch.
    Var softmax_cross_entropy(Var logits, const std::vector<int32_t>& targets) {
        return mean_all(cross_entropy_rows(logits, targets));
    }

    // Seeds d(loss)/d(loss) = 1, replays backward rules in reverse creation
    // order, then flushes leaf gradients into their Parameters (+=).
    void backward(Var loss) {
        require(val(loss).size() == 1,
                "backward requires a scalar loss, got " + shape_str(val(loss).shape));
        for (auto& n : nodes_)
            if (n.grad.data.empty()) n.grad = Tensor<Real>::zeros(n.value.shape);
        nodes_[loss.idx].grad.data[0] = Real(1);
        for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i)
            if (nodes_[i].backward) nodes_[i].backward(*this, i);
        for (auto& n : nodes_)
            if (n.param && n.param->trainable) accumulate(n.param->grad, n.grad);
    }

  private:
    std::vector<Node> nodes_;

    const Tensor<Real>& val(Var v) const { return nodes_[v.idx].value; }

    Tensor<Real>& gref(Var v) {
        auto& n = nodes_[v.idx];
        if (n.grad.data.empty()) n.grad = Tensor<Real>::zeros(n.value.shape);
        return n.grad;
    }

    static void accumulate(Tensor<Real>& dst, const Tensor<Real>& src) {
        for (int64_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
    }

    Var push(Tensor<Real> value, std::function<void(Tape&, int32_t)> bw = nullptr) {
        nodes_.push_back(Node{std::move(value), {}, std::move(bw), nullptr});
        return Var{static_cast<int32_t>(nodes_.size() - 1)};
    }
};

}  // namespace hmlab
