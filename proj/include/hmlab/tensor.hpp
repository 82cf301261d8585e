#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hmlab {

inline std::string shape_str(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

// Dense row-major tensor. The payload type is float for training and
// double for gradient checks.
template <typename Real>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<Real> data;

    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> s) {
        Tensor t;
        t.shape = std::move(s);
        t.data.assign(static_cast<size_t>(numel(t.shape)), Real(0));
        return t;
    }

    static Tensor full(std::vector<int64_t> s, Real v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor from(std::vector<int64_t> s, std::vector<Real> d) {
        if (numel(s) != static_cast<int64_t>(d.size()))
            throw std::invalid_argument("tensor data length " + std::to_string(d.size()) +
                                        " does not match shape " + shape_str(s));
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(d);
        return t;
    }

    static int64_t numel(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t e : s) {
            if (e < 0) throw std::invalid_argument("negative extent in shape " + shape_str(s));
            n *= e;
        }
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(data.size()); }

    // 2-D accessors; most of the model lives in [batch x features] land.
    int64_t rows() const { return shape.empty() ? 1 : shape[0]; }
    int64_t cols() const {
        if (shape.size() < 2) return shape.empty() ? 1 : shape[0];
        int64_t c = 1;
        for (size_t i = 1; i < shape.size(); ++i) c *= shape[i];
        return c;
    }

    Real& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    Real at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    Real scalar() const {
        if (data.size() != 1)
            throw std::invalid_argument("scalar() on tensor of shape " + shape_str(shape));
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (Real v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> t;
        t.shape = shape;
        t.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) t.data[i] = static_cast<Other>(data[i]);
        return t;
    }
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace hmlab
