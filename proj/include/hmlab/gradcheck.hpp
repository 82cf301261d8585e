#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hmlab/tape.hpp"

namespace hmlab::gradcheck {

// Central finite differences against the tape gradient, at float64.
// `loss_fn` must build the scalar loss from the given parameters on the
// supplied tape; it is called many times with perturbed parameter values.
struct Report {
    std::string name;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

using LossFn = std::function<Var(Tape<double>&, std::vector<Parameter<double>*>&)>;

inline double check(const std::string& name, std::vector<Parameter<double>*> params,
                    const LossFn& loss_fn, Report* out = nullptr, double eps = 1e-5) {
    auto eval = [&]() {
        Tape<double> tape;
        return tape.value(loss_fn(tape, params)).scalar();
    };

    for (auto* p : params) p->zero_grad();
    {
        Tape<double> tape;
        tape.backward(loss_fn(tape, params));
    }

    double max_rel = 0.0, max_abs = 0.0;
    for (auto* p : params) {
        for (int64_t i = 0; i < p->value.size(); ++i) {
            const double orig = p->value.data[i];
            p->value.data[i] = orig + eps;
            const double up = eval();
            p->value.data[i] = orig - eps;
            const double down = eval();
            p->value.data[i] = orig;
            const double fd = (up - down) / (2.0 * eps);
            const double an = p->grad.data[i];
            const double abs_err = std::abs(fd - an);
            const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            max_abs = std::max(max_abs, abs_err);
            max_rel = std::max(max_rel, abs_err / denom);
        }
    }
    if (out) *out = Report{name, max_rel, max_abs};
    return max_rel;
}

}  // namespace hmlab::gradcheck
