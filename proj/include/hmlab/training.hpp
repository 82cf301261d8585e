#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "hmlab/data.hpp"
#include "hmlab/model.hpp"
#include "hmlab/tape.hpp"

namespace hmlab::training {

template <typename Real>
struct AdamState {
    Real lr = Real(0.002);
    Real beta1 = Real(0.9);
    Real beta2 = Real(0.999);
    Real eps = Real(1e-8);
    int64_t step = 0;
    std::map<std::string, std::pair<Tensor<Real>, Tensor<Real>>> moments;  // m, v

    void ensure(const std::vector<Parameter<Real>*>& params) {
        for (auto* p : params) {
            auto it = moments.find(p->name);
            if (it == moments.end())
                moments.emplace(p->name, std::make_pair(Tensor<Real>::zeros(p->value.shape),
                                                        Tensor<Real>::zeros(p->value.shape)));
            else
                require(it->second.first.shape == p->value.shape,
                        "moment shape mismatch for " + p->name);
        }
    }
};

// Scales all gradients by limit/norm when the global L2 norm exceeds the
// limit; returns the pre-clip norm. A non-finite norm (overflowed backward
// pass) leaves the gradients untouched — scaling by limit/inf would turn
// them into NaN — so callers can detect it and skip the update.
template <typename Real>
Real clip_global_norm(const std::vector<Parameter<Real>*>& params, Real limit) {
    require(limit > Real(0), "clip limit must be > 0");
    double sq = 0;
    for (auto* p : params)
        for (Real g : p->grad.data) sq += double(g) * double(g);
    const Real norm = static_cast<Real>(std::sqrt(sq));
    if (!std::isfinite(double(norm))) return norm;
    if (norm > limit) {
        const Real scale = limit / norm;
        for (auto* p : params)
            for (Real& g : p->grad.data) g *= scale;
    }
    return norm;
}

// Standard bias-corrected Adam update.
template <typename Real>
void adam_step(const std::vector<Parameter<Real>*>& params, AdamState<Real>& opt) {
    opt.ensure(params);
    opt.step += 1;
    const Real bc1 = Real(1) - static_cast<Real>(std::pow(double(opt.beta1), double(opt.step)));
    const Real bc2 = Real(1) - static_cast<Real>(std::pow(double(opt.beta2), double(opt.step)));
    for (auto* p : params) {
        if (!p->trainable) continue;
        auto& [m, v] = opt.moments.at(p->name);
        for (int64_t i = 0; i < p->value.size(); ++i) {
            const Real g = p->grad.data[i];
            m.data[i] = opt.beta1 * m.data[i] + (Real(1) - opt.beta1) * g;
            v.data[i] = opt.beta2 * v.data[i] + (Real(1) - opt.beta2) * g * g;
            const Real mhat = m.data[i] / bc1;
            const Real vhat = v.data[i] / bc2;
            p->value.data[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
        }
    }
}

struct ScheduleState {
    double best = std::numeric_limits<double>::infinity();
    int epochs_since_improve = 0;
    int divisions = 0;
    int patience = 4;
    double divisor = 50.0;
};

enum class EpochDecision { improved, divided, stop };

// Strictly-lower validation loss counts as improvement. A non-improving
// epoch divides the learning rate; once `patience` divisions are spent the
// next non-improving epoch stops the run. NaN stops immediately.
template <typename Real>
EpochDecision end_of_epoch(double valid_loss, ScheduleState& s, AdamState<Real>& opt) {
    if (!std::isfinite(valid_loss)) return EpochDecision::stop;
    if (valid_loss < s.best) {
        s.best = valid_loss;
        s.epochs_since_improve = 0;
        return EpochDecision::improved;
    }
    ++s.epochs_since_improve;
    if (s.divisions >= s.patience) return EpochDecision::stop;
    opt.lr = static_cast<Real>(double(opt.lr) / s.divisor);
    ++s.divisions;
    return EpochDecision::divided;
}

// Mean cross-entropy plus lambda * sum of squared weight-matrix entries;
// bias, LN gain and LN bias parameters are exempt.
template <typename Real>
Var loss_with_penalty(Tape<Real>& t, Var mean_xent,
                      const typename Model<Real>::GraphVars& vars,
                      Model<Real>& model, Real lambda) {
    require(lambda >= Real(0), "l2 coefficient must be >= 0");
    if (lambda == Real(0)) return mean_xent;
    Var penalty;
    auto add_term = [&](Var leaf, const std::string& name) {
        if (!leaf.valid() || l2_exempt(name)) return;
        Var sq = t.sum_squares(leaf);
        penalty = penalty.valid() ? t.add(penalty, sq) : sq;
    };
    const auto& g = vars;
    add_term(g.embed, "embed/E");
    for (int k = 0; k < model.config().layers; ++k) {
        const std::string pre = "layer" + std::to_string(k);
        add_term(g.layers[k].W, pre + "/W");
        add_term(g.layers[k].U, pre + "/U");
        add_term(g.layers[k].V, pre + "/V");
        add_term(g.layers[k].b, pre + "/b");
    }
    for (size_t k = 0; k < g.head.w.size(); ++k) {
        add_term(g.head.w[k], "head/w" + std::to_string(k + 1));
        add_term(g.head.We[k], "head/We" + std::to_string(k + 1));
    }
    add_term(g.head.We_simple, "head/We");
    add_term(g.logits_W, "logits/W");
    add_term(g.logits_b, "logits/b");
    return t.add(mean_xent, t.affine(penalty, lambda, Real(0)));
}

}  // namespace hmlab::training
