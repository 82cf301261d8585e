#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hmlab/cells.hpp"
#include "hmlab/init.hpp"
#include "hmlab/tape.hpp"

namespace hmlab {

enum class Arch { lstm, hmlstm, hmrnn };
enum class OutputHead { gated, simple };

inline std::string arch_name(Arch a) {
    switch (a) {
        case Arch::lstm: return "lstm";
        case Arch::hmlstm: return "hmlstm";
        case Arch::hmrnn: return "hmrnn";
    }
    return "?";
}

struct ModelConfig {
    Arch arch = Arch::hmlstm;
    int layers = 3;
    int units = 512;
    int embed_dim = 128;
    int output_dim = 128;
    int vocab_size = 0;
    bool use_layer_norm = false;
    bool ln_on_embeddings = false;
    bool copy_last = false;
    bool no_top_down = false;
    double slope_alpha = 0.5;
    double ln_eps = 1e-5;
    OutputHead output_head = OutputHead::gated;
    uint64_t seed = 1;

    void validate() const {
        require(layers >= 2, "need at least 2 layers");
        require(units > 0 && embed_dim > 0 && output_dim > 0, "dims must be positive");
        require(vocab_size > 0, "vocab_size must be set");
        require(slope_alpha > 0, "slope_alpha must be > 0");
        require(ln_eps > 0, "ln_eps must be > 0");
    }
};

// Names ending in /b, /bias or /gain are excluded from the L2 penalty.
inline bool l2_exempt(const std::string& name) {
    auto ends_with = [&](const char* s) {
        const std::string suf(s);
        return name.size() >= suf.size() &&
               name.compare(name.size() - suf.size(), suf.size(), suf) == 0;
    };
    return ends_with("/b") || ends_with("/bias") || ends_with("/gain");
}

template <typename Real>
struct LayerStateT {
    Tensor<Real> h, c, z;  // c / z empty where the layer kind has none
};

template <typename Real>
struct ModelState {
    std::vector<LayerStateT<Real>> layers;
};

// 3-layer stack with character embedding, output head and softmax
// projection. Holds every Parameter; the per-chunk graph is built by
// pushing the parameters onto a fresh tape and stepping left to right.
template <typename Real>
class Model {
  public:
    struct HeadVars {
        std::vector<Var> w, We;  // gated head
        Var We_simple;           // simple head
        Var ln_gain, ln_bias;
    };
    struct GraphVars {
        Var embed, embed_ln_gain, embed_ln_bias;
        std::vector<cells::LayerVars> layers;
        HeadVars head;
        Var logits_W, logits_b;
    };
    struct SeqOut {
        std::vector<Var> step_logits;              // one [B x vocab] per step
        std::vector<Tensor<Real>> z1, z2;          // empty for plain LSTM
        GraphVars vars;                            // the pushed parameter leaves
    };

    explicit Model(const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        build_parameters();
    }

    const ModelConfig& config() const { return cfg_; }

    cells::CellFlags<Real> flags() const {
        return {cfg_.use_layer_norm, cfg_.copy_last, cfg_.no_top_down,
                static_cast<Real>(cfg_.slope_alpha), static_cast<Real>(cfg_.ln_eps)};
    }

    bool has(const std::string& name) const { return by_name_.count(name) > 0; }

    Parameter<Real>& at(const std::string& name) {
        auto it = by_name_.find(name);
        require(it != by_name_.end(), "no parameter named " + name);
        return *it->second;
    }

    // Name-ordered, which fixes the checkpoint manifest order.
    std::vector<Parameter<Real>*> parameters() {
        std::vector<Parameter<Real>*> out;
        for (auto& [_, p] : by_name_) out.push_back(p);
        return out;
    }

    std::vector<std::string> parameter_names() const {
        std::vector<std::string> out;
        for (auto& [n, _] : by_name_) out.push_back(n);
        return out;
    }

    void zero_grads() {
        for (auto& [_, p] : by_name_) p->zero_grad();
    }

    bool layer_has_cell(int k) const { return cfg_.arch != Arch::hmrnn; (void)k; }
    bool layer_has_z(int k) const {
        return cfg_.arch != Arch::lstm && k < cfg_.layers - 1;
    }

    ModelState<Real> initial_state(int64_t batch) const {
        ModelState<Real> s;
        for (int k = 0; k < cfg_.layers; ++k) {
            LayerStateT<Real> ls;
            ls.h = Tensor<Real>::zeros({batch, cfg_.units});
            if (layer_has_cell(k)) ls.c = Tensor<Real>::zeros({batch, cfg_.units});
            if (layer_has_z(k)) ls.z = Tensor<Real>::zeros({batch, 1});
            s.layers.push_back(std::move(ls));
        }
        return s;
    }

    GraphVars push_vars(Tape<Real>& t) {
        GraphVars g;
        g.embed = t.leaf(at("embed/E"));
        if (cfg_.ln_on_embeddings) {
            g.embed_ln_gain = t.leaf(at("embed/ln/gain"));
            g.embed_ln_bias = t.leaf(at("embed/ln/bias"));
        }
        for (int k = 0; k < cfg_.layers; ++k) {
            cells::LayerVars lv;
            const std::string pre = layer_prefix(k);
            lv.W = t.leaf(at(pre + "/W"));
            lv.U = t.leaf(at(pre + "/U"));
            if (has(pre + "/V")) lv.V = t.leaf(at(pre + "/V"));
            if (has(pre + "/b")) lv.b = t.leaf(at(pre + "/b"));
            if (cfg_.use_layer_norm) {
                lv.ln_w_gain = t.leaf(at(pre + "/ln_w/gain"));
                lv.ln_w_bias = t.leaf(at(pre + "/ln_w/bias"));
                lv.ln_u_gain = t.leaf(at(pre + "/ln_u/gain"));
                lv.ln_u_bias = t.leaf(at(pre + "/ln_u/bias"));
                if (lv.V.valid()) {
                    lv.ln_v_gain = t.leaf(at(pre + "/ln_v/gain"));
                    lv.ln_v_bias = t.leaf(at(pre + "/ln_v/bias"));
                }
            }
            g.layers.push_back(lv);
        }
        if (cfg_.output_head == OutputHead::gated) {
            for (int k = 0; k < cfg_.layers; ++k) {
                g.head.w.push_back(t.leaf(at("head/w" + std::to_string(k + 1))));
                g.head.We.push_back(t.leaf(at("head/We" + std::to_string(k + 1))));
            }
        } else {
            g.head.We_simple = t.leaf(at("head/We"));
        }
        if (cfg_.ln_on_embeddings) {
            g.head.ln_gain = t.leaf(at("head/ln/gain"));
            g.head.ln_bias = t.leaf(at("head/ln/bias"));
        }
        g.logits_W = t.leaf(at("logits/W"));
        g.logits_b = t.leaf(at("logits/b"));
        return g;
    }

    std::vector<cells::StateVars> push_state(Tape<Real>& t, const ModelState<Real>& s) const {
        require(static_cast<int>(s.layers.size()) == cfg_.layers,
                "state has " + std::to_string(s.layers.size()) + " layers, config wants " +
                    std::to_string(cfg_.layers));
        std::vector<cells::StateVars> out;
        for (const auto& ls : s.layers) {
            cells::StateVars sv;
            sv.h = t.constant(ls.h);
            if (!ls.c.data.empty()) sv.c = t.constant(ls.c);
            if (!ls.z.data.empty()) sv.z = t.constant(ls.z);
            out.push_back(sv);
        }
        return out;
    }

    Var embed_step(Tape<Real>& t, const GraphVars& g, const std::vector<int32_t>& ids_t) {
        Var x = t.lookup(g.embed, ids_t);
        if (cfg_.ln_on_embeddings)
            x = t.layer_norm(x, g.embed_ln_gain, g.embed_ln_bias,
                             static_cast<Real>(cfg_.ln_eps));
        return x;
    }

    // One time step, bottom to top: layer k consumes the step-t output of
    // the layer below and the step-(t-1) state of the layer above.
    std::vector<cells::StateVars> step(Tape<Real>& t, const GraphVars& g, Var x,
                                       const std::vector<cells::StateVars>& prev) {
        const auto fl = flags();
        const int L = cfg_.layers;
        std::vector<cells::StateVars> next(L);
        Var below_h = x;
        Var below_z;
        for (int k = 0; k < L; ++k) {
            const auto& w = g.layers[k];
            switch (cfg_.arch) {
                case Arch::lstm:
                    next[k] = cells::lstm_step(t, below_h, prev[k], w, fl);
                    break;
                case Arch::hmlstm:
                    if (k == 0)
                        next[k] = cells::hmlstm_bottom_step(t, below_h, prev[k],
                                                            prev[k + 1].h, w, fl);
                    else if (k == L - 1)
                        next[k] = cells::hmlstm_top_step(t, below_h, below_z, prev[k], w, fl);
                    else
                        next[k] = cells::hmlstm_middle_step(t, below_h, below_z, prev[k],
                                                            prev[k + 1].h, w, fl);
                    break;
                case Arch::hmrnn:
                    if (k == 0)
                        next[k] = cells::hmrnn_bottom_step(t, below_h, prev[k],
                                                           prev[k + 1].h, w, fl);
                    else if (k == L - 1)
                        next[k] = cells::hmrnn_top_step(t, below_h, below_z, prev[k], w, fl);
                    else
                        next[k] = cells::hmrnn_middle_step(t, below_h, below_z, prev[k],
                                                           prev[k + 1].h, w, fl);
                    break;
            }
            below_h = next[k].h;
            below_z = next[k].z;
        }
        return next;
    }

    Var output_embedding(Tape<Real>& t, const GraphVars& g,
                         const std::vector<cells::StateVars>& states) {
        std::vector<Var> hs;
        for (const auto& s : states) hs.push_back(s.h);
        Var he;
        if (cfg_.output_head == OutputHead::gated) {
            Var cat = t.concat_cols(hs);
            for (int k = 0; k < cfg_.layers; ++k) {
                Var gate = t.sigmoid(t.matmul(cat, g.head.w[k]));
                Var term = t.mul(t.matmul(hs[k], g.head.We[k]), gate);
                he = k == 0 ? term : t.add(he, term);
            }
        } else {
            he = t.matmul(t.concat_cols(hs), g.head.We_simple);
        }
        if (cfg_.ln_on_embeddings)
            he = t.layer_norm(he, g.head.ln_gain, g.head.ln_bias,
                              static_cast<Real>(cfg_.ln_eps));
        return t.relu(he);
    }

    Var project_logits(Tape<Real>& t, const GraphVars& g, Var he) {
        return t.add(t.matmul(he, g.logits_W), g.logits_b);
    }

    // Runs the stack over a [B x T] chunk (ids row-major) with carried
    // state; updates `state` in place with the detached final step values.
    SeqOut forward_sequence(Tape<Real>& t, const std::vector<int32_t>& ids, int64_t B,
                            int64_t T, ModelState<Real>& state) {
        require(T >= 1 && static_cast<int64_t>(ids.size()) == B * T,
                "ids size does not match batch x steps");
        SeqOut out;
        out.vars = push_vars(t);
        const GraphVars& g = out.vars;
        auto states = push_state(t, state);
        std::vector<int32_t> ids_t(static_cast<size_t>(B));
        for (int64_t step_i = 0; step_i < T; ++step_i) {
            for (int64_t b = 0; b < B; ++b) ids_t[b] = ids[b * T + step_i];
            Var x = embed_step(t, g, ids_t);
            states = step(t, g, x, states);
            out.step_logits.push_back(project_logits(t, g, output_embedding(t, g, states)));
            if (cfg_.arch != Arch::lstm) {
                out.z1.push_back(t.value(states[0].z));
                if (cfg_.layers > 2) out.z2.push_back(t.value(states[1].z));
            }
        }
        for (int k = 0; k < cfg_.layers; ++k) {
            state.layers[k].h = t.value(states[k].h);
            if (states[k].c.valid()) state.layers[k].c = t.value(states[k].c);
            if (states[k].z.valid()) state.layers[k].z = t.value(states[k].z);
        }
        return out;
    }

  private:
    ModelConfig cfg_;
    std::vector<std::unique_ptr<Parameter<Real>>> owned_;
    std::map<std::string, Parameter<Real>*> by_name_;

    std::string layer_prefix(int k) const { return "layer" + std::to_string(k); }

    Parameter<Real>& add(const std::string& name, Tensor<double> value) {
        require(by_name_.count(name) == 0, "duplicate parameter name " + name);
        owned_.push_back(
            std::make_unique<Parameter<Real>>(name, value.template cast<Real>()));
        by_name_[name] = owned_.back().get();
        return *owned_.back();
    }

    // Gate-weight matrix: semi-orthogonal block on all columns but the
    // z-logit column, which is Glorot uniform with
    // sigma = sqrt(6 / (fanin + fanout)).
    Tensor<double> gate_matrix(int64_t in, int64_t out, bool has_z, std::mt19937_64& rng) {
        if (!has_z) return init::orthogonal(in, out, rng);
        Tensor<double> m = Tensor<double>::zeros({in, out});
        Tensor<double> block = init::orthogonal(in, out - 1, rng);
        for (int64_t i = 0; i < in; ++i)
            for (int64_t j = 0; j < out - 1; ++j) m.at(i, j) = block.at(i, j);
        auto zcol = init::glorot_uniform(in, in, out, rng);
        for (int64_t i = 0; i < in; ++i) m.at(i, out - 1) = zcol[static_cast<size_t>(i)];
        return m;
    }

    void add_ln_pair(const std::string& prefix, int64_t width) {
        add(prefix + "/gain", Tensor<double>::full({width}, 1.0));
        add(prefix + "/bias", Tensor<double>::zeros({width}));
    }

    void build_parameters() {
        auto rng = init::labeled_rng(cfg_.seed, "init");
        const int64_t H = cfg_.units;
        const int L = cfg_.layers;

        add("embed/E", init::orthogonal(cfg_.vocab_size, cfg_.embed_dim, rng));
        if (cfg_.ln_on_embeddings) add_ln_pair("embed/ln", cfg_.embed_dim);

        for (int k = 0; k < L; ++k) {
            const std::string pre = layer_prefix(k);
            const int64_t in = k == 0 ? cfg_.embed_dim : H;
            const bool has_z = layer_has_z(k);
            int64_t out;
            if (cfg_.arch == Arch::hmrnn)
                out = has_z ? H + 1 : H;
            else
                out = has_z ? 4 * H + 1 : 4 * H;
            const bool has_v =
                cfg_.arch != Arch::lstm && k < L - 1 && !cfg_.no_top_down;

            add(pre + "/W", gate_matrix(in, out, has_z, rng));
            add(pre + "/U", gate_matrix(H, out, has_z, rng));
            if (has_v) add(pre + "/V", gate_matrix(H, out, has_z, rng));
            if (cfg_.arch != Arch::hmrnn) add(pre + "/b", Tensor<double>::zeros({out}));
            if (cfg_.use_layer_norm) {
                add_ln_pair(pre + "/ln_w", out);
                add_ln_pair(pre + "/ln_u", out);
                if (has_v) add_ln_pair(pre + "/ln_v", out);
            }
        }

        if (cfg_.output_head == OutputHead::gated) {
            for (int k = 0; k < L; ++k) {
                add("head/w" + std::to_string(k + 1),
                    Tensor<double>::from({static_cast<int64_t>(L) * H, 1},
                                         init::glorot_uniform(L * H, L * H, 1, rng)));
                add("head/We" + std::to_string(k + 1),
                    init::orthogonal(H, cfg_.output_dim, rng));
            }
        } else {
            add("head/We", init::orthogonal(static_cast<int64_t>(L) * H, cfg_.output_dim, rng));
        }
        if (cfg_.ln_on_embeddings) add_ln_pair("head/ln", cfg_.output_dim);

        add("logits/W", init::orthogonal(cfg_.output_dim, cfg_.vocab_size, rng));
        add("logits/b", Tensor<double>::zeros({cfg_.vocab_size}));
    }
};

}  // namespace hmlab
