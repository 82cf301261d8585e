#pragma once

#include "hmlab/tape.hpp"

namespace hmlab::cells {

template <typename Real>
struct CellFlags {
    bool use_layer_norm = false;
    bool copy_last = false;
    bool no_top_down = false;
    Real slope_alpha = Real(0.5);
    Real ln_eps = Real(1e-5);
};

// Vars for one layer's weights, already pushed on the current tape.
// V and the LN vars are invalid when the layer does not carry them.
struct LayerVars {
    Var W, U, V, b;
    Var ln_w_gain, ln_w_bias;
    Var ln_u_gain, ln_u_bias;
    Var ln_v_gain, ln_v_bias;
};

struct StateVars {
    Var h, c, z;  // c absent for HMRNN layers, z absent for top layer and LSTM
};

namespace detail {

template <typename Real>
Var stream(Tape<Real>& t, Var x, Var M, Var gain, Var bias, const CellFlags<Real>& flags) {
    Var y = t.matmul(x, M);
    if (flags.use_layer_norm) y = t.layer_norm(y, gain, bias, flags.ln_eps);
    return y;
}

template <typename Real>
void check_binary(Tape<Real>& t, Var z, const char* what) {
    for (Real v : t.value(z).data)
        require(v == Real(0) || v == Real(1),
                std::string(what) + " must be binary, got " + std::to_string(double(v)));
}

// sigma(i) (.) tanh(u)
template <typename Real>
Var gated_candidate(Tape<Real>& t, Var i, Var u) {
    return t.mul(t.sigmoid(i), t.tanh_(u));
}

template <typename Real>
Var boundary(Tape<Real>& t, Var logit, const CellFlags<Real>& flags) {
    return t.st_round(t.hard_sigmoid(logit, flags.slope_alpha));
}

}  // namespace detail

// Standard LSTM step. With LN enabled the Wx and Uh streams are normalized
// separately before summation; the bias is added once afterwards.
template <typename Real>
StateVars lstm_step(Tape<Real>& t, Var x, StateVars prev, const LayerVars& w,
                    const CellFlags<Real>& flags) {
    const int64_t H = t.value(prev.h).shape[1];
    Var p = t.add(t.add(detail::stream(t, x, w.W, w.ln_w_gain, w.ln_w_bias, flags),
                        detail::stream(t, prev.h, w.U, w.ln_u_gain, w.ln_u_bias, flags)),
                  w.b);
    Var i = t.slice_cols(p, 0, H);
    Var f = t.slice_cols(p, H, 2 * H);
    Var u = t.slice_cols(p, 2 * H, 3 * H);
    Var o = t.slice_cols(p, 3 * H, 4 * H);
    Var c = t.add(t.mul(prev.c, t.sigmoid(f)), detail::gated_candidate(t, i, u));
    Var h = t.mul(t.sigmoid(o), t.tanh_(c));
    return {h, c, Var{}};
}

// Bottom HMLSTM layer: pre-activations from x, the own recurrent state and
// the z-gated top-down stream; the cell state flushes when the previous
// step emitted a boundary.
template <typename Real>
StateVars hmlstm_bottom_step(Tape<Real>& t, Var x, StateVars prev, Var h_above_prev,
                             const LayerVars& w, const CellFlags<Real>& flags) {
    const int64_t H = t.value(prev.h).shape[1];
    Var p = t.add(detail::stream(t, x, w.W, w.ln_w_gain, w.ln_w_bias, flags),
                  detail::stream(t, prev.h, w.U, w.ln_u_gain, w.ln_u_bias, flags));
    if (!flags.no_top_down)
        p = t.add(p, t.mul(detail::stream(t, h_above_prev, w.V, w.ln_v_gain, w.ln_v_bias, flags),
                           prev.z));
    p = t.add(p, w.b);
    Var i = t.slice_cols(p, 0, H);
    Var f = t.slice_cols(p, H, 2 * H);
    Var u = t.slice_cols(p, 2 * H, 3 * H);
    Var o = t.slice_cols(p, 3 * H, 4 * H);
    Var z_new = detail::boundary(t, t.slice_cols(p, 4 * H, 4 * H + 1), flags);
    Var keep = t.affine(prev.z, Real(-1), Real(1));  // 1 - z_{t-1}
    Var c = t.add(t.mul(t.mul(prev.c, t.sigmoid(f)), keep), detail::gated_candidate(t, i, u));
    Var h = t.mul(t.sigmoid(o), t.tanh_(c));
    return {h, c, z_new};
}

// Middle HMLSTM layer: three-way FLUSH/COPY/UPDATE via binary masks. The
// masked sum is arranged so COPY reproduces the previous state bit-exactly.
template <typename Real>
StateVars hmlstm_middle_step(Tape<Real>& t, Var h_below, Var z_below, StateVars prev,
                             Var h_above_prev, const LayerVars& w,
                             const CellFlags<Real>& flags) {
    detail::check_binary(t, z_below, "z from layer below");
    const int64_t H = t.value(prev.h).shape[1];
    Var p = t.add(t.mul(detail::stream(t, h_below, w.W, w.ln_w_gain, w.ln_w_bias, flags), z_below),
                  detail::stream(t, prev.h, w.U, w.ln_u_gain, w.ln_u_bias, flags));
    if (!flags.no_top_down)
        p = t.add(p, t.mul(detail::stream(t, h_above_prev, w.V, w.ln_v_gain, w.ln_v_bias, flags),
                           prev.z));
    p = t.add(p, w.b);
    Var i = t.slice_cols(p, 0, H);
    Var f = t.slice_cols(p, H, 2 * H);
    Var u = t.slice_cols(p, 2 * H, 3 * H);
    Var o = t.slice_cols(p, 3 * H, 4 * H);
    Var z_new = detail::boundary(t, t.slice_cols(p, 4 * H, 4 * H + 1), flags);

    Var not_prev = t.affine(prev.z, Real(-1), Real(1));
    Var not_below = t.affine(z_below, Real(-1), Real(1));
    Var flush_m = prev.z;
    Var copy_m = t.mul(not_prev, not_below);
    Var update_m = t.mul(not_prev, z_below);

    Var ug = detail::gated_candidate(t, i, u);
    Var c_update = t.add(t.mul(prev.c, t.sigmoid(f)), ug);
    Var c = t.add(t.add(t.mul(ug, flush_m), t.mul(c_update, update_m)),
                  t.mul(prev.c, copy_m));
    Var h_new = t.mul(t.sigmoid(o), t.tanh_(c));
    Var h = t.add(t.mul(h_new, t.affine(copy_m, Real(-1), Real(1))), t.mul(prev.h, copy_m));
    return {h, c, z_new};
}

// Top HMLSTM layer: UPDATE when the layer below fires, COPY otherwise. The
// copied hidden state either carries over (CopyLast) or is recomputed by
// applying the fresh output gate to the old cell state.
template <typename Real>
StateVars hmlstm_top_step(Tape<Real>& t, Var h_below, Var z_below, StateVars prev,
                          const LayerVars& w, const CellFlags<Real>& flags) {
    detail::check_binary(t, z_below, "z from layer below");
    const int64_t H = t.value(prev.h).shape[1];
    Var p = t.add(t.add(t.mul(detail::stream(t, h_below, w.W, w.ln_w_gain, w.ln_w_bias, flags),
                              z_below),
                        detail::stream(t, prev.h, w.U, w.ln_u_gain, w.ln_u_bias, flags)),
                  w.b);
    Var i = t.slice_cols(p, 0, H);
    Var f = t.slice_cols(p, H, 2 * H);
    Var u = t.slice_cols(p, 2 * H, 3 * H);
    Var o = t.slice_cols(p, 3 * H, 4 * H);
    Var keep = t.affine(z_below, Real(-1), Real(1));

    Var c_hat = t.add(t.mul(prev.c, t.sigmoid(f)), detail::gated_candidate(t, i, u));
    Var c = t.add(t.mul(c_hat, z_below), t.mul(prev.c, keep));
    Var og = t.sigmoid(o);
    Var h_hat = t.mul(og, t.tanh_(c_hat));
    Var h_copy = flags.copy_last ? prev.h : t.mul(og, t.tanh_(prev.c));
    Var h = t.add(t.mul(h_hat, z_below), t.mul(h_copy, keep));
    return {h, c, Var{}};
}

// Elman-style bottom layer: the recurrent stream is gated off at a boundary
// and replaced with the top-down stream.
template <typename Real>
StateVars hmrnn_bottom_step(Tape<Real>& t, Var x, StateVars prev, Var h_above_prev,
                            const LayerVars& w, const CellFlags<Real>& flags) {
    const int64_t H = t.value(prev.h).shape[1];
    Var keep = t.affine(prev.z, Real(-1), Real(1));
    Var p = t.add(detail::stream(t, x, w.W, w.ln_w_gain, w.ln_w_bias, flags),
                  t.mul(detail::stream(t, prev.h, w.U, w.ln_u_gain, w.ln_u_bias, flags), keep));
    if (!flags.no_top_down)
        p = t.add(p, t.mul(detail::stream(t, h_above_prev, w.V, w.ln_v_gain, w.ln_v_bias, flags),
                           prev.z));
    Var h = t.tanh_(t.slice_cols(p, 0, H));
    Var z_new = detail::boundary(t, t.slice_cols(p, H, H + 1), flags);
    return {h, Var{}, z_new};
}

template <typename Real>
StateVars hmrnn_middle_step(Tape<Real>& t, Var h_below, Var z_below, StateVars prev,
                            Var h_above_prev, const LayerVars& w,
                            const CellFlags<Real>& flags) {
    detail::check_binary(t, z_below, "z from layer below");
    const int64_t H = t.value(prev.h).shape[1];
    Var bottom_up = detail::stream(t, h_below, w.W, w.ln_w_gain, w.ln_w_bias, flags);
    Var h_flush = bottom_up;
    if (!flags.no_top_down)
        h_flush = t.add(bottom_up,
                        detail::stream(t, h_above_prev, w.V, w.ln_v_gain, w.ln_v_bias, flags));
    Var h_update =
        t.add(bottom_up, detail::stream(t, prev.h, w.U, w.ln_u_gain, w.ln_u_bias, flags));

    Var not_prev = t.affine(prev.z, Real(-1), Real(1));
    Var copy_m = t.mul(not_prev, t.affine(z_below, Real(-1), Real(1)));
    Var update_m = t.mul(not_prev, z_below);

    Var p = t.add(t.mul(h_flush, t.affine(update_m, Real(-1), Real(1))),
                  t.mul(h_update, update_m));
    Var z_new = detail::boundary(t, t.slice_cols(p, H, H + 1), flags);
    Var h = t.add(t.mul(t.tanh_(t.slice_cols(p, 0, H)), t.affine(copy_m, Real(-1), Real(1))),
                  t.mul(prev.h, copy_m));
    return {h, Var{}, z_new};
}

template <typename Real>
StateVars hmrnn_top_step(Tape<Real>& t, Var h_below, Var z_below, StateVars prev,
                         const LayerVars& w, const CellFlags<Real>& flags) {
    detail::check_binary(t, z_below, "z from layer below");
    Var p = t.add(detail::stream(t, h_below, w.W, w.ln_w_gain, w.ln_w_bias, flags),
                  detail::stream(t, prev.h, w.U, w.ln_u_gain, w.ln_u_bias, flags));
    Var h = t.add(t.mul(t.tanh_(p), z_below),
                  t.mul(prev.h, t.affine(z_below, Real(-1), Real(1))));
    return {h, Var{}, Var{}};
}

}  // namespace hmlab::cells
