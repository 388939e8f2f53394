#pragma once

// One spatial-spectral recurrent block: the per-band spectral branch with
// SRU-style forget/reset gating, the spatial branch sharing its keys and
// values, the band recurrence, and the bidirectional wrapper.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ssrt/attention.hpp"
#include "ssrt/engine.hpp"
#include "ssrt/params.hpp"
#include "ssrt/rng.hpp"
#include "ssrt/windowing.hpp"

namespace ssrt {

/// Static geometry of one block at one scale.
template <class S>
struct BlockGeometry {
    int C = 0, H = 0, W = 0, M = 0;
    bool shifted = false;
    int shift = 0; // floor(M/2) when shifted
    std::shared_ptr<const AttnGeometry<S>> attn;
};

template <class S>
BlockGeometry<S> make_block_geometry(int C, int H, int W, int M, bool shifted) {
    if (C % 2 != 0) throw std::invalid_argument("channel count must be even, got " + std::to_string(C));
    if (H % M != 0 || W % M != 0)
        throw std::invalid_argument("window size " + std::to_string(M) + " must divide H=" +
                                    std::to_string(H) + ", W=" + std::to_string(W));
    BlockGeometry<S> g;
    g.C = C;
    g.H = H;
    g.W = W;
    g.M = M;
    g.shifted = shifted && M > 1;
    g.shift = g.shifted ? M / 2 : 0;
    g.attn = make_attn_geometry<S>(H, W, M, g.shifted);
    return g;
}

namespace block_names {
inline const char* const kMatrices[] = {"q_cross_spec", "q_self_spec", "q_cross_spat",
                                        "q_self_spat",  "k_s",         "v_s",
                                        "k_f",          "v_f"};
}

/// Creates all learnables of one directional block under `prefix.`:
/// projections and fusion matrices (truncated normal, std 0.02), gate
/// projections, zero-initialized relative-position bias tables and the two
/// residual MLPs.
template <class S>
void init_block_params(ParamStore<S>& ps, const std::string& prefix, int C, int M, int mlp_ratio,
                       Philox& rng) {
    if (C % 2 != 0) throw std::invalid_argument("channel count must be even, got " + std::to_string(C));
    const int half = C / 2;
    auto matrix = [&](const std::string& name, int rows, int cols) {
        Tensor<S> t({rows, cols});
        for (auto& v : t.data) v = static_cast<S>(rng.next_trunc_normal(0.02));
        ps.add(prefix + name, std::move(t));
    };
    for (const char* name : block_names::kMatrices) matrix(name, C, half);
    matrix("fuse_spec", C, C);
    matrix("fuse_spat", C, C);
    matrix("gate_forget", half, C);
    matrix("gate_reset", half, C);
    const int table = (2 * M - 1) * (2 * M - 1);
    for (const char* name : {"bias_self_spec", "bias_cross_spec", "bias_self_spat", "bias_cross_spat"})
        ps.add(prefix + name, Tensor<S>::zeros({table}));
    for (const char* branch : {"mlp_spec", "mlp_spat"}) {
        matrix(std::string(branch) + ".w1", C, mlp_ratio * C);
        ps.add(prefix + branch + ".b1", Tensor<S>::zeros({mlp_ratio * C}));
        matrix(std::string(branch) + ".w2", mlp_ratio * C, C);
        ps.add(prefix + branch + ".b2", Tensor<S>::zeros({C}));
    }
}

/// Handles to one directional block's weights, bound to an engine pass.
template <class E>
struct BlockParams {
    using H = typename E::H;
    H q_cross_spec, q_self_spec, q_cross_spat, q_self_spat;
    H k_s, v_s, k_f, v_f;
    H fuse_spec, fuse_spat;
    H gate_forget, gate_reset;
    H bias_self_spec, bias_cross_spec, bias_self_spat, bias_cross_spat;
    H mlp_spec_w1, mlp_spec_b1, mlp_spec_w2, mlp_spec_b2;
    H mlp_spat_w1, mlp_spat_b1, mlp_spat_w2, mlp_spat_b2;
};

template <class E>
BlockParams<E> bind_block_params(E& eng, const ParamStore<typename E::Scalar>& ps,
                                 const std::string& prefix) {
    auto p = [&](const char* name) { return eng.param(prefix + name, ps.at(prefix + name)); };
    BlockParams<E> b;
    b.q_cross_spec = p("q_cross_spec");
    b.q_self_spec = p("q_self_spec");
    b.q_cross_spat = p("q_cross_spat");
    b.q_self_spat = p("q_self_spat");
    b.k_s = p("k_s");
    b.v_s = p("v_s");
    b.k_f = p("k_f");
    b.v_f = p("v_f");
    b.fuse_spec = p("fuse_spec");
    b.fuse_spat = p("fuse_spat");
    b.gate_forget = p("gate_forget");
    b.gate_reset = p("gate_reset");
    b.bias_self_spec = p("bias_self_spec");
    b.bias_cross_spec = p("bias_cross_spec");
    b.bias_self_spat = p("bias_self_spat");
    b.bias_cross_spat = p("bias_cross_spat");
    b.mlp_spec_w1 = p("mlp_spec.w1");
    b.mlp_spec_b1 = p("mlp_spec.b1");
    b.mlp_spec_w2 = p("mlp_spec.w2");
    b.mlp_spec_b2 = p("mlp_spec.b2");
    b.mlp_spat_w1 = p("mlp_spat.w1");
    b.mlp_spat_b1 = p("mlp_spat.b1");
    b.mlp_spat_w2 = p("mlp_spat.w2");
    b.mlp_spat_b2 = p("mlp_spat.b2");
    return b;
}

/// Recurrent state: highway state S and light-recurrence cell C, both
/// (C,H,W) in image space, zero at band index 0 in each direction.
template <class E>
struct SpectralState {
    typename E::H s, c;
};

template <class E>
SpectralState<E> zero_state(E& eng, int C, int H, int W) {
    return {eng.zeros({C, H, W}), eng.zeros({C, H, W})};
}

/// Key/value buffers shared between the branches, tagged with the band they
/// were produced for. `f_windows` carries the already-partitioned features so
/// the spatial branch does not re-partition.
template <class E>
struct SharedKv {
    SharedProjections<E> kv;
    typename E::H f_windows;
    int band = -1;
};

template <class E>
struct SpectralStepOut {
    SpectralState<E> state;   // (S_t, C_t)
    SharedKv<E> shared;       // consumed by the spatial branch of the same band
    typename E::H a_self_win; // spectral self-attention output (window layout)
};

/// One spectral-branch band step: windowed cross/self attention with queries
/// from the state, fusion + window reverse, tanh/forget/reset gating, the
/// light recurrence and highway updates, then the residual MLP.
template <class E>
SpectralStepOut<E> spectral_step(E& eng, const SpectralState<E>& prev, typename E::H f_t,
                                 const BlockParams<E>& w,
                                 const BlockGeometry<typename E::Scalar>& geo, int band) {
    const int C = geo.C, H = geo.H, W = geo.W, M = geo.M, d = geo.shift;
    check_same_shape(eng.val(prev.s), eng.val(f_t), "spectral_step state/features");

    typename E::H s_in = d ? eng.cyclic_shift(prev.s, d) : prev.s;
    typename E::H f_in = d ? eng.cyclic_shift(f_t, d) : f_t;
    typename E::H s_w = eng.window_partition(s_in, M);
    typename E::H f_w = eng.window_partition(f_in, M);

    BranchQueries<E> q = project_queries(eng, s_w, w.q_cross_spec, w.q_self_spec);
    SharedProjections<E> kv = project_shared(eng, s_w, f_w, w.k_s, w.v_s, w.k_f, w.v_f);

    typename E::H a_cross = eng.attend(q.q_cross, kv.k_f, kv.v_f, w.bias_cross_spec, geo.attn,
                                       "attend.cross_spec");
    typename E::H a_self =
        eng.attend(q.q_self, kv.k_s, kv.v_s, w.bias_self_spec, geo.attn, "attend.self_spec");

    auto to_image = [&](typename E::H win) {
        typename E::H img = eng.window_reverse(win, C, H, W, M);
        return d ? eng.cyclic_shift(img, -d) : img;
    };

    typename E::H a_h = to_image(fuse_attention(eng, a_self, a_cross, w.fuse_spec));
    typename E::H a_f = to_image(gate_projection(eng, a_self, w.gate_forget));
    typename E::H a_r = to_image(gate_projection(eng, a_self, w.gate_reset));

    typename E::H h_t = eng.tanh(a_h);
    typename E::H forget = eng.tanh_relu(a_f);
    typename E::H c_t =
        eng.add(eng.mul(forget, prev.c), eng.mul(eng.one_minus(forget), h_t));
    typename E::H reset = eng.tanh_relu(a_r);
    typename E::H s_star =
        eng.add(eng.mul(reset, c_t), eng.mul(eng.one_minus(reset), prev.s));
    typename E::H s_t = eng.add(
        eng.pixel_mlp(s_star, w.mlp_spec_w1, w.mlp_spec_b1, w.mlp_spec_w2, w.mlp_spec_b2), s_star);

    SpectralStepOut<E> out;
    out.state = {s_t, c_t};
    out.shared = {kv, f_w, band};
    out.a_self_win = a_self;
    return out;
}

/// Spatial-branch band step: queries from the features, self-attention over
/// (K_F, V_F) and cross-attention over (K_S, V_S) from the shared buffers,
/// fusion, the residual into F_t and the residual MLP.
template <class E>
typename E::H spatial_step(E& eng, typename E::H f_t, const SharedKv<E>& shared,
                           int expected_band, const BlockParams<E>& w,
                           const BlockGeometry<typename E::Scalar>& geo) {
    if (shared.band != expected_band) {
        throw std::logic_error("stale shared key/value buffers: produced for band " +
                               std::to_string(shared.band) + ", consumed at band " +
                               std::to_string(expected_band));
    }
    const int C = geo.C, H = geo.H, W = geo.W, M = geo.M, d = geo.shift;

    BranchQueries<E> q = project_queries(eng, shared.f_windows, w.q_cross_spat, w.q_self_spat);
    typename E::H a_self =
        eng.attend(q.q_self, shared.kv.k_f, shared.kv.v_f, w.bias_self_spat, geo.attn,
                   "attend.self_spat");
    typename E::H a_cross =
        eng.attend(q.q_cross, shared.kv.k_s, shared.kv.v_s, w.bias_cross_spat, geo.attn,
                   "attend.cross_spat");

    typename E::H f_img = eng.window_reverse(fuse_attention(eng, a_self, a_cross, w.fuse_spat),
                                             C, H, W, M);
    if (d) f_img = eng.cyclic_shift(f_img, -d);
    typename E::H f_star = eng.add(f_img, f_t);
    return eng.add(
        eng.pixel_mlp(f_star, w.mlp_spat_w1, w.mlp_spat_b1, w.mlp_spat_w2, w.mlp_spat_b2), f_star);
}

enum class Direction { Forward, Backward };

/// Runs one directional block across the band sequence with zero-initialized
/// state. Backward is defined as the forward pass on the band-reversed
/// sequence followed by band reversal of the output.
template <class E>
std::vector<typename E::H> ssrt_forward(E& eng, const std::vector<typename E::H>& seq,
                                        const BlockParams<E>& w,
                                        const BlockGeometry<typename E::Scalar>& geo,
                                        Direction dir = Direction::Forward) {
    if (seq.empty()) throw std::invalid_argument("ssrt_forward: empty band sequence");
    if (dir == Direction::Backward) {
        std::vector<typename E::H> rev(seq.rbegin(), seq.rend());
        std::vector<typename E::H> out = ssrt_forward(eng, rev, w, geo, Direction::Forward);
        return {out.rbegin(), out.rend()};
    }
    SpectralState<E> state = zero_state(eng, geo.C, geo.H, geo.W);
    std::vector<typename E::H> out;
    out.reserve(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) {
        SpectralStepOut<E> sp = spectral_step(eng, state, seq[t], w, geo, static_cast<int>(t));
        out.push_back(spatial_step(eng, seq[t], sp.shared, static_cast<int>(t), w, geo));
        state = sp.state;
    }
    return out;
}

/// Elementwise sum of the two directional passes (independent weights).
template <class E>
std::vector<typename E::H> bidirectional_ssrt(E& eng, const std::vector<typename E::H>& seq,
                                              const BlockParams<E>& w_fwd,
                                              const BlockParams<E>& w_bwd,
                                              const BlockGeometry<typename E::Scalar>& geo) {
    std::vector<typename E::H> fwd = ssrt_forward(eng, seq, w_fwd, geo, Direction::Forward);
    std::vector<typename E::H> bwd = ssrt_forward(eng, seq, w_bwd, geo, Direction::Backward);
    if (fwd.size() != bwd.size()) throw std::logic_error("directional band counts diverged");
    std::vector<typename E::H> out;
    out.reserve(fwd.size());
    for (std::size_t t = 0; t < fwd.size(); ++t) out.push_back(eng.add(fwd[t], bwd[t]));
    return out;
}

} // namespace ssrt
