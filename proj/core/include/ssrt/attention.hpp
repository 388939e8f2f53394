#pragma once

// Dual-branch windowed attention: per-branch queries, keys/values computed
// once per (band, window) and shared by both branches, concat-projection
// fusion and the gate pre-activation projections.

#include <string>

#include "ssrt/engine.hpp"
#include "ssrt/windowing.hpp"

namespace ssrt {

enum class Branch { Spectral, Spatial };

/// Shared key/value projections for one (band, window set).
template <class E>
struct SharedProjections {
    typename E::H k_s, v_s, k_f, v_f;
};

template <class E>
struct BranchQueries {
    typename E::H q_cross, q_self;
};

/// All six projections of one band step, as the contract surface used by
/// tests; s_w and f_w are aligned window sets of shape (N*M^2, C).
template <class E>
struct ProjectionSet {
    BranchQueries<E> q;
    SharedProjections<E> kv;
};

/// Keys/values from the state windows (k_s, v_s) and the feature windows
/// (k_f, v_f). Evaluated exactly once per band step; both branches consume
/// the returned handles.
template <class E>
SharedProjections<E> project_shared(E& eng, typename E::H s_w, typename E::H f_w,
                                    typename E::H w_s_k, typename E::H w_s_v, typename E::H w_f_k,
                                    typename E::H w_f_v) {
    SharedProjections<E> out;
    out.k_s = eng.linear(s_w, w_s_k, {}, "proj.k_s");
    out.v_s = eng.linear(s_w, w_s_v, {}, "proj.v_s");
    out.k_f = eng.linear(f_w, w_f_k, {}, "proj.k_f");
    out.v_f = eng.linear(f_w, w_f_v, {}, "proj.v_f");
    return out;
}

/// Branch queries: the spectral branch derives both queries from the state
/// windows, the spatial branch from the feature windows.
template <class E>
BranchQueries<E> project_queries(E& eng, typename E::H x_w, typename E::H w_q_cross,
                                 typename E::H w_q_self) {
    BranchQueries<E> out;
    out.q_cross = eng.linear(x_w, w_q_cross, {}, "proj.q_cross");
    out.q_self = eng.linear(x_w, w_q_self, {}, "proj.q_self");
    return out;
}

template <class E>
ProjectionSet<E> project(E& eng, typename E::H s_w, typename E::H f_w, typename E::H w_q_cross,
                         typename E::H w_q_self, typename E::H w_s_k, typename E::H w_s_v,
                         typename E::H w_f_k, typename E::H w_f_v, Branch branch) {
    ProjectionSet<E> out;
    out.q = project_queries(eng, branch == Branch::Spectral ? s_w : f_w, w_q_cross, w_q_self);
    out.kv = project_shared(eng, s_w, f_w, w_s_k, w_s_v, w_f_k, w_f_v);
    return out;
}

/// cat(A_self, A_cross) projected by a C x C fusion matrix.
template <class E>
typename E::H fuse_attention(E& eng, typename E::H a_self, typename E::H a_cross,
                             typename E::H w_fuse) {
    return eng.linear(eng.concat_cols(a_self, a_cross), w_fuse, {}, "fuse");
}

/// Projects the C/2-wide self-attention output up to C channels for the
/// forget/reset gate pre-activations.
template <class E>
typename E::H gate_projection(E& eng, typename E::H a_self, typename E::H w_gate) {
    return eng.linear(a_self, w_gate, {}, "gate_proj");
}

} // namespace ssrt
