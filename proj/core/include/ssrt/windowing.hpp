#pragma once

#include <memory>
#include <vector>

#include "ssrt/kern.hpp"
#include "ssrt/tensor.hpp"

namespace ssrt {

/// A (C,H,W) map partitioned into N = HW/M^2 non-overlapping M x M windows.
/// `windows` has shape (N*M^2, C): windows enumerated row-major over the tile
/// grid, positions row-major within each window.
template <class S>
struct WindowSet {
    Tensor<S> windows;
    int grid_h = 0;
    int grid_w = 0;
    int window = 0;
    int channels = 0;

    int n_windows() const { return grid_h * grid_w; }
};

/// Per-window additive attention masks for the shifted scheme.
/// `masks` has shape (N, M^2, M^2); entries are 0 or the -inf surrogate.
template <class S>
struct ShiftMask {
    Tensor<S> masks;
    int window = 0;

    bool empty() const { return masks.numel() == 0; }
};

template <class S>
inline constexpr S neg_inf_surrogate() {
    return S(-1e9);
}
template <>
inline constexpr double neg_inf_surrogate<double>() {
    return -1e15;
}

template <class S>
WindowSet<S> window_partition(const Tensor<S>& x, int M) {
    if (x.rank() != 3) throw std::invalid_argument("window_partition expects (C,H,W), got " + shape_str(x.shape));
    const int C = x.extent(0), H = x.extent(1), W = x.extent(2);
    if (M < 1 || H % M != 0 || W % M != 0) {
        throw std::invalid_argument("window size " + std::to_string(M) + " must divide H=" +
                                    std::to_string(H) + " and W=" + std::to_string(W));
    }
    WindowSet<S> ws;
    ws.grid_h = H / M;
    ws.grid_w = W / M;
    ws.window = M;
    ws.channels = C;
    ws.windows = Tensor<S>::zeros({ws.n_windows() * M * M, C});
    kern::window_partition_apply(x.ptr(), ws.windows.ptr(), C, H, W, M);
    return ws;
}

template <class S>
Tensor<S> window_reverse(const WindowSet<S>& ws) {
    const int M = ws.window;
    const int H = ws.grid_h * M, W = ws.grid_w * M;
    if (ws.windows.rank() != 2 || ws.windows.extent(0) != ws.n_windows() * M * M ||
        ws.windows.extent(1) != ws.channels) {
        throw std::invalid_argument("window set inconsistent with its grid metadata");
    }
    Tensor<S> out({ws.channels, H, W});
    kern::window_reverse_apply(ws.windows.ptr(), out.ptr(), ws.channels, H, W, M, false);
    return out;
}

/// Rolls both spatial axes: y[c,i,j] = x[c,(i+d) mod H,(j+d) mod W].
template <class S>
Tensor<S> cyclic_shift(const Tensor<S>& x, int d) {
    if (x.rank() != 3) throw std::invalid_argument("cyclic_shift expects (C,H,W)");
    Tensor<S> y(x.shape);
    kern::cyclic_shift_apply(x.ptr(), y.ptr(), x.extent(0), x.extent(1), x.extent(2), d);
    return y;
}

/// Labels each pixel with its pre-shift region; pairs from different regions
/// must not attend to each other after the cyclic shift.
inline std::vector<int> shift_region_labels(int H, int W, int M, int d) {
    auto axis_label = [&](int i, int n) {
        if (i < n - M) return 0;
        if (i < n - d) return 1;
        return 2;
    };
    std::vector<int> lab(static_cast<std::size_t>(H) * W);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            lab[static_cast<std::size_t>(i) * W + j] = 3 * axis_label(i, H) + axis_label(j, W);
    return lab;
}

/// Builds the per-window additive masks used by shifted-window attention:
/// logits between positions originating from different pre-shift regions get
/// the -inf surrogate; d = floor(M/2).
template <class S>
ShiftMask<S> build_shift_mask(int H, int W, int M, int d) {
    if (M < 1 || H % M != 0 || W % M != 0)
        throw std::invalid_argument("build_shift_mask: M must divide H and W");
    ShiftMask<S> sm;
    sm.window = M;
    const int N = (H / M) * (W / M);
    const int M2 = M * M;
    sm.masks = Tensor<S>::zeros({N, M2, M2});
    if (d == 0) return sm;

    std::vector<int> lab = shift_region_labels(H, W, M, d);
    // shift the label image exactly as the features are shifted
    std::vector<int> shifted(lab.size());
    auto wrap = [](int i, int n) {
        int m = i % n;
        return m < 0 ? m + n : m;
    };
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            shifted[static_cast<std::size_t>(i) * W + j] =
                lab[static_cast<std::size_t>(wrap(i + d, H)) * W + wrap(j + d, W)];

    const int gw = W / M;
    const S ninf = neg_inf_surrogate<S>();
    for (int n = 0; n < N; ++n) {
        const int wi = n / gw, wj = n % gw;
        S* mask = sm.masks.ptr() + static_cast<std::int64_t>(n) * M2 * M2;
        for (int p = 0; p < M2; ++p) {
            int pl = shifted[static_cast<std::size_t>(wi * M + p / M) * W + (wj * M + p % M)];
            for (int q = 0; q < M2; ++q) {
                int ql = shifted[static_cast<std::size_t>(wi * M + q / M) * W + (wj * M + q % M)];
                if (pl != ql) mask[static_cast<std::int64_t>(p) * M2 + q] = ninf;
            }
        }
    }
    return sm;
}

/// Index map from position pairs to relative-position bias table entries.
/// Table has (2M-1)^2 entries; entry depends only on the coordinate offset.
inline std::vector<int> relpos_index_map(int M) {
    const int M2 = M * M;
    std::vector<int> idx(static_cast<std::size_t>(M2) * M2);
    for (int p = 0; p < M2; ++p) {
        int pi = p / M, pj = p % M;
        for (int q = 0; q < M2; ++q) {
            int qi = q / M, qj = q % M;
            int di = pi - qi + M - 1;
            int dj = pj - qj + M - 1;
            idx[static_cast<std::size_t>(p) * M2 + q] = di * (2 * M - 1) + dj;
        }
    }
    return idx;
}

/// Precomputed geometry for windowed attention at one (H, W, M, shifted)
/// configuration; shared by every attention call in a block step.
template <class S>
struct AttnGeometry {
    int H = 0, W = 0, M = 0;
    int shift = 0; // 0 for the unshifted variant, floor(M/2) otherwise
    int n_windows = 0;
    std::vector<int> bias_idx;          // (M^2)^2 table indices
    std::shared_ptr<Tensor<S>> masks;   // nullptr when shift == 0

    int m2() const { return M * M; }
    const S* mask_ptr() const { return masks ? masks->ptr() : nullptr; }
};

template <class S>
std::shared_ptr<const AttnGeometry<S>> make_attn_geometry(int H, int W, int M, bool shifted) {
    auto g = std::make_shared<AttnGeometry<S>>();
    g->H = H;
    g->W = W;
    g->M = M;
    g->shift = shifted ? M / 2 : 0;
    g->n_windows = (H / M) * (W / M);
    g->bias_idx = relpos_index_map(M);
    if (g->shift > 0) {
        auto sm = build_shift_mask<S>(H, W, M, g->shift);
        g->masks = std::make_shared<Tensor<S>>(std::move(sm.masks));
    }
    return g;
}

} // namespace ssrt
