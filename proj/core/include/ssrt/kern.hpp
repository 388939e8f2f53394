#pragma once

// Numerical kernels shared by the taped (training) and eager (inference)
// execution paths. All layouts are row-major; no aliasing between inputs
// and outputs unless stated.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#include "ssrt/tensor.hpp"

namespace ssrt::kern {

// ---------------------------------------------------------------- gemm ----

/// C(m x n) = alpha * op(A) op(B) + beta * C, row-major.
/// op(A) is m x k, op(B) is k x n; lda/ldb/ldc are row strides of the
/// stored (untransposed) matrices.
template <class S>
void gemm(bool ta, bool tb, int m, int n, int k, S alpha, const S* A, int lda, const S* B, int ldb,
          S beta, S* C, int ldc) {
    for (int i = 0; i < m; ++i) {
        S* c = C + static_cast<std::size_t>(i) * ldc;
        if (beta == S(0)) {
            for (int j = 0; j < n; ++j) c[j] = S(0);
        } else if (beta != S(1)) {
            for (int j = 0; j < n; ++j) c[j] *= beta;
        }
    }
    if (!ta && !tb) {
        for (int i = 0; i < m; ++i) {
            const S* a = A + static_cast<std::size_t>(i) * lda;
            S* c = C + static_cast<std::size_t>(i) * ldc;
            for (int kk = 0; kk < k; ++kk) {
                S av = alpha * a[kk];
                const S* b = B + static_cast<std::size_t>(kk) * ldb;
                for (int j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
    } else if (!ta && tb) {
        for (int i = 0; i < m; ++i) {
            const S* a = A + static_cast<std::size_t>(i) * lda;
            S* c = C + static_cast<std::size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) {
                const S* b = B + static_cast<std::size_t>(j) * ldb;
                S acc = S(0);
                for (int kk = 0; kk < k; ++kk) acc += a[kk] * b[kk];
                c[j] += alpha * acc;
            }
        }
    } else if (ta && !tb) {
        for (int kk = 0; kk < k; ++kk) {
            const S* a = A + static_cast<std::size_t>(kk) * lda; // row kk of A holds column entries
            const S* b = B + static_cast<std::size_t>(kk) * ldb;
            for (int i = 0; i < m; ++i) {
                S av = alpha * a[i];
                S* c = C + static_cast<std::size_t>(i) * ldc;
                for (int j = 0; j < n; ++j) c[j] += av * b[j];
            }
        }
    } else {
        for (int i = 0; i < m; ++i) {
            S* c = C + static_cast<std::size_t>(i) * ldc;
            for (int j = 0; j < n; ++j) {
                const S* b = B + static_cast<std::size_t>(j) * ldb;
                S acc = S(0);
                for (int kk = 0; kk < k; ++kk) acc += A[static_cast<std::size_t>(kk) * lda + i] * b[kk];
                c[j] += alpha * acc;
            }
        }
    }
}

// ------------------------------------------------------------- linear ----

/// y(R x N) = x(R x K) * w(K x N) [+ b(N)]
template <class S>
void linear_fwd(const S* x, const S* w, const S* b, S* y, int rows, int k, int n) {
    gemm<S>(false, false, rows, n, k, S(1), x, k, w, n, S(0), y, n);
    if (b) {
        for (int i = 0; i < rows; ++i) {
            S* yr = y + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) yr[j] += b[j];
        }
    }
}

template <class S>
void linear_bwd_x(const S* g, const S* w, S* dx, int rows, int k, int n) {
    gemm<S>(false, true, rows, k, n, S(1), g, n, w, n, S(1), dx, k);
}

template <class S>
void linear_bwd_w(const S* x, const S* g, S* dw, int rows, int k, int n) {
    gemm<S>(true, false, k, n, rows, S(1), x, k, g, n, S(1), dw, n);
}

template <class S>
void colsum_acc(const S* g, S* db, int rows, int n) {
    for (int i = 0; i < rows; ++i) {
        const S* gr = g + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) db[j] += gr[j];
    }
}

template <class S>
void rowsum_acc(const S* g, S* db, int rows, int n) {
    for (int i = 0; i < rows; ++i) {
        const S* gr = g + static_cast<std::size_t>(i) * n;
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += gr[j];
        db[i] += static_cast<S>(acc);
    }
}

/// Channels-first pixelwise linear map: x viewed as (C, P), w is (C, Cout),
/// y(Cout, P) = w^T x [+ b per output channel].
template <class S>
void pixel_linear_fwd(const S* x, const S* w, const S* b, S* y, int c, int cout,
                      std::int64_t pixels) {
    gemm<S>(true, false, cout, static_cast<int>(pixels), c, S(1), w, cout, x, static_cast<int>(pixels),
            S(0), y, static_cast<int>(pixels));
    if (b) {
        for (int co = 0; co < cout; ++co) {
            S* yr = y + static_cast<std::int64_t>(co) * pixels;
            for (std::int64_t p = 0; p < pixels; ++p) yr[p] += b[co];
        }
    }
}

template <class S>
void pixel_linear_bwd(const S* x, const S* w, const S* g, S* dx, S* dw, S* db, int c, int cout,
                      std::int64_t pixels) {
    if (dx)
        gemm<S>(false, false, c, static_cast<int>(pixels), cout, S(1), w, cout, g,
                static_cast<int>(pixels), S(1), dx, static_cast<int>(pixels));
    if (dw)
        gemm<S>(false, true, c, cout, static_cast<int>(pixels), S(1), x, static_cast<int>(pixels), g,
                static_cast<int>(pixels), S(1), dw, cout);
    if (db) rowsum_acc(g, db, cout, static_cast<int>(pixels));
}

// -------------------------------------------------------- elementwise ----

enum class Act { Tanh, Relu, TanhRelu, Gelu };

template <class S>
inline S act_eval(Act a, S x) {
    switch (a) {
        case Act::Tanh: return std::tanh(x);
        case Act::Relu: return x > S(0) ? x : S(0);
        case Act::TanhRelu: return x > S(0) ? std::tanh(x) : S(0);
        case Act::Gelu: {
            double xd = static_cast<double>(x);
            return static_cast<S>(0.5 * xd * (1.0 + std::erf(xd * 0.7071067811865475244)));
        }
    }
    return S(0);
}

/// Derivative from the input x and the stored output y.
template <class S>
inline S act_deriv(Act a, S x, S y) {
    switch (a) {
        case Act::Tanh: return S(1) - y * y;
        case Act::Relu: return x > S(0) ? S(1) : S(0);
        case Act::TanhRelu: return x > S(0) ? S(1) - y * y : S(0);
        case Act::Gelu: {
            double xd = static_cast<double>(x);
            double cdf = 0.5 * (1.0 + std::erf(xd * 0.7071067811865475244));
            double pdf = std::exp(-0.5 * xd * xd) * 0.3989422804014326779;
            return static_cast<S>(cdf + xd * pdf);
        }
    }
    return S(0);
}

template <class S>
void act_fwd(Act a, const S* x, S* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = act_eval(a, x[i]);
}

template <class S>
void act_bwd(Act a, const S* x, const S* y, const S* g, S* dx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) dx[i] += g[i] * act_deriv(a, x[i], y[i]);
}

// ------------------------------------------------------------ softmax ----

/// Row softmax with max subtraction; rows of length n.
template <class S>
void softmax_rows_fwd(const S* x, S* p, std::int64_t rows, int n) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * n;
        S* pr = p + r * n;
        S mx = xr[0];
        for (int j = 1; j < n; ++j)
            if (xr[j] > mx) mx = xr[j];
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            double e = std::exp(static_cast<double>(xr[j] - mx));
            pr[j] = static_cast<S>(e);
            sum += e;
        }
        S inv = static_cast<S>(1.0 / sum);
        for (int j = 0; j < n; ++j) pr[j] *= inv;
    }
}

/// dx += p .* (g - <g,p>) per row, from the stored probabilities p.
template <class S>
void softmax_rows_bwd(const S* p, const S* g, S* dx, std::int64_t rows, int n) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* pr = p + r * n;
        const S* gr = g + r * n;
        S* dr = dx + r * n;
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * pr[j];
        S d = static_cast<S>(dot);
        for (int j = 0; j < n; ++j) dr[j] += pr[j] * (gr[j] - d);
    }
}

// --------------------------------------------------------- layer norm ----

/// Per-row normalization over the last axis with affine parameters.
template <class S>
void layer_norm_fwd(const S* x, const S* gamma, const S* beta, S* y, std::int64_t rows, int n,
                    S eps) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * n;
        S* yr = y + r * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += xr[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = xr[j] - mu;
            var += d * d;
        }
        var /= n;
        S inv = static_cast<S>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        for (int j = 0; j < n; ++j) {
            S xh = (xr[j] - static_cast<S>(mu)) * inv;
            yr[j] = xh * gamma[j] + beta[j];
        }
    }
}

template <class S>
void layer_norm_bwd(const S* x, const S* gamma, const S* g, S* dx, S* dgamma, S* dbeta,
                    std::int64_t rows, int n, S eps) {
    for (std::int64_t r = 0; r < rows; ++r) {
        const S* xr = x + r * n;
        const S* gr = g + r * n;
        S* dr = dx + r * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += xr[j];
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            double d = xr[j] - mu;
            var += d * d;
        }
        var /= n;
        double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
        double mean_dy = 0.0, mean_dyxh = 0.0;
        for (int j = 0; j < n; ++j) {
            double xh = (xr[j] - mu) * inv;
            double dy = static_cast<double>(gr[j]) * gamma[j];
            mean_dy += dy;
            mean_dyxh += dy * xh;
            if (dgamma) dgamma[j] += static_cast<S>(static_cast<double>(gr[j]) * xh);
            if (dbeta) dbeta[j] += gr[j];
        }
        mean_dy /= n;
        mean_dyxh /= n;
        for (int j = 0; j < n; ++j) {
            double xh = (xr[j] - mu) * inv;
            double dy = static_cast<double>(gr[j]) * gamma[j];
            dr[j] += static_cast<S>(inv * (dy - mean_dy - xh * mean_dyxh));
        }
    }
}

// --------------------------------------------------------------- conv ----

/// 3-D convolution, kernel 3x3x3, zero padding 1, stride 1.
/// x: (Cin, B, H, W), k: (Cout, Cin, 3, 3, 3), y: (Cout, B, H, W).
template <class S>
void conv3d_fwd(const S* x, const S* k, const S* bias, S* y, int cin, int cout, int B, int H,
                int W) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t vol = static_cast<std::int64_t>(B) * plane;
    for (int co = 0; co < cout; ++co) {
        S* yc = y + co * vol;
        S b0 = bias ? bias[co] : S(0);
        for (std::int64_t i = 0; i < vol; ++i) yc[i] = b0;
        for (int ci = 0; ci < cin; ++ci) {
            const S* xc = x + ci * vol;
            const S* kc = k + (static_cast<std::int64_t>(co) * cin + ci) * 27;
            for (int db = 0; db < 3; ++db)
                for (int di = 0; di < 3; ++di)
                    for (int dj = 0; dj < 3; ++dj) {
                        S w = kc[(db * 3 + di) * 3 + dj];
                        if (w == S(0)) continue;
                        int b_lo = std::max(0, 1 - db), b_hi = std::min(B, B + 1 - db);
                        int i_lo = std::max(0, 1 - di), i_hi = std::min(H, H + 1 - di);
                        int j_lo = std::max(0, 1 - dj), j_hi = std::min(W, W + 1 - dj);
                        for (int b = b_lo; b < b_hi; ++b) {
                            const S* xb = xc + static_cast<std::int64_t>(b + db - 1) * plane;
                            S* yb = yc + static_cast<std::int64_t>(b) * plane;
                            for (int i = i_lo; i < i_hi; ++i) {
                                const S* xrow = xb + static_cast<std::int64_t>(i + di - 1) * W + (dj - 1);
                                S* yrow = yb + static_cast<std::int64_t>(i) * W;
                                for (int j = j_lo; j < j_hi; ++j) yrow[j] += w * xrow[j];
                            }
                        }
                    }
        }
    }
}

template <class S>
void conv3d_bwd(const S* x, const S* k, const S* g, S* dx, S* dk, S* dbias, int cin, int cout,
                int B, int H, int W) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t vol = static_cast<std::int64_t>(B) * plane;
    for (int co = 0; co < cout; ++co) {
        const S* gc = g + co * vol;
        if (dbias) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < vol; ++i) acc += gc[i];
            dbias[co] += static_cast<S>(acc);
        }
        for (int ci = 0; ci < cin; ++ci) {
            const S* xc = x + ci * vol;
            S* dxc = dx ? dx + ci * vol : nullptr;
            const S* kc = k + (static_cast<std::int64_t>(co) * cin + ci) * 27;
            S* dkc = dk ? dk + (static_cast<std::int64_t>(co) * cin + ci) * 27 : nullptr;
            for (int db = 0; db < 3; ++db)
                for (int di = 0; di < 3; ++di)
                    for (int dj = 0; dj < 3; ++dj) {
                        S w = kc[(db * 3 + di) * 3 + dj];
                        int b_lo = std::max(0, 1 - db), b_hi = std::min(B, B + 1 - db);
                        int i_lo = std::max(0, 1 - di), i_hi = std::min(H, H + 1 - di);
                        int j_lo = std::max(0, 1 - dj), j_hi = std::min(W, W + 1 - dj);
                        double kacc = 0.0;
                        for (int b = b_lo; b < b_hi; ++b) {
                            const S* xb = xc + static_cast<std::int64_t>(b + db - 1) * plane;
                            S* dxb = dxc ? dxc + static_cast<std::int64_t>(b + db - 1) * plane : nullptr;
                            const S* gb = gc + static_cast<std::int64_t>(b) * plane;
                            for (int i = i_lo; i < i_hi; ++i) {
                                const S* xrow = xb + static_cast<std::int64_t>(i + di - 1) * W + (dj - 1);
                                const S* grow = gb + static_cast<std::int64_t>(i) * W;
                                if (dxb) {
                                    S* dxrow = dxb + static_cast<std::int64_t>(i + di - 1) * W + (dj - 1);
                                    for (int j = j_lo; j < j_hi; ++j) dxrow[j] += w * grow[j];
                                }
                                if (dkc) {
                                    double acc = 0.0;
                                    for (int j = j_lo; j < j_hi; ++j)
                                        acc += static_cast<double>(xrow[j]) * grow[j];
                                    kacc += acc;
                                }
                            }
                        }
                        if (dkc) dkc[(db * 3 + di) * 3 + dj] += static_cast<S>(kacc);
                    }
        }
    }
}

/// Strided 2x2 spatial convolution per band (downsampling).
/// x: (C, B, H, W) with H, W even; k: (Cout, Cin, 2, 2); y: (Cout, B, H/2, W/2).
template <class S>
void conv2d_s2_fwd(const S* x, const S* k, const S* bias, S* y, int cin, int cout, int B, int H,
                   int W) {
    const int Ho = H / 2, Wo = W / 2;
    const std::int64_t plane_i = static_cast<std::int64_t>(H) * W;
    const std::int64_t plane_o = static_cast<std::int64_t>(Ho) * Wo;
    for (int co = 0; co < cout; ++co) {
        S* yc = y + static_cast<std::int64_t>(co) * B * plane_o;
        S b0 = bias ? bias[co] : S(0);
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(B) * plane_o; ++i) yc[i] = b0;
        for (int ci = 0; ci < cin; ++ci) {
            const S* xc = x + static_cast<std::int64_t>(ci) * B * plane_i;
            const S* kc = k + (static_cast<std::int64_t>(co) * cin + ci) * 4;
            for (int b = 0; b < B; ++b) {
                const S* xb = xc + b * plane_i;
                S* yb = yc + b * plane_o;
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        const S* p = xb + static_cast<std::int64_t>(2 * i) * W + 2 * j;
                        yb[static_cast<std::int64_t>(i) * Wo + j] +=
                            kc[0] * p[0] + kc[1] * p[1] + kc[2] * p[W] + kc[3] * p[W + 1];
                    }
            }
        }
    }
}

template <class S>
void conv2d_s2_bwd(const S* x, const S* k, const S* g, S* dx, S* dk, S* dbias, int cin, int cout,
                   int B, int H, int W) {
    const int Ho = H / 2, Wo = W / 2;
    const std::int64_t plane_i = static_cast<std::int64_t>(H) * W;
    const std::int64_t plane_o = static_cast<std::int64_t>(Ho) * Wo;
    for (int co = 0; co < cout; ++co) {
        const S* gc = g + static_cast<std::int64_t>(co) * B * plane_o;
        if (dbias) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(B) * plane_o; ++i) acc += gc[i];
            dbias[co] += static_cast<S>(acc);
        }
        for (int ci = 0; ci < cin; ++ci) {
            const S* xc = x + static_cast<std::int64_t>(ci) * B * plane_i;
            S* dxc = dx ? dx + static_cast<std::int64_t>(ci) * B * plane_i : nullptr;
            const S* kc = k + (static_cast<std::int64_t>(co) * cin + ci) * 4;
            S* dkc = dk ? dk + (static_cast<std::int64_t>(co) * cin + ci) * 4 : nullptr;
            double k00 = 0, k01 = 0, k10 = 0, k11 = 0;
            for (int b = 0; b < B; ++b) {
                const S* xb = xc + b * plane_i;
                const S* gb = gc + b * plane_o;
                S* dxb = dxc ? dxc + b * plane_i : nullptr;
                for (int i = 0; i < Ho; ++i)
                    for (int j = 0; j < Wo; ++j) {
                        S gv = gb[static_cast<std::int64_t>(i) * Wo + j];
                        const S* p = xb + static_cast<std::int64_t>(2 * i) * W + 2 * j;
                        if (dxb) {
                            S* q = dxb + static_cast<std::int64_t>(2 * i) * W + 2 * j;
                            q[0] += kc[0] * gv;
                            q[1] += kc[1] * gv;
                            q[W] += kc[2] * gv;
                            q[W + 1] += kc[3] * gv;
                        }
                        if (dkc) {
                            k00 += static_cast<double>(p[0]) * gv;
                            k01 += static_cast<double>(p[1]) * gv;
                            k10 += static_cast<double>(p[W]) * gv;
                            k11 += static_cast<double>(p[W + 1]) * gv;
                        }
                    }
            }
            if (dkc) {
                dkc[0] += static_cast<S>(k00);
                dkc[1] += static_cast<S>(k01);
                dkc[2] += static_cast<S>(k10);
                dkc[3] += static_cast<S>(k11);
            }
        }
    }
}

/// 3x3 spatial convolution per band, zero padding 1, stride 1.
template <class S>
void conv2d3_fwd(const S* x, const S* k, const S* bias, S* y, int cin, int cout, int B, int H,
                 int W) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int co = 0; co < cout; ++co) {
        S* yc = y + static_cast<std::int64_t>(co) * B * plane;
        S b0 = bias ? bias[co] : S(0);
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(B) * plane; ++i) yc[i] = b0;
        for (int ci = 0; ci < cin; ++ci) {
            const S* xc = x + static_cast<std::int64_t>(ci) * B * plane;
            const S* kc = k + (static_cast<std::int64_t>(co) * cin + ci) * 9;
            for (int di = 0; di < 3; ++di)
                for (int dj = 0; dj < 3; ++dj) {
                    S w = kc[di * 3 + dj];
                    if (w == S(0)) continue;
                    int i_lo = std::max(0, 1 - di), i_hi = std::min(H, H + 1 - di);
                    int j_lo = std::max(0, 1 - dj), j_hi = std::min(W, W + 1 - dj);
                    for (int b = 0; b < B; ++b) {
                        const S* xb = xc + b * plane;
                        S* yb = yc + b * plane;
                        for (int i = i_lo; i < i_hi; ++i) {
                            const S* xrow = xb + static_cast<std::int64_t>(i + di - 1) * W + (dj - 1);
                            S* yrow = yb + static_cast<std::int64_t>(i) * W;
                            for (int j = j_lo; j < j_hi; ++j) yrow[j] += w * xrow[j];
                        }
                    }
                }
        }
    }
}

template <class S>
void conv2d3_bwd(const S* x, const S* k, const S* g, S* dx, S* dk, S* dbias, int cin, int cout,
                 int B, int H, int W) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int co = 0; co < cout; ++co) {
        const S* gc = g + static_cast<std::int64_t>(co) * B * plane;
        if (dbias) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(B) * plane; ++i) acc += gc[i];
            dbias[co] += static_cast<S>(acc);
        }
        for (int ci = 0; ci < cin; ++ci) {
            const S* xc = x + static_cast<std::int64_t>(ci) * B * plane;
            S* dxc = dx ? dx + static_cast<std::int64_t>(ci) * B * plane : nullptr;
            const S* kc = k + (static_cast<std::int64_t>(co) * cin + ci) * 9;
            S* dkc = dk ? dk + (static_cast<std::int64_t>(co) * cin + ci) * 9 : nullptr;
            for (int di = 0; di < 3; ++di)
                for (int dj = 0; dj < 3; ++dj) {
                    S w = kc[di * 3 + dj];
                    int i_lo = std::max(0, 1 - di), i_hi = std::min(H, H + 1 - di);
                    int j_lo = std::max(0, 1 - dj), j_hi = std::min(W, W + 1 - dj);
                    double kacc = 0.0;
                    for (int b = 0; b < B; ++b) {
                        const S* xb = xc + b * plane;
                        S* dxb = dxc ? dxc + b * plane : nullptr;
                        const S* gb = gc + b * plane;
                        for (int i = i_lo; i < i_hi; ++i) {
                            const S* xrow = xb + static_cast<std::int64_t>(i + di - 1) * W + (dj - 1);
                            const S* grow = gb + static_cast<std::int64_t>(i) * W;
                            if (dxb) {
                                S* dxrow = dxb + static_cast<std::int64_t>(i + di - 1) * W + (dj - 1);
                                for (int j = j_lo; j < j_hi; ++j) dxrow[j] += w * grow[j];
                            }
                            if (dkc) {
                                double acc = 0.0;
                                for (int j = j_lo; j < j_hi; ++j)
                                    acc += static_cast<double>(xrow[j]) * grow[j];
                                kacc += acc;
                            }
                        }
                    }
                    if (dkc) dkc[di * 3 + dj] += static_cast<S>(kacc);
                }
        }
    }
}

/// Nearest-neighbor 2x spatial upsampling on (C, B, H, W).
template <class S>
void upsample2_fwd(const S* x, S* y, int C, int B, int H, int W) {
    const int Ho = 2 * H, Wo = 2 * W;
    for (int c = 0; c < C; ++c)
        for (int b = 0; b < B; ++b) {
            const S* xb = x + (static_cast<std::int64_t>(c) * B + b) * H * W;
            S* yb = y + (static_cast<std::int64_t>(c) * B + b) * Ho * Wo;
            for (int i = 0; i < Ho; ++i) {
                const S* xrow = xb + static_cast<std::int64_t>(i / 2) * W;
                S* yrow = yb + static_cast<std::int64_t>(i) * Wo;
                for (int j = 0; j < Wo; ++j) yrow[j] = xrow[j / 2];
            }
        }
}

template <class S>
void upsample2_bwd(const S* g, S* dx, int C, int B, int H, int W) {
    const int Ho = 2 * H, Wo = 2 * W;
    for (int c = 0; c < C; ++c)
        for (int b = 0; b < B; ++b) {
            const S* gb = g + (static_cast<std::int64_t>(c) * B + b) * Ho * Wo;
            S* xb = dx + (static_cast<std::int64_t>(c) * B + b) * H * W;
            for (int i = 0; i < Ho; ++i) {
                const S* grow = gb + static_cast<std::int64_t>(i) * Wo;
                S* xrow = xb + static_cast<std::int64_t>(i / 2) * W;
                for (int j = 0; j < Wo; ++j) xrow[j / 2] += grow[j];
            }
        }
}

// ---------------------------------------------------------- windowing ----

/// (C, H, W) -> (N*M^2, C): non-overlapping M x M tiles, windows enumerated
/// row-major over the tile grid, positions row-major within a tile.
template <class S>
void window_partition_apply(const S* x, S* out, int C, int H, int W, int M) {
    const int gw = W / M;
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const int gh = H / M;
    for (int wi = 0; wi < gh; ++wi)
        for (int wj = 0; wj < gw; ++wj) {
            int n = wi * gw + wj;
            for (int pi = 0; pi < M; ++pi)
                for (int pj = 0; pj < M; ++pj) {
                    std::int64_t row = (static_cast<std::int64_t>(n) * M + pi) * M + pj;
                    std::int64_t src = static_cast<std::int64_t>(wi * M + pi) * W + (wj * M + pj);
                    S* o = out + row * C;
                    for (int c = 0; c < C; ++c) o[c] = x[c * plane + src];
                }
        }
}

/// Exact inverse of window_partition_apply. With accumulate=true the values
/// are added into `out` (used for gradients).
template <class S>
void window_reverse_apply(const S* win, S* out, int C, int H, int W, int M, bool accumulate) {
    const int gw = W / M;
    const int gh = H / M;
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int wi = 0; wi < gh; ++wi)
        for (int wj = 0; wj < gw; ++wj) {
            int n = wi * gw + wj;
            for (int pi = 0; pi < M; ++pi)
                for (int pj = 0; pj < M; ++pj) {
                    std::int64_t row = (static_cast<std::int64_t>(n) * M + pi) * M + pj;
                    std::int64_t dst = static_cast<std::int64_t>(wi * M + pi) * W + (wj * M + pj);
                    const S* w = win + row * C;
                    for (int c = 0; c < C; ++c) {
                        if (accumulate)
                            out[c * plane + dst] += w[c];
                        else
                            out[c * plane + dst] = w[c];
                    }
                }
        }
}

/// y[c,i,j] = x[c,(i+d) mod H,(j+d) mod W]; negative d inverts.
template <class S>
void cyclic_shift_apply(const S* x, S* y, int C, int H, int W, int d) {
    auto wrap = [](int i, int n) {
        int m = i % n;
        return m < 0 ? m + n : m;
    };
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int c = 0; c < C; ++c) {
        const S* xc = x + c * plane;
        S* yc = y + c * plane;
        for (int i = 0; i < H; ++i) {
            int si = wrap(i + d, H);
            const S* xrow = xc + static_cast<std::int64_t>(si) * W;
            S* yrow = yc + static_cast<std::int64_t>(i) * W;
            for (int j = 0; j < W; ++j) yrow[j] = xrow[wrap(j + d, W)];
        }
    }
}

/// Symmetric reflection (no edge repeat) of index i into [0, n).
inline int reflect_index(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * n - 2;
    int m = i % period;
    if (m < 0) m += period;
    return m < n ? m : period - m;
}

// ---------------------------------------------------------- attention ----

/// Scaled dot-product attention over independent windows.
/// q, k, v: (N*M2, D); bias_table: learned scalars indexed per position pair
/// by bias_idx (M2*M2 entries); masks: nullptr or (N, M2, M2) additive terms.
/// out: (N*M2, D). If probs_out != nullptr it receives the (N, M2, M2)
/// post-softmax attention weights.
template <class S>
void attention_fwd(const S* q, const S* k, const S* v, const S* bias_table, const int* bias_idx,
                   const S* masks, int N, int M2, int D, S scale, S* out, S* probs_out) {
    std::vector<S> logits(static_cast<std::size_t>(M2) * M2);
    for (int n = 0; n < N; ++n) {
        const S* qn = q + static_cast<std::int64_t>(n) * M2 * D;
        const S* kn = k + static_cast<std::int64_t>(n) * M2 * D;
        const S* vn = v + static_cast<std::int64_t>(n) * M2 * D;
        S* on = out + static_cast<std::int64_t>(n) * M2 * D;
        gemm<S>(false, true, M2, M2, D, scale, qn, D, kn, D, S(0), logits.data(), M2);
        const S* mn = masks ? masks + static_cast<std::int64_t>(n) * M2 * M2 : nullptr;
        for (int i = 0; i < M2 * M2; ++i) {
            logits[static_cast<std::size_t>(i)] += bias_table[bias_idx[i]];
            if (mn) logits[static_cast<std::size_t>(i)] += mn[i];
        }
        softmax_rows_fwd<S>(logits.data(), logits.data(), M2, M2);
        if (probs_out)
            std::memcpy(probs_out + static_cast<std::int64_t>(n) * M2 * M2, logits.data(),
                        sizeof(S) * static_cast<std::size_t>(M2) * M2);
        gemm<S>(false, false, M2, D, M2, S(1), logits.data(), M2, vn, D, S(0), on, D);
    }
}

/// Backward pass; recomputes logits and probabilities per window instead of
/// storing them. All gradient buffers are accumulated into.
template <class S>
void attention_bwd(const S* q, const S* k, const S* v, const S* bias_table, const int* bias_idx,
                   const S* masks, int N, int M2, int D, S scale, const S* g_out, S* dq, S* dk,
                   S* dv, S* dbias_table) {
    std::vector<S> probs(static_cast<std::size_t>(M2) * M2);
    std::vector<S> dp(static_cast<std::size_t>(M2) * M2);
    std::vector<S> dlogits(static_cast<std::size_t>(M2) * M2);
    for (int n = 0; n < N; ++n) {
        const S* qn = q + static_cast<std::int64_t>(n) * M2 * D;
        const S* kn = k + static_cast<std::int64_t>(n) * M2 * D;
        const S* vn = v + static_cast<std::int64_t>(n) * M2 * D;
        const S* gn = g_out + static_cast<std::int64_t>(n) * M2 * D;
        gemm<S>(false, true, M2, M2, D, scale, qn, D, kn, D, S(0), probs.data(), M2);
        const S* mn = masks ? masks + static_cast<std::int64_t>(n) * M2 * M2 : nullptr;
        for (int i = 0; i < M2 * M2; ++i) {
            probs[static_cast<std::size_t>(i)] += bias_table[bias_idx[i]];
            if (mn) probs[static_cast<std::size_t>(i)] += mn[i];
        }
        softmax_rows_fwd<S>(probs.data(), probs.data(), M2, M2);
        if (dv)
            gemm<S>(true, false, M2, D, M2, S(1), probs.data(), M2, gn, D, S(1),
                    dv + static_cast<std::int64_t>(n) * M2 * D, D);
        gemm<S>(false, true, M2, M2, D, S(1), gn, D, vn, D, S(0), dp.data(), M2);
        std::fill(dlogits.begin(), dlogits.end(), S(0));
        softmax_rows_bwd<S>(probs.data(), dp.data(), dlogits.data(), M2, M2);
        if (dq)
            gemm<S>(false, false, M2, D, M2, scale, dlogits.data(), M2, kn, D, S(1),
                    dq + static_cast<std::int64_t>(n) * M2 * D, D);
        if (dk)
            gemm<S>(true, false, M2, D, M2, scale, dlogits.data(), M2, qn, D, S(1),
                    dk + static_cast<std::int64_t>(n) * M2 * D, D);
        if (dbias_table)
            for (int i = 0; i < M2 * M2; ++i) dbias_table[bias_idx[i]] += dlogits[static_cast<std::size_t>(i)];
    }
}

// --------------------------------------------------------- reductions ----

template <class S>
double sum_all(const S* x, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <class S>
double sq_diff_sum(const S* a, const S* b, std::int64_t n) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

} // namespace ssrt::kern
