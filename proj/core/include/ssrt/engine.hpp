#pragma once

// Two interchangeable execution engines over the same kernels:
//   TapedEngine  - records every op on a Tape for reverse-mode differentiation
//   EagerEngine  - evaluates immediately, keeps no history (inference)
// Network code is written once, templated on the engine.

#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssrt/kern.hpp"
#include "ssrt/tape.hpp"
#include "ssrt/tensor.hpp"
#include "ssrt/windowing.hpp"

namespace ssrt {

namespace detail {

template <class S>
void check_linear_shapes(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* b) {
    if (x.rank() < 1 || w.rank() != 2)
        throw std::invalid_argument("linear: x " + shape_str(x.shape) + ", w " + shape_str(w.shape));
    if (x.shape.back() != w.extent(0))
        throw std::invalid_argument("linear: inner extents disagree, x " + shape_str(x.shape) +
                                    " vs w " + shape_str(w.shape));
    if (b && (b->rank() != 1 || b->extent(0) != w.extent(1)))
        throw std::invalid_argument("linear: bias " + shape_str(b->shape) + " vs w " +
                                    shape_str(w.shape));
}

inline Shape linear_out_shape(const Shape& x, int n) {
    Shape out = x;
    out.back() = n;
    return out;
}

template <class S>
std::pair<std::int64_t, int> as_rows(const Tensor<S>& x) {
    int n = x.shape.back();
    return {x.numel() / n, n};
}

} // namespace detail

// ------------------------------------------------------------------------
// TapedEngine
// ------------------------------------------------------------------------

template <class S>
class TapedEngine {
public:
    using Scalar = S;
    using H = Var;
    static constexpr bool taped = true;

    explicit TapedEngine(Tape<S>& tape) : tape_(&tape) {}

    Tape<S>& tape() { return *tape_; }
    const Tensor<S>& val(H h) const { return tape_->val(h); }
    Tensor<S>& grad(H h) { return tape_->grad(h); }

    H constant(Tensor<S> t, const char* kind = "const") { return tape_->leaf(std::move(t), kind); }
    H zeros(Shape sh) { return constant(Tensor<S>::zeros(std::move(sh)), "zeros"); }

    H param(const std::string& name, const Tensor<S>& t) {
        H v = tape_->leaf(t, "param");
        bound_.emplace_back(name, v);
        return v;
    }

    const std::vector<std::pair<std::string, H>>& bound_params() const { return bound_; }

    /// Gradient of a bound parameter after backward() (zeros if untouched).
    Tensor<S> param_grad(H h) {
        if (tape_->has_grad(h)) return tape_->grad(h);
        return Tensor<S>::zeros(tape_->val(h).shape);
    }

    // ---- elementwise ----

    H add(H a, H b) {
        const Tensor<S>&av = val(a), &bv = val(b);
        check_same_shape(av, bv, "add");
        Tensor<S> out(av.shape);
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] + bv[i];
        return tape_->push(std::move(out),
                           [a, b](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S>&da = t.grad(a), &db = t.grad(b);
                               for (std::int64_t i = 0; i < g.numel(); ++i) {
                                   da[i] += g[i];
                                   db[i] += g[i];
                               }
                           },
                           "add");
    }

    H sub(H a, H b) {
        const Tensor<S>&av = val(a), &bv = val(b);
        check_same_shape(av, bv, "sub");
        Tensor<S> out(av.shape);
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] - bv[i];
        return tape_->push(std::move(out),
                           [a, b](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S>&da = t.grad(a), &db = t.grad(b);
                               for (std::int64_t i = 0; i < g.numel(); ++i) {
                                   da[i] += g[i];
                                   db[i] -= g[i];
                               }
                           },
                           "sub");
    }

    H mul(H a, H b) {
        const Tensor<S>&av = val(a), &bv = val(b);
        check_same_shape(av, bv, "mul");
        Tensor<S> out(av.shape);
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = av[i] * bv[i];
        return tape_->push(std::move(out),
                           [a, b](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               const Tensor<S>&av = t.val(a), &bv = t.val(b);
                               {
                                   Tensor<S>& da = t.grad(a);
                                   for (std::int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * bv[i];
                               }
                               {
                                   Tensor<S>& db = t.grad(b);
                                   for (std::int64_t i = 0; i < g.numel(); ++i) db[i] += g[i] * av[i];
                               }
                           },
                           "mul");
    }

    /// y = scale*x + shift, elementwise with scalar coefficients.
    H affine(H x, S scale, S shift) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape);
        for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = scale * xv[i] + shift;
        return tape_->push(std::move(out),
                           [x, scale](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S>& dx = t.grad(x);
                               for (std::int64_t i = 0; i < g.numel(); ++i) dx[i] += scale * g[i];
                           },
                           "affine");
    }

    H one_minus(H x) { return affine(x, S(-1), S(1)); }

    H act(H x, kern::Act a, const char* kind = "act") {
        const Tensor<S>& xv = val(x);
        Tensor<S> out(xv.shape);
        kern::act_fwd(a, xv.ptr(), out.ptr(), xv.numel());
        return tape_->push(std::move(out),
                           [x, a](Tape<S>& t, Var o) {
                               const Tensor<S>&g = t.grad(o), &ov = t.val(o), &xv = t.val(x);
                               kern::act_bwd(a, xv.ptr(), ov.ptr(), g.ptr(), t.grad(x).ptr(),
                                             g.numel());
                           },
                           kind);
    }

    H tanh(H x) { return act(x, kern::Act::Tanh, "tanh"); }
    H relu(H x) { return act(x, kern::Act::Relu, "relu"); }
    H tanh_relu(H x) { return act(x, kern::Act::TanhRelu, "tanh_relu"); }
    H gelu(H x) { return act(x, kern::Act::Gelu, "gelu"); }

    // ---- linear algebra ----

    H linear(H x, H w, H b = H{}, const char* kind = "linear") {
        const Tensor<S>&xv = val(x), &wv = val(w);
        const Tensor<S>* bv = b.valid() ? &val(b) : nullptr;
        detail::check_linear_shapes(xv, wv, bv);
        auto [rows, k] = detail::as_rows(xv);
        int n = wv.extent(1);
        Tensor<S> out(detail::linear_out_shape(xv.shape, n));
        kern::linear_fwd(xv.ptr(), wv.ptr(), bv ? bv->ptr() : nullptr, out.ptr(),
                         static_cast<int>(rows), k, n);
        return tape_->push(std::move(out),
                           [x, w, b, rows = static_cast<int>(rows), k, n](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               const Tensor<S>&xv = t.val(x), &wv = t.val(w);
                               kern::linear_bwd_x(g.ptr(), wv.ptr(), t.grad(x).ptr(), rows, k, n);
                               kern::linear_bwd_w(xv.ptr(), g.ptr(), t.grad(w).ptr(), rows, k, n);
                               if (b.valid()) kern::colsum_acc(g.ptr(), t.grad(b).ptr(), rows, n);
                           },
                           kind);
    }

    /// Two-layer MLP with an activation between; stores only the output and
    /// recomputes the hidden layer in the backward pass.
    H mlp(H x, H w1, H b1, H w2, H b2, kern::Act a = kern::Act::Gelu) {
        const Tensor<S>&xv = val(x), &w1v = val(w1), &w2v = val(w2);
        detail::check_linear_shapes(xv, w1v, &val(b1));
        auto [rows, c] = detail::as_rows(xv);
        int ch = w1v.extent(1);
        if (w2v.extent(0) != ch || w2v.extent(1) != c)
            throw std::invalid_argument("mlp: w2 " + shape_str(w2v.shape) + " incompatible with w1 " +
                                        shape_str(w1v.shape));
        std::vector<S> h(static_cast<std::size_t>(rows) * ch);
        kern::linear_fwd(xv.ptr(), w1v.ptr(), val(b1).ptr(), h.data(), static_cast<int>(rows), c, ch);
        kern::act_fwd(a, h.data(), h.data(), static_cast<std::int64_t>(rows) * ch);
        Tensor<S> out(xv.shape);
        kern::linear_fwd(h.data(), w2v.ptr(), val(b2).ptr(), out.ptr(), static_cast<int>(rows), ch, c);
        return tape_->push(
            std::move(out),
            [x, w1, b1, w2, b2, a, rows = static_cast<int>(rows), c, ch](Tape<S>& t, Var o) {
                const Tensor<S>& g = t.grad(o);
                const Tensor<S>&xv = t.val(x), &w1v = t.val(w1), &w2v = t.val(w2);
                std::vector<S> hpre(static_cast<std::size_t>(rows) * ch);
                std::vector<S> hact(static_cast<std::size_t>(rows) * ch);
                kern::linear_fwd(xv.ptr(), w1v.ptr(), t.val(b1).ptr(), hpre.data(), rows, c, ch);
                kern::act_fwd(a, hpre.data(), hact.data(), static_cast<std::int64_t>(rows) * ch);
                // dh = g * w2^T ; dw2 += hact^T g ; db2 += colsum g
                std::vector<S> dh(static_cast<std::size_t>(rows) * ch, S(0));
                kern::linear_bwd_x(g.ptr(), w2v.ptr(), dh.data(), rows, ch, c);
                kern::linear_bwd_w(hact.data(), g.ptr(), t.grad(w2).ptr(), rows, ch, c);
                kern::colsum_acc(g.ptr(), t.grad(b2).ptr(), rows, c);
                // through activation
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(rows) * ch; ++i)
                    dh[static_cast<std::size_t>(i)] *= kern::act_deriv(a, hpre[static_cast<std::size_t>(i)],
                                                                       hact[static_cast<std::size_t>(i)]);
                kern::linear_bwd_x(dh.data(), w1v.ptr(), t.grad(x).ptr(), rows, c, ch);
                kern::linear_bwd_w(xv.ptr(), dh.data(), t.grad(w1).ptr(), rows, c, ch);
                kern::colsum_acc(dh.data(), t.grad(b1).ptr(), rows, ch);
            },
            "mlp");
    }

    /// Two-layer pixelwise MLP on a channels-first (C,...) tensor: axis 0 is
    /// the channel axis, all remaining axes are independent positions.
    H pixel_mlp(H x, H w1, H b1, H w2, H b2, kern::Act a = kern::Act::Gelu) {
        const Tensor<S>&xv = val(x), &w1v = val(w1), &w2v = val(w2);
        int c = xv.extent(0);
        if (w1v.rank() != 2 || w1v.extent(0) != c || w2v.extent(0) != w1v.extent(1) ||
            w2v.extent(1) != c)
            throw std::invalid_argument("pixel_mlp: x " + shape_str(xv.shape) + ", w1 " +
                                        shape_str(w1v.shape) + ", w2 " + shape_str(w2v.shape));
        int ch = w1v.extent(1);
        std::int64_t pixels = xv.numel() / c;
        std::vector<S> h(static_cast<std::size_t>(ch) * pixels);
        kern::pixel_linear_fwd(xv.ptr(), w1v.ptr(), val(b1).ptr(), h.data(), c, ch, pixels);
        kern::act_fwd(a, h.data(), h.data(), static_cast<std::int64_t>(ch) * pixels);
        Tensor<S> out(xv.shape);
        kern::pixel_linear_fwd(h.data(), w2v.ptr(), val(b2).ptr(), out.ptr(), ch, c, pixels);
        return tape_->push(
            std::move(out),
            [x, w1, b1, w2, b2, a, c, ch, pixels](Tape<S>& t, Var o) {
                const Tensor<S>& g = t.grad(o);
                const Tensor<S>&xv = t.val(x), &w1v = t.val(w1), &w2v = t.val(w2);
                std::vector<S> hpre(static_cast<std::size_t>(ch) * pixels);
                std::vector<S> hact(static_cast<std::size_t>(ch) * pixels);
                kern::pixel_linear_fwd(xv.ptr(), w1v.ptr(), t.val(b1).ptr(), hpre.data(), c, ch,
                                       pixels);
                kern::act_fwd(a, hpre.data(), hact.data(), static_cast<std::int64_t>(ch) * pixels);
                std::vector<S> dh(static_cast<std::size_t>(ch) * pixels, S(0));
                kern::pixel_linear_bwd(hact.data(), w2v.ptr(), g.ptr(), dh.data(),
                                       t.grad(w2).ptr(), t.grad(b2).ptr(), ch, c, pixels);
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(ch) * pixels; ++i)
                    dh[static_cast<std::size_t>(i)] *=
                        kern::act_deriv(a, hpre[static_cast<std::size_t>(i)], hact[static_cast<std::size_t>(i)]);
                kern::pixel_linear_bwd(xv.ptr(), w1v.ptr(), dh.data(), t.grad(x).ptr(),
                                       t.grad(w1).ptr(), t.grad(b1).ptr(), c, ch, pixels);
            },
            "pixel_mlp");
    }

    H softmax_rows(H x) {
        const Tensor<S>& xv = val(x);
        auto [rows, n] = detail::as_rows(xv);
        Tensor<S> out(xv.shape);
        kern::softmax_rows_fwd(xv.ptr(), out.ptr(), rows, n);
        return tape_->push(std::move(out),
                           [x, rows = rows, n = n](Tape<S>& t, Var o) {
                               const Tensor<S>&g = t.grad(o), &p = t.val(o);
                               kern::softmax_rows_bwd(p.ptr(), g.ptr(), t.grad(x).ptr(), rows, n);
                           },
                           "softmax_rows");
    }

    H layer_norm(H x, H gamma, H beta, S eps = S(1e-5)) {
        const Tensor<S>& xv = val(x);
        auto [rows, n] = detail::as_rows(xv);
        Tensor<S> out(xv.shape);
        kern::layer_norm_fwd(xv.ptr(), val(gamma).ptr(), val(beta).ptr(), out.ptr(), rows, n, eps);
        return tape_->push(std::move(out),
                           [x, gamma, beta, eps, rows = rows, n = n](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               kern::layer_norm_bwd(t.val(x).ptr(), t.val(gamma).ptr(), g.ptr(),
                                                    t.grad(x).ptr(), t.grad(gamma).ptr(),
                                                    t.grad(beta).ptr(), rows, n, eps);
                           },
                           "layer_norm");
    }

    // ---- convolutions / resampling ----

    H conv3d(H x, H k, H b = H{}) {
        const Tensor<S>&xv = val(x), &kv = val(k);
        if (xv.rank() != 4 || kv.rank() != 5 || kv.extent(2) != 3 || kv.extent(3) != 3 ||
            kv.extent(4) != 3 || kv.extent(1) != xv.extent(0))
            throw std::invalid_argument("conv3d: x " + shape_str(xv.shape) + ", k " +
                                        shape_str(kv.shape));
        int cin = xv.extent(0), B = xv.extent(1), Hh = xv.extent(2), Ww = xv.extent(3);
        int cout = kv.extent(0);
        Tensor<S> out({cout, B, Hh, Ww});
        kern::conv3d_fwd(xv.ptr(), kv.ptr(), b.valid() ? val(b).ptr() : nullptr, out.ptr(), cin,
                         cout, B, Hh, Ww);
        return tape_->push(std::move(out),
                           [x, k, b, cin, cout, B, Hh, Ww](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               kern::conv3d_bwd(t.val(x).ptr(), t.val(k).ptr(), g.ptr(),
                                                t.grad(x).ptr(), t.grad(k).ptr(),
                                                b.valid() ? t.grad(b).ptr() : nullptr, cin, cout, B,
                                                Hh, Ww);
                           },
                           "conv3d");
    }

    H conv2d_down(H x, H k, H b = H{}) {
        const Tensor<S>&xv = val(x), &kv = val(k);
        if (xv.rank() != 4 || kv.rank() != 4 || kv.extent(2) != 2 || kv.extent(3) != 2 ||
            kv.extent(1) != xv.extent(0))
            throw std::invalid_argument("conv2d_down: x " + shape_str(xv.shape) + ", k " +
                                        shape_str(kv.shape));
        int cin = xv.extent(0), B = xv.extent(1), Hh = xv.extent(2), Ww = xv.extent(3);
        if (Hh % 2 || Ww % 2)
            throw std::invalid_argument("conv2d_down: odd spatial extents " + shape_str(xv.shape));
        int cout = kv.extent(0);
        Tensor<S> out({cout, B, Hh / 2, Ww / 2});
        kern::conv2d_s2_fwd(xv.ptr(), kv.ptr(), b.valid() ? val(b).ptr() : nullptr, out.ptr(), cin,
                            cout, B, Hh, Ww);
        return tape_->push(std::move(out),
                           [x, k, b, cin, cout, B, Hh, Ww](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               kern::conv2d_s2_bwd(t.val(x).ptr(), t.val(k).ptr(), g.ptr(),
                                                   t.grad(x).ptr(), t.grad(k).ptr(),
                                                   b.valid() ? t.grad(b).ptr() : nullptr, cin, cout,
                                                   B, Hh, Ww);
                           },
                           "conv2d_down");
    }

    H conv2d3(H x, H k, H b = H{}) {
        const Tensor<S>&xv = val(x), &kv = val(k);
        if (xv.rank() != 4 || kv.rank() != 4 || kv.extent(2) != 3 || kv.extent(3) != 3 ||
            kv.extent(1) != xv.extent(0))
            throw std::invalid_argument("conv2d3: x " + shape_str(xv.shape) + ", k " +
                                        shape_str(kv.shape));
        int cin = xv.extent(0), B = xv.extent(1), Hh = xv.extent(2), Ww = xv.extent(3);
        int cout = kv.extent(0);
        Tensor<S> out({cout, B, Hh, Ww});
        kern::conv2d3_fwd(xv.ptr(), kv.ptr(), b.valid() ? val(b).ptr() : nullptr, out.ptr(), cin,
                          cout, B, Hh, Ww);
        return tape_->push(std::move(out),
                           [x, k, b, cin, cout, B, Hh, Ww](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               kern::conv2d3_bwd(t.val(x).ptr(), t.val(k).ptr(), g.ptr(),
                                                 t.grad(x).ptr(), t.grad(k).ptr(),
                                                 b.valid() ? t.grad(b).ptr() : nullptr, cin, cout,
                                                 B, Hh, Ww);
                           },
                           "conv2d3");
    }

    H upsample2(H x) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw std::invalid_argument("upsample2 expects (C,B,H,W)");
        int C = xv.extent(0), B = xv.extent(1), Hh = xv.extent(2), Ww = xv.extent(3);
        Tensor<S> out({C, B, 2 * Hh, 2 * Ww});
        kern::upsample2_fwd(xv.ptr(), out.ptr(), C, B, Hh, Ww);
        return tape_->push(std::move(out),
                           [x, C, B, Hh, Ww](Tape<S>& t, Var o) {
                               kern::upsample2_bwd(t.grad(o).ptr(), t.grad(x).ptr(), C, B, Hh, Ww);
                           },
                           "upsample2");
    }

    // ---- layout ----

    H cyclic_shift(H x, int d) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 3) throw std::invalid_argument("cyclic_shift expects (C,H,W)");
        Tensor<S> out(xv.shape);
        kern::cyclic_shift_apply(xv.ptr(), out.ptr(), xv.extent(0), xv.extent(1), xv.extent(2), d);
        int C = xv.extent(0), Hh = xv.extent(1), Ww = xv.extent(2);
        return tape_->push(std::move(out),
                           [x, d, C, Hh, Ww](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S> tmp(g.shape);
                               kern::cyclic_shift_apply(g.ptr(), tmp.ptr(), C, Hh, Ww, -d);
                               Tensor<S>& dx = t.grad(x);
                               for (std::int64_t i = 0; i < tmp.numel(); ++i) dx[i] += tmp[i];
                           },
                           "cyclic_shift");
    }

    H window_partition(H x, int M) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 3) throw std::invalid_argument("window_partition expects (C,H,W)");
        int C = xv.extent(0), Hh = xv.extent(1), Ww = xv.extent(2);
        if (Hh % M || Ww % M)
            throw std::invalid_argument("window size " + std::to_string(M) + " must divide " +
                                        shape_str(xv.shape));
        Tensor<S> out({(Hh / M) * (Ww / M) * M * M, C});
        kern::window_partition_apply(xv.ptr(), out.ptr(), C, Hh, Ww, M);
        return tape_->push(std::move(out),
                           [x, M, C, Hh, Ww](Tape<S>& t, Var o) {
                               kern::window_reverse_apply(t.grad(o).ptr(), t.grad(x).ptr(), C, Hh,
                                                          Ww, M, true);
                           },
                           "window_partition");
    }

    H window_reverse(H w, int C, int Hh, int Ww, int M) {
        const Tensor<S>& wv = val(w);
        if (wv.rank() != 2 || wv.extent(0) != (Hh / M) * (Ww / M) * M * M || wv.extent(1) != C)
            throw std::invalid_argument("window_reverse: windows " + shape_str(wv.shape) +
                                        " inconsistent with (C,H,W,M)");
        Tensor<S> out({C, Hh, Ww});
        kern::window_reverse_apply(wv.ptr(), out.ptr(), C, Hh, Ww, M, false);
        return tape_->push(std::move(out),
                           [w, M, C, Hh, Ww](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S> tmp({(Hh / M) * (Ww / M) * M * M, C});
                               kern::window_partition_apply(g.ptr(), tmp.ptr(), C, Hh, Ww, M);
                               Tensor<S>& dw = t.grad(w);
                               for (std::int64_t i = 0; i < tmp.numel(); ++i) dw[i] += tmp[i];
                           },
                           "window_reverse");
    }

    H concat_cols(H a, H b) {
        const Tensor<S>&av = val(a), &bv = val(b);
        if (av.rank() != 2 || bv.rank() != 2 || av.extent(0) != bv.extent(0))
            throw std::invalid_argument("concat_cols: " + shape_str(av.shape) + " vs " +
                                        shape_str(bv.shape));
        int R = av.extent(0), ca = av.extent(1), cb = bv.extent(1);
        Tensor<S> out({R, ca + cb});
        for (int i = 0; i < R; ++i) {
            std::memcpy(out.ptr() + static_cast<std::int64_t>(i) * (ca + cb),
                        av.ptr() + static_cast<std::int64_t>(i) * ca, sizeof(S) * ca);
            std::memcpy(out.ptr() + static_cast<std::int64_t>(i) * (ca + cb) + ca,
                        bv.ptr() + static_cast<std::int64_t>(i) * cb, sizeof(S) * cb);
        }
        return tape_->push(std::move(out),
                           [a, b, R, ca, cb](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S>&da = t.grad(a), &db = t.grad(b);
                               for (int i = 0; i < R; ++i) {
                                   const S* gr = g.ptr() + static_cast<std::int64_t>(i) * (ca + cb);
                                   for (int j = 0; j < ca; ++j)
                                       da[static_cast<std::int64_t>(i) * ca + j] += gr[j];
                                   for (int j = 0; j < cb; ++j)
                                       db[static_cast<std::int64_t>(i) * cb + j] += gr[ca + j];
                               }
                           },
                           "concat_cols");
    }

    H slice_band(H x, int t) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw std::invalid_argument("slice_band expects (C,B,H,W)");
        int C = xv.extent(0), B = xv.extent(1), Hh = xv.extent(2), Ww = xv.extent(3);
        if (t < 0 || t >= B) throw std::invalid_argument("band index out of range");
        std::int64_t plane = static_cast<std::int64_t>(Hh) * Ww;
        Tensor<S> out({C, Hh, Ww});
        for (int c = 0; c < C; ++c)
            std::memcpy(out.ptr() + c * plane, xv.ptr() + (static_cast<std::int64_t>(c) * B + t) * plane,
                        sizeof(S) * static_cast<std::size_t>(plane));
        return tape_->push(std::move(out),
                           [x, t, C, B, plane](Tape<S>& tp, Var o) {
                               const Tensor<S>& g = tp.grad(o);
                               Tensor<S>& dx = tp.grad(x);
                               for (int c = 0; c < C; ++c) {
                                   S* d = dx.ptr() + (static_cast<std::int64_t>(c) * B + t) * plane;
                                   const S* gs = g.ptr() + c * plane;
                                   for (std::int64_t i = 0; i < plane; ++i) d[i] += gs[i];
                               }
                           },
                           "slice_band");
    }

    H stack_bands(const std::vector<H>& bands) {
        if (bands.empty()) throw std::invalid_argument("stack_bands: empty sequence");
        const Tensor<S>& first = val(bands[0]);
        if (first.rank() != 3) throw std::invalid_argument("stack_bands expects (C,H,W) slices");
        int C = first.extent(0), Hh = first.extent(1), Ww = first.extent(2);
        int B = static_cast<int>(bands.size());
        std::int64_t plane = static_cast<std::int64_t>(Hh) * Ww;
        Tensor<S> out({C, B, Hh, Ww});
        for (int t = 0; t < B; ++t) {
            const Tensor<S>& bv = val(bands[static_cast<std::size_t>(t)]);
            check_same_shape(first, bv, "stack_bands");
            for (int c = 0; c < C; ++c)
                std::memcpy(out.ptr() + (static_cast<std::int64_t>(c) * B + t) * plane,
                            bv.ptr() + c * plane, sizeof(S) * static_cast<std::size_t>(plane));
        }
        return tape_->push(std::move(out),
                           [bands, C, B, plane](Tape<S>& tp, Var o) {
                               const Tensor<S>& g = tp.grad(o);
                               for (int t = 0; t < B; ++t) {
                                   Tensor<S>& db = tp.grad(bands[static_cast<std::size_t>(t)]);
                                   for (int c = 0; c < C; ++c) {
                                       const S* gs = g.ptr() + (static_cast<std::int64_t>(c) * B + t) * plane;
                                       S* d = db.ptr() + c * plane;
                                       for (std::int64_t i = 0; i < plane; ++i) d[i] += gs[i];
                                   }
                               }
                           },
                           "stack_bands");
    }

    /// Reflect-pads the spatial axes of (C,B,H,W) at the bottom/right up to
    /// (Ht, Wt).
    H reflect_pad_hw(H x, int Ht, int Wt) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw std::invalid_argument("reflect_pad_hw expects (C,B,H,W)");
        int C = xv.extent(0), B = xv.extent(1), Hh = xv.extent(2), Ww = xv.extent(3);
        if (Ht < Hh || Wt < Ww) throw std::invalid_argument("reflect_pad_hw: target smaller than input");
        if (Ht == Hh && Wt == Ww) return x;
        Tensor<S> out({C, B, Ht, Wt});
        for (int c = 0; c < C; ++c)
            for (int b = 0; b < B; ++b) {
                const S* src = xv.ptr() + (static_cast<std::int64_t>(c) * B + b) * Hh * Ww;
                S* dst = out.ptr() + (static_cast<std::int64_t>(c) * B + b) * Ht * Wt;
                for (int i = 0; i < Ht; ++i) {
                    int si = kern::reflect_index(i, Hh);
                    for (int j = 0; j < Wt; ++j)
                        dst[static_cast<std::int64_t>(i) * Wt + j] =
                            src[static_cast<std::int64_t>(si) * Ww + kern::reflect_index(j, Ww)];
                }
            }
        return tape_->push(std::move(out),
                           [x, C, B, Hh, Ww, Ht, Wt](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S>& dx = t.grad(x);
                               for (int c = 0; c < C; ++c)
                                   for (int b = 0; b < B; ++b) {
                                       const S* gs = g.ptr() + (static_cast<std::int64_t>(c) * B + b) * Ht * Wt;
                                       S* d = dx.ptr() + (static_cast<std::int64_t>(c) * B + b) * Hh * Ww;
                                       for (int i = 0; i < Ht; ++i) {
                                           int si = kern::reflect_index(i, Hh);
                                           for (int j = 0; j < Wt; ++j)
                                               d[static_cast<std::int64_t>(si) * Ww +
                                                 kern::reflect_index(j, Ww)] +=
                                                   gs[static_cast<std::int64_t>(i) * Wt + j];
                                       }
                                   }
                           },
                           "reflect_pad_hw");
    }

    /// Crops the spatial axes of (C,B,H,W) to the top-left (H0, W0) region.
    H crop_hw(H x, int H0, int W0) {
        const Tensor<S>& xv = val(x);
        if (xv.rank() != 4) throw std::invalid_argument("crop_hw expects (C,B,H,W)");
        int C = xv.extent(0), B = xv.extent(1), Hh = xv.extent(2), Ww = xv.extent(3);
        if (H0 > Hh || W0 > Ww) throw std::invalid_argument("crop_hw: region larger than input");
        if (H0 == Hh && W0 == Ww) return x;
        Tensor<S> out({C, B, H0, W0});
        for (int c = 0; c < C; ++c)
            for (int b = 0; b < B; ++b) {
                const S* src = xv.ptr() + (static_cast<std::int64_t>(c) * B + b) * Hh * Ww;
                S* dst = out.ptr() + (static_cast<std::int64_t>(c) * B + b) * H0 * W0;
                for (int i = 0; i < H0; ++i)
                    std::memcpy(dst + static_cast<std::int64_t>(i) * W0,
                                src + static_cast<std::int64_t>(i) * Ww, sizeof(S) * static_cast<std::size_t>(W0));
            }
        return tape_->push(std::move(out),
                           [x, C, B, Hh, Ww, H0, W0](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S>& dx = t.grad(x);
                               for (int c = 0; c < C; ++c)
                                   for (int b = 0; b < B; ++b) {
                                       const S* gs = g.ptr() + (static_cast<std::int64_t>(c) * B + b) * H0 * W0;
                                       S* d = dx.ptr() + (static_cast<std::int64_t>(c) * B + b) * Hh * Ww;
                                       for (int i = 0; i < H0; ++i)
                                           for (int j = 0; j < W0; ++j)
                                               d[static_cast<std::int64_t>(i) * Ww + j] +=
                                                   gs[static_cast<std::int64_t>(i) * W0 + j];
                                   }
                           },
                           "crop_hw");
    }

    /// Same data, new shape (copying).
    H reshape(H x, Shape sh) {
        const Tensor<S>& xv = val(x);
        if (shape_numel(sh) != xv.numel())
            throw std::invalid_argument("reshape: " + shape_str(xv.shape) + " -> " + shape_str(sh));
        Tensor<S> out(std::move(sh), xv.data);
        return tape_->push(std::move(out),
                           [x](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               Tensor<S>& dx = t.grad(x);
                               for (std::int64_t i = 0; i < g.numel(); ++i) dx[i] += g[i];
                           },
                           "reshape");
    }

    // ---- attention ----

    H attend(H q, H k, H v, H bias_table, std::shared_ptr<const AttnGeometry<S>> geo,
             const char* kind = "attend") {
        const Tensor<S>&qv = val(q), &kv = val(k), &vv = val(v);
        check_same_shape(qv, kv, "attend q/k");
        check_same_shape(qv, vv, "attend q/v");
        int M2 = geo->m2(), N = geo->n_windows, D = qv.extent(1);
        if (qv.extent(0) != N * M2)
            throw std::invalid_argument("attend: rows " + shape_str(qv.shape) +
                                        " inconsistent with geometry");
        S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(D)));
        Tensor<S> out(qv.shape);
        kern::attention_fwd(qv.ptr(), kv.ptr(), vv.ptr(), val(bias_table).ptr(),
                            geo->bias_idx.data(), geo->mask_ptr(), N, M2, D, scale, out.ptr(),
                            static_cast<S*>(nullptr));
        return tape_->push(std::move(out),
                           [q, k, v, bias_table, geo, N, M2, D, scale](Tape<S>& t, Var o) {
                               const Tensor<S>& g = t.grad(o);
                               kern::attention_bwd(t.val(q).ptr(), t.val(k).ptr(), t.val(v).ptr(),
                                                   t.val(bias_table).ptr(), geo->bias_idx.data(),
                                                   geo->mask_ptr(), N, M2, D, scale, g.ptr(),
                                                   t.grad(q).ptr(), t.grad(k).ptr(),
                                                   t.grad(v).ptr(), t.grad(bias_table).ptr());
                           },
                           kind);
    }

    // ---- reductions ----

    H sum(H x) {
        const Tensor<S>& xv = val(x);
        Tensor<S> out = Tensor<S>::scalar(static_cast<S>(kern::sum_all(xv.ptr(), xv.numel())));
        return tape_->push(std::move(out),
                           [x](Tape<S>& t, Var o) {
                               S g = t.grad(o)[0];
                               Tensor<S>& dx = t.grad(x);
                               for (std::int64_t i = 0; i < dx.numel(); ++i) dx[i] += g;
                           },
                           "sum");
    }

    /// sum((a-b)^2) as a fused scalar op.
    H sq_diff_sum(H a, H b) {
        const Tensor<S>&av = val(a), &bv = val(b);
        check_same_shape(av, bv, "sq_diff_sum");
        Tensor<S> out = Tensor<S>::scalar(static_cast<S>(kern::sq_diff_sum(av.ptr(), bv.ptr(), av.numel())));
        return tape_->push(std::move(out),
                           [a, b](Tape<S>& t, Var o) {
                               S g = t.grad(o)[0];
                               const Tensor<S>&av = t.val(a), &bv = t.val(b);
                               Tensor<S>&da = t.grad(a), &db = t.grad(b);
                               for (std::int64_t i = 0; i < av.numel(); ++i) {
                                   S d = S(2) * g * (av[i] - bv[i]);
                                   da[i] += d;
                                   db[i] -= d;
                               }
                           },
                           "sq_diff_sum");
    }

private:
    Tape<S>* tape_;
    std::vector<std::pair<std::string, H>> bound_;
};

// ------------------------------------------------------------------------
// EagerEngine
// ------------------------------------------------------------------------

template <class S>
class EagerEngine {
public:
    using Scalar = S;
    using H = std::shared_ptr<const Tensor<S>>;
    static constexpr bool taped = false;

    const Tensor<S>& val(H h) const { return *h; }

    H constant(Tensor<S> t, const char* kind = "const") {
        note(kind);
        return std::make_shared<Tensor<S>>(std::move(t));
    }
    H zeros(Shape sh) { return constant(Tensor<S>::zeros(std::move(sh)), "zeros"); }

    /// Wraps a parameter without copying; the store must outlive the pass.
    H param(const std::string&, const Tensor<S>& t) {
        note("param");
        return H(&t, [](const Tensor<S>*) {});
    }

    H add(H a, H b) {
        check_same_shape(*a, *b, "add");
        auto out = std::make_shared<Tensor<S>>(a->shape);
        for (std::int64_t i = 0; i < out->numel(); ++i) (*out)[i] = (*a)[i] + (*b)[i];
        note("add");
        return out;
    }

    H sub(H a, H b) {
        check_same_shape(*a, *b, "sub");
        auto out = std::make_shared<Tensor<S>>(a->shape);
        for (std::int64_t i = 0; i < out->numel(); ++i) (*out)[i] = (*a)[i] - (*b)[i];
        note("sub");
        return out;
    }

    H mul(H a, H b) {
        check_same_shape(*a, *b, "mul");
        auto out = std::make_shared<Tensor<S>>(a->shape);
        for (std::int64_t i = 0; i < out->numel(); ++i) (*out)[i] = (*a)[i] * (*b)[i];
        note("mul");
        return out;
    }

    H affine(H x, S scale, S shift) {
        auto out = std::make_shared<Tensor<S>>(x->shape);
        for (std::int64_t i = 0; i < out->numel(); ++i) (*out)[i] = scale * (*x)[i] + shift;
        note("affine");
        return out;
    }

    H one_minus(H x) { return affine(x, S(-1), S(1)); }

    H act(H x, kern::Act a, const char* kind = "act") {
        auto out = std::make_shared<Tensor<S>>(x->shape);
        kern::act_fwd(a, x->ptr(), out->ptr(), x->numel());
        note(kind);
        return out;
    }

    H tanh(H x) { return act(x, kern::Act::Tanh, "tanh"); }
    H relu(H x) { return act(x, kern::Act::Relu, "relu"); }
    H tanh_relu(H x) { return act(x, kern::Act::TanhRelu, "tanh_relu"); }
    H gelu(H x) { return act(x, kern::Act::Gelu, "gelu"); }

    H linear(H x, H w, H b = H{}, const char* kind = "linear") {
        detail::check_linear_shapes(*x, *w, b ? b.get() : nullptr);
        auto [rows, k] = detail::as_rows(*x);
        int n = w->extent(1);
        auto out = std::make_shared<Tensor<S>>(detail::linear_out_shape(x->shape, n));
        kern::linear_fwd(x->ptr(), w->ptr(), b ? b->ptr() : nullptr, out->ptr(),
                         static_cast<int>(rows), k, n);
        note(kind);
        return out;
    }

    H mlp(H x, H w1, H b1, H w2, H b2, kern::Act a = kern::Act::Gelu) {
        detail::check_linear_shapes(*x, *w1, b1.get());
        auto [rows, c] = detail::as_rows(*x);
        int ch = w1->extent(1);
        if (w2->extent(0) != ch || w2->extent(1) != c)
            throw std::invalid_argument("mlp: w2 " + shape_str(w2->shape) + " incompatible with w1 " +
                                        shape_str(w1->shape));
        std::vector<S> h(static_cast<std::size_t>(rows) * ch);
        kern::linear_fwd(x->ptr(), w1->ptr(), b1->ptr(), h.data(), static_cast<int>(rows), c, ch);
        kern::act_fwd(a, h.data(), h.data(), static_cast<std::int64_t>(rows) * ch);
        auto out = std::make_shared<Tensor<S>>(x->shape);
        kern::linear_fwd(h.data(), w2->ptr(), b2->ptr(), out->ptr(), static_cast<int>(rows), ch, c);
        note("mlp");
        return out;
    }

    H pixel_mlp(H x, H w1, H b1, H w2, H b2, kern::Act a = kern::Act::Gelu) {
        int c = x->extent(0);
        if (w1->rank() != 2 || w1->extent(0) != c || w2->extent(0) != w1->extent(1) ||
            w2->extent(1) != c)
            throw std::invalid_argument("pixel_mlp: x " + shape_str(x->shape) + ", w1 " +
                                        shape_str(w1->shape) + ", w2 " + shape_str(w2->shape));
        int ch = w1->extent(1);
        std::int64_t pixels = x->numel() / c;
        std::vector<S> h(static_cast<std::size_t>(ch) * pixels);
        kern::pixel_linear_fwd(x->ptr(), w1->ptr(), b1->ptr(), h.data(), c, ch, pixels);
        kern::act_fwd(a, h.data(), h.data(), static_cast<std::int64_t>(ch) * pixels);
        auto out = std::make_shared<Tensor<S>>(x->shape);
        kern::pixel_linear_fwd(h.data(), w2->ptr(), b2->ptr(), out->ptr(), ch, c, pixels);
        note("pixel_mlp");
        return out;
    }

    H softmax_rows(H x) {
        auto [rows, n] = detail::as_rows(*x);
        auto out = std::make_shared<Tensor<S>>(x->shape);
        kern::softmax_rows_fwd(x->ptr(), out->ptr(), rows, n);
        note("softmax_rows");
        return out;
    }

    H layer_norm(H x, H gamma, H beta, S eps = S(1e-5)) {
        auto [rows, n] = detail::as_rows(*x);
        auto out = std::make_shared<Tensor<S>>(x->shape);
        kern::layer_norm_fwd(x->ptr(), gamma->ptr(), beta->ptr(), out->ptr(), rows, n, eps);
        note("layer_norm");
        return out;
    }

    H conv3d(H x, H k, H b = H{}) {
        if (x->rank() != 4 || k->rank() != 5 || k->extent(1) != x->extent(0))
            throw std::invalid_argument("conv3d: x " + shape_str(x->shape) + ", k " +
                                        shape_str(k->shape));
        auto out = std::make_shared<Tensor<S>>(
            Shape{k->extent(0), x->extent(1), x->extent(2), x->extent(3)});
        kern::conv3d_fwd(x->ptr(), k->ptr(), b ? b->ptr() : nullptr, out->ptr(), x->extent(0),
                         k->extent(0), x->extent(1), x->extent(2), x->extent(3));
        note("conv3d");
        return out;
    }

    H conv2d_down(H x, H k, H b = H{}) {
        if (x->extent(2) % 2 || x->extent(3) % 2)
            throw std::invalid_argument("conv2d_down: odd spatial extents " + shape_str(x->shape));
        auto out = std::make_shared<Tensor<S>>(
            Shape{k->extent(0), x->extent(1), x->extent(2) / 2, x->extent(3) / 2});
        kern::conv2d_s2_fwd(x->ptr(), k->ptr(), b ? b->ptr() : nullptr, out->ptr(), x->extent(0),
                            k->extent(0), x->extent(1), x->extent(2), x->extent(3));
        note("conv2d_down");
        return out;
    }

    H conv2d3(H x, H k, H b = H{}) {
        auto out = std::make_shared<Tensor<S>>(
            Shape{k->extent(0), x->extent(1), x->extent(2), x->extent(3)});
        kern::conv2d3_fwd(x->ptr(), k->ptr(), b ? b->ptr() : nullptr, out->ptr(), x->extent(0),
                          k->extent(0), x->extent(1), x->extent(2), x->extent(3));
        note("conv2d3");
        return out;
    }

    H upsample2(H x) {
        auto out = std::make_shared<Tensor<S>>(
            Shape{x->extent(0), x->extent(1), 2 * x->extent(2), 2 * x->extent(3)});
        kern::upsample2_fwd(x->ptr(), out->ptr(), x->extent(0), x->extent(1), x->extent(2),
                            x->extent(3));
        note("upsample2");
        return out;
    }

    H cyclic_shift(H x, int d) {
        auto out = std::make_shared<Tensor<S>>(x->shape);
        kern::cyclic_shift_apply(x->ptr(), out->ptr(), x->extent(0), x->extent(1), x->extent(2), d);
        note("cyclic_shift");
        return out;
    }

    H window_partition(H x, int M) {
        int C = x->extent(0), Hh = x->extent(1), Ww = x->extent(2);
        if (Hh % M || Ww % M)
            throw std::invalid_argument("window size " + std::to_string(M) + " must divide " +
                                        shape_str(x->shape));
        auto out = std::make_shared<Tensor<S>>(Shape{(Hh / M) * (Ww / M) * M * M, C});
        kern::window_partition_apply(x->ptr(), out->ptr(), C, Hh, Ww, M);
        note("window_partition");
        return out;
    }

    H window_reverse(H w, int C, int Hh, int Ww, int M) {
        auto out = std::make_shared<Tensor<S>>(Shape{C, Hh, Ww});
        kern::window_reverse_apply(w->ptr(), out->ptr(), C, Hh, Ww, M, false);
        note("window_reverse");
        return out;
    }

    H concat_cols(H a, H b) {
        int R = a->extent(0), ca = a->extent(1), cb = b->extent(1);
        if (b->extent(0) != R)
            throw std::invalid_argument("concat_cols: " + shape_str(a->shape) + " vs " +
                                        shape_str(b->shape));
        auto out = std::make_shared<Tensor<S>>(Shape{R, ca + cb});
        for (int i = 0; i < R; ++i) {
            std::memcpy(out->ptr() + static_cast<std::int64_t>(i) * (ca + cb),
                        a->ptr() + static_cast<std::int64_t>(i) * ca, sizeof(S) * ca);
            std::memcpy(out->ptr() + static_cast<std::int64_t>(i) * (ca + cb) + ca,
                        b->ptr() + static_cast<std::int64_t>(i) * cb, sizeof(S) * cb);
        }
        note("concat_cols");
        return out;
    }

    H slice_band(H x, int t) {
        int C = x->extent(0), B = x->extent(1), Hh = x->extent(2), Ww = x->extent(3);
        if (t < 0 || t >= B) throw std::invalid_argument("band index out of range");
        std::int64_t plane = static_cast<std::int64_t>(Hh) * Ww;
        auto out = std::make_shared<Tensor<S>>(Shape{C, Hh, Ww});
        for (int c = 0; c < C; ++c)
            std::memcpy(out->ptr() + c * plane, x->ptr() + (static_cast<std::int64_t>(c) * B + t) * plane,
                        sizeof(S) * static_cast<std::size_t>(plane));
        note("slice_band");
        return out;
    }

    H stack_bands(const std::vector<H>& bands) {
        if (bands.empty()) throw std::invalid_argument("stack_bands: empty sequence");
        int C = bands[0]->extent(0), Hh = bands[0]->extent(1), Ww = bands[0]->extent(2);
        int B = static_cast<int>(bands.size());
        std::int64_t plane = static_cast<std::int64_t>(Hh) * Ww;
        auto out = std::make_shared<Tensor<S>>(Shape{C, B, Hh, Ww});
        for (int t = 0; t < B; ++t) {
            check_same_shape(*bands[0], *bands[static_cast<std::size_t>(t)], "stack_bands");
            for (int c = 0; c < C; ++c)
                std::memcpy(out->ptr() + (static_cast<std::int64_t>(c) * B + t) * plane,
                            bands[static_cast<std::size_t>(t)]->ptr() + c * plane,
                            sizeof(S) * static_cast<std::size_t>(plane));
        }
        note("stack_bands");
        return out;
    }

    H reflect_pad_hw(H x, int Ht, int Wt) {
        int C = x->extent(0), B = x->extent(1), Hh = x->extent(2), Ww = x->extent(3);
        if (Ht < Hh || Wt < Ww) throw std::invalid_argument("reflect_pad_hw: target smaller than input");
        if (Ht == Hh && Wt == Ww) return x;
        auto out = std::make_shared<Tensor<S>>(Shape{C, B, Ht, Wt});
        for (int c = 0; c < C; ++c)
            for (int b = 0; b < B; ++b) {
                const S* src = x->ptr() + (static_cast<std::int64_t>(c) * B + b) * Hh * Ww;
                S* dst = out->ptr() + (static_cast<std::int64_t>(c) * B + b) * Ht * Wt;
                for (int i = 0; i < Ht; ++i) {
                    int si = kern::reflect_index(i, Hh);
                    for (int j = 0; j < Wt; ++j)
                        dst[static_cast<std::int64_t>(i) * Wt + j] =
                            src[static_cast<std::int64_t>(si) * Ww + kern::reflect_index(j, Ww)];
                }
            }
        note("reflect_pad_hw");
        return out;
    }

    H crop_hw(H x, int H0, int W0) {
        int C = x->extent(0), B = x->extent(1), Hh = x->extent(2), Ww = x->extent(3);
        if (H0 > Hh || W0 > Ww) throw std::invalid_argument("crop_hw: region larger than input");
        if (H0 == Hh && W0 == Ww) return x;
        auto out = std::make_shared<Tensor<S>>(Shape{C, B, H0, W0});
        for (int c = 0; c < C; ++c)
            for (int b = 0; b < B; ++b) {
                const S* src = x->ptr() + (static_cast<std::int64_t>(c) * B + b) * Hh * Ww;
                S* dst = out->ptr() + (static_cast<std::int64_t>(c) * B + b) * H0 * W0;
                for (int i = 0; i < H0; ++i)
                    std::memcpy(dst + static_cast<std::int64_t>(i) * W0,
                                src + static_cast<std::int64_t>(i) * Ww, sizeof(S) * static_cast<std::size_t>(W0));
            }
        note("crop_hw");
        return out;
    }

    H reshape(H x, Shape sh) {
        if (shape_numel(sh) != x->numel())
            throw std::invalid_argument("reshape: " + shape_str(x->shape) + " -> " + shape_str(sh));
        note("reshape");
        return std::make_shared<Tensor<S>>(std::move(sh), x->data);
    }

    H attend(H q, H k, H v, H bias_table, std::shared_ptr<const AttnGeometry<S>> geo,
             const char* kind = "attend") {
        check_same_shape(*q, *k, "attend q/k");
        int M2 = geo->m2(), N = geo->n_windows, D = q->extent(1);
        if (q->extent(0) != N * M2)
            throw std::invalid_argument("attend: rows " + shape_str(q->shape) +
                                        " inconsistent with geometry");
        S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(D)));
        auto out = std::make_shared<Tensor<S>>(q->shape);
        kern::attention_fwd(q->ptr(), k->ptr(), v->ptr(), bias_table->ptr(), geo->bias_idx.data(),
                            geo->mask_ptr(), N, M2, D, scale, out->ptr(), static_cast<S*>(nullptr));
        note(kind);
        return out;
    }

    H sum(H x) {
        note("sum");
        return std::make_shared<Tensor<S>>(
            Tensor<S>::scalar(static_cast<S>(kern::sum_all(x->ptr(), x->numel()))));
    }

    H sq_diff_sum(H a, H b) {
        check_same_shape(*a, *b, "sq_diff_sum");
        note("sq_diff_sum");
        return std::make_shared<Tensor<S>>(
            Tensor<S>::scalar(static_cast<S>(kern::sq_diff_sum(a->ptr(), b->ptr(), a->numel()))));
    }

    std::size_t count(const std::string& kind) const {
        auto it = counts_.find(kind);
        return it == counts_.end() ? 0 : it->second;
    }

private:
    void note(const char* kind) { ++counts_[kind]; }
    std::unordered_map<std::string, std::size_t> counts_;
};

} // namespace ssrt
