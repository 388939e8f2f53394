#pragma once

// Five-layer encoder-decoder built from bidirectional recurrent-transformer
// blocks: shallow 3-D conv feature extraction, two downsampling encoder
// layers, an upsampling bottleneck, two decoder layers (resampling excluded
// in the last), conv-before-residual per layer, additive skip connections,
// feature/image reconstruction convs and the global residual.

#include <array>
#include <string>
#include <vector>

#include "ssrt/block.hpp"
#include "ssrt/engine.hpp"
#include "ssrt/params.hpp"

namespace ssrt {

struct UnetConfig {
    int channels = 12;
    int window = 8;
    int mlp_ratio = 4;
    bool test_mode = false;     // single block per layer, for gradient checks
    bool outer_residual = true; // add the raw input at the output

    std::array<int, 5> blocks_per_layer() const {
        if (test_mode) return {1, 1, 1, 1, 1};
        return {2, 2, 6, 2, 2};
    }

    /// Pairs of (windowed, shift-windowed) blocks per layer.
    std::array<int, 5> pairs_per_layer() const {
        if (test_mode) return {0, 0, 0, 0, 0};
        return {1, 1, 3, 1, 1};
    }

    /// H and W must be divisible by this after padding (two downsamplings,
    /// then windowing at the coarsest scale).
    int min_divisor() const { return 4 * window; }

    void validate() const {
        if (channels < 2 || channels % 2 != 0)
            throw std::invalid_argument("channels must be even and >= 2, got " +
                                        std::to_string(channels));
        if (window < 1) throw std::invalid_argument("window must be >= 1");
        if (mlp_ratio < 1) throw std::invalid_argument("mlp_ratio must be >= 1");
    }
};

enum class Resample { None, Down, Up };

inline constexpr std::array<Resample, 5> kLayerResample = {Resample::Down, Resample::Down,
                                                           Resample::Up, Resample::Up,
                                                           Resample::None};
inline constexpr std::array<int, 5> kLayerScale = {1, 2, 4, 2, 1};

inline std::string layer_prefix(int i) { return "l" + std::to_string(i) + "."; }
inline std::string block_prefix(int layer, int blk, bool backward) {
    return layer_prefix(layer) + "b" + std::to_string(blk) + (backward ? ".bwd." : ".fwd.");
}

/// Creates every learnable of the denoiser in a deterministic order.
template <class S>
void init_unet_params(ParamStore<S>& ps, const UnetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    const int C = cfg.channels;
    Philox rng(seed, /*stream=*/1);
    auto filt = [&](const std::string& name, Shape sh) {
        int cout = sh[0];
        Tensor<S> t(std::move(sh));
        for (auto& v : t.data) v = static_cast<S>(rng.next_trunc_normal(0.02));
        ps.add(name + ".k", std::move(t));
        ps.add(name + ".b", Tensor<S>::zeros({cout}));
    };

    filt("shallow", {C, 1, 3, 3, 3});
    const auto blocks = cfg.blocks_per_layer();
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < blocks[static_cast<std::size_t>(i)]; ++j) {
            init_block_params(ps, block_prefix(i, j, false), C, cfg.window, cfg.mlp_ratio, rng);
            init_block_params(ps, block_prefix(i, j, true), C, cfg.window, cfg.mlp_ratio, rng);
        }
        filt(layer_prefix(i) + "conv", {C, C, 3, 3, 3});
        if (kLayerResample[static_cast<std::size_t>(i)] == Resample::Down)
            filt(layer_prefix(i) + "samp", {C, C, 2, 2});
        else if (kLayerResample[static_cast<std::size_t>(i)] == Resample::Up)
            filt(layer_prefix(i) + "samp", {C, C, 3, 3});
    }
    filt("featrec", {C, C, 3, 3, 3});
    filt("imgrec", {1, C, 3, 3, 3});
}

/// Number of learnable scalars for a config; a pure function of (C, M).
template <class S = float>
std::int64_t unet_param_count(const UnetConfig& cfg) {
    ParamStore<S> ps;
    init_unet_params(ps, cfg, 0);
    return ps.total_scalars();
}

/// All weight handles of one pass, bound to an engine.
template <class E>
struct UnetParams {
    using H = typename E::H;
    struct Layer {
        std::vector<std::pair<BlockParams<E>, BlockParams<E>>> blocks; // (fwd, bwd)
        H conv_k, conv_b;
        H samp_k, samp_b;
    };
    H shallow_k, shallow_b;
    std::array<Layer, 5> layers;
    H featrec_k, featrec_b, imgrec_k, imgrec_b;
};

template <class E>
UnetParams<E> bind_unet_params(E& eng, const ParamStore<typename E::Scalar>& ps,
                               const UnetConfig& cfg) {
    auto p = [&](const std::string& name) { return eng.param(name, ps.at(name)); };
    UnetParams<E> u;
    u.shallow_k = p("shallow.k");
    u.shallow_b = p("shallow.b");
    const auto blocks = cfg.blocks_per_layer();
    for (int i = 0; i < 5; ++i) {
        auto& layer = u.layers[static_cast<std::size_t>(i)];
        for (int j = 0; j < blocks[static_cast<std::size_t>(i)]; ++j) {
            layer.blocks.emplace_back(bind_block_params(eng, ps, block_prefix(i, j, false)),
                                      bind_block_params(eng, ps, block_prefix(i, j, true)));
        }
        layer.conv_k = p(layer_prefix(i) + "conv.k");
        layer.conv_b = p(layer_prefix(i) + "conv.b");
        if (kLayerResample[static_cast<std::size_t>(i)] != Resample::None) {
            layer.samp_k = p(layer_prefix(i) + "samp.k");
            layer.samp_b = p(layer_prefix(i) + "samp.b");
        }
    }
    u.featrec_k = p("featrec.k");
    u.featrec_b = p("featrec.b");
    u.imgrec_k = p("imgrec.k");
    u.imgrec_b = p("imgrec.b");
    return u;
}

/// Strided-conv halving of H and W; channel and band counts unchanged.
template <class E>
typename E::H downsample(E& eng, typename E::H x, typename E::H k, typename E::H b) {
    return eng.conv2d_down(x, k, b);
}

/// Nearest-neighbor spatial doubling followed by a 3x3 per-band convolution.
template <class E>
typename E::H upsample(E& eng, typename E::H x, typename E::H k, typename E::H b) {
    return eng.conv2d3(eng.upsample2(x), k, b);
}

/// One layer: L blocks, conv before the residual, then the layer's resampler
/// applied to both the conv output and the layer input.
template <class E>
typename E::H unet_layer(E& eng, typename E::H x, const typename UnetParams<E>::Layer& lp,
                         Resample g, const UnetConfig& cfg) {
    const Tensor<typename E::Scalar>& xv = eng.val(x);
    if (xv.rank() != 4) throw std::invalid_argument("unet_layer expects (C,B,H,W)");
    const int C = xv.extent(0), B = xv.extent(1), Hl = xv.extent(2), Wl = xv.extent(3);
    if (g == Resample::Down && (Hl % 2 || Wl % 2))
        throw std::invalid_argument("layer input " + shape_str(xv.shape) +
                                    " not divisible for downsampling");

    auto geo_plain = make_block_geometry<typename E::Scalar>(C, Hl, Wl, cfg.window, false);
    BlockGeometry<typename E::Scalar> geo_shift;
    bool have_shift = false;

    std::vector<typename E::H> seq;
    seq.reserve(static_cast<std::size_t>(B));
    for (int t = 0; t < B; ++t) seq.push_back(eng.slice_band(x, t));

    for (std::size_t j = 0; j < lp.blocks.size(); ++j) {
        const bool shifted = (j % 2 == 1);
        if (shifted && !have_shift) {
            geo_shift = make_block_geometry<typename E::Scalar>(C, Hl, Wl, cfg.window, true);
            have_shift = true;
        }
        const auto& geo = shifted ? geo_shift : geo_plain;
        seq = bidirectional_ssrt(eng, seq, lp.blocks[j].first, lp.blocks[j].second, geo);
    }

    typename E::H feat = eng.conv3d(eng.stack_bands(seq), lp.conv_k, lp.conv_b);
    auto resample = [&](typename E::H h) {
        switch (g) {
            case Resample::Down: return downsample(eng, h, lp.samp_k, lp.samp_b);
            case Resample::Up: return upsample(eng, h, lp.samp_k, lp.samp_b);
            case Resample::None: return h;
        }
        return h;
    };
    return eng.add(resample(feat), resample(x));
}

/// Full denoiser forward on a (B,H,W) cube handle; outputs the same shape.
/// H and W are reflect-padded up to a multiple of 4*window and the output is
/// cropped back.
template <class E>
typename E::H unet_forward(E& eng, typename E::H y, const UnetParams<E>& p,
                           const UnetConfig& cfg) {
    cfg.validate();
    const Tensor<typename E::Scalar>& yv = eng.val(y);
    if (yv.rank() != 3) throw std::invalid_argument("unet_forward expects (B,H,W), got " +
                                                    shape_str(yv.shape));
    const int B = yv.extent(0), H0 = yv.extent(1), W0 = yv.extent(2);
    const int div = cfg.min_divisor();
    const int Hp = (H0 + div - 1) / div * div;
    const int Wp = (W0 + div - 1) / div * div;

    typename E::H x = eng.reshape(y, {1, B, H0, W0});
    typename E::H padded = eng.reflect_pad_hw(x, Hp, Wp);
    typename E::H f0 = eng.conv3d(padded, p.shallow_k, p.shallow_b);

    typename E::H e0 = unet_layer(eng, f0, p.layers[0], kLayerResample[0], cfg);  // H/2
    typename E::H e1 = unet_layer(eng, e0, p.layers[1], kLayerResample[1], cfg);  // H/4
    typename E::H b2 = unet_layer(eng, e1, p.layers[2], kLayerResample[2], cfg);  // H/2
    typename E::H d3 = unet_layer(eng, eng.add(b2, e0), p.layers[3], kLayerResample[3], cfg); // H
    typename E::H d4 = unet_layer(eng, eng.add(d3, f0), p.layers[4], kLayerResample[4], cfg); // H

    typename E::H feat = eng.conv3d(d4, p.featrec_k, p.featrec_b);
    typename E::H recon = eng.conv3d(eng.add(feat, f0), p.imgrec_k, p.imgrec_b);
    typename E::H cropped = eng.crop_hw(recon, H0, W0);
    if (cfg.outer_residual) cropped = eng.add(cropped, x);
    return eng.reshape(cropped, {B, H0, W0});
}

} // namespace ssrt
