#include "ssrt/noise.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "ssrt/errors.hpp"
#include "ssrt/rng.hpp"

namespace ssrt {

namespace {

// Stream layout: (purpose << 40) | band. Purposes:
//   1 gaussian noise, 2/3 impulse selection/content, 4/5 stripes, 6/7 deadlines,
//   0 band sigma draws.
std::uint64_t stream_of(std::uint64_t purpose, std::uint64_t band) {
    return (purpose << 40) | band;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

std::string NoiseSpec::serialize() const {
    std::ostringstream os;
    os << "kind=" << (kind == Kind::Gaussian ? "gaussian" : "mixture");
    os << " sigma_max=" << fmt(sigma_max);
    os << " impulse_band_fraction=" << fmt(impulse_band_fraction);
    os << " impulse_intensity_min=" << fmt(impulse_intensity_min);
    os << " impulse_intensity_max=" << fmt(impulse_intensity_max);
    os << " stripe_band_fraction=" << fmt(stripe_band_fraction);
    os << " stripe_col_min=" << fmt(stripe_col_min);
    os << " stripe_col_max=" << fmt(stripe_col_max);
    os << " stripe_offset=" << fmt(stripe_offset);
    os << " deadline_band_fraction=" << fmt(deadline_band_fraction);
    os << " deadline_col_min=" << fmt(deadline_col_min);
    os << " deadline_col_max=" << fmt(deadline_col_max);
    os << " seed=" << seed;
    return os.str();
}

NoiseSpec NoiseSpec::parse(const std::string& text) {
    NoiseSpec spec;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
        auto eq = tok.find('=');
        if (eq == std::string::npos) throw DataError("noise spec token without '=': " + tok);
        std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        try {
            if (key == "kind") {
                if (val == "gaussian")
                    spec.kind = Kind::Gaussian;
                else if (val == "mixture")
                    spec.kind = Kind::Mixture;
                else
                    throw DataError("unknown noise kind " + val);
            } else if (key == "sigma_max")
                spec.sigma_max = std::stod(val);
            else if (key == "impulse_band_fraction")
                spec.impulse_band_fraction = std::stod(val);
            else if (key == "impulse_intensity_min")
                spec.impulse_intensity_min = std::stod(val);
            else if (key == "impulse_intensity_max")
                spec.impulse_intensity_max = std::stod(val);
            else if (key == "stripe_band_fraction")
                spec.stripe_band_fraction = std::stod(val);
            else if (key == "stripe_col_min")
                spec.stripe_col_min = std::stod(val);
            else if (key == "stripe_col_max")
                spec.stripe_col_max = std::stod(val);
            else if (key == "stripe_offset")
                spec.stripe_offset = std::stod(val);
            else if (key == "deadline_band_fraction")
                spec.deadline_band_fraction = std::stod(val);
            else if (key == "deadline_col_min")
                spec.deadline_col_min = std::stod(val);
            else if (key == "deadline_col_max")
                spec.deadline_col_max = std::stod(val);
            else if (key == "seed")
                spec.seed = std::stoull(val);
            else
                throw DataError("unknown noise spec key " + key);
        } catch (const std::invalid_argument&) {
            throw DataError("bad value for noise spec key " + key + ": " + val);
        }
    }
    auto check01 = [](double v, const char* name) {
        if (v < 0.0 || v > 1.0)
            throw DataError(std::string("noise spec fraction ") + name + " outside [0,1]");
    };
    check01(spec.impulse_band_fraction, "impulse_band_fraction");
    check01(spec.stripe_band_fraction, "stripe_band_fraction");
    check01(spec.deadline_band_fraction, "deadline_band_fraction");
    return spec;
}

std::vector<double> draw_band_sigmas(std::uint64_t seed, int bands, double sigma_max) {
    std::vector<double> out(static_cast<std::size_t>(bands));
    for (int b = 0; b < bands; ++b) {
        Philox rng(seed, stream_of(0, static_cast<std::uint64_t>(b)));
        out[static_cast<std::size_t>(b)] = rng.next_uniform() * sigma_max / 255.0;
    }
    return out;
}

std::vector<int> select_bands(std::uint64_t seed, std::uint64_t purpose, int bands,
                              double fraction) {
    const int nsel = std::min(bands, static_cast<int>(std::ceil(bands * fraction)));
    std::vector<int> idx(static_cast<std::size_t>(bands));
    for (int i = 0; i < bands; ++i) idx[static_cast<std::size_t>(i)] = i;
    Philox rng(seed, stream_of(purpose, 0));
    for (int i = 0; i < nsel; ++i) {
        int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(bands - i)));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    idx.resize(static_cast<std::size_t>(nsel));
    std::sort(idx.begin(), idx.end());
    return idx;
}

template <class S>
HsiCube<S> add_gaussian_noniid(const HsiCube<S>& x, double sigma_max, std::uint64_t seed) {
    if (x.rank() != 3) throw std::invalid_argument("cube must be (B,H,W)");
    const int B = x.extent(0);
    const std::int64_t plane = static_cast<std::int64_t>(x.extent(1)) * x.extent(2);
    HsiCube<S> y = x;
    if (sigma_max <= 0.0) return y;
    std::vector<double> sigmas = draw_band_sigmas(seed, B, sigma_max);
    for (int b = 0; b < B; ++b) {
        const double sigma = sigmas[static_cast<std::size_t>(b)];
        Philox rng(seed, stream_of(1, static_cast<std::uint64_t>(b)));
        S* yb = y.ptr() + b * plane;
        for (std::int64_t i = 0; i < plane; ++i)
            yb[i] += static_cast<S>(sigma * rng.next_gaussian());
    }
    return y;
}

template <class S>
HsiCube<S> add_mixture(const HsiCube<S>& x, const NoiseSpec& spec) {
    if (x.rank() != 3) throw std::invalid_argument("cube must be (B,H,W)");
    const int B = x.extent(0), H = x.extent(1), W = x.extent(2);
    if (B < 3 &&
        (spec.impulse_band_fraction > 0 || spec.stripe_band_fraction > 0 ||
         spec.deadline_band_fraction > 0))
        std::cerr << "warning: mixture noise on " << B
                  << " bands; per-type fractions round up to at least one band\n";
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;

    HsiCube<S> y = add_gaussian_noniid(x, spec.sigma_max, spec.seed);

    // impulse: salt-pepper at a per-band density, 50/50 salt=1 / pepper=0
    for (int b : select_bands(spec.seed, 2, B, spec.impulse_band_fraction)) {
        Philox rng(spec.seed, stream_of(3, static_cast<std::uint64_t>(b)));
        const double density =
            rng.next_uniform(spec.impulse_intensity_min, spec.impulse_intensity_max);
        S* yb = y.ptr() + b * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            if (rng.next_uniform() < density) yb[i] = rng.next_uniform() < 0.5 ? S(0) : S(1);
        }
    }

    // stripes: selected columns get a constant offset
    for (int b : select_bands(spec.seed, 4, B, spec.stripe_band_fraction)) {
        Philox rng(spec.seed, stream_of(5, static_cast<std::uint64_t>(b)));
        const double frac = rng.next_uniform(spec.stripe_col_min, spec.stripe_col_max);
        int ncols = std::min(W, std::max(1, static_cast<int>(std::lround(frac * W))));
        std::vector<int> cols(static_cast<std::size_t>(W));
        for (int j = 0; j < W; ++j) cols[static_cast<std::size_t>(j)] = j;
        for (int i = 0; i < ncols; ++i) {
            int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(W - i)));
            std::swap(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
        }
        S* yb = y.ptr() + b * plane;
        for (int i = 0; i < ncols; ++i) {
            const int col = cols[static_cast<std::size_t>(i)];
            const S off = static_cast<S>(rng.next_uniform(-spec.stripe_offset, spec.stripe_offset));
            for (int r = 0; r < H; ++r) yb[static_cast<std::int64_t>(r) * W + col] += off;
        }
    }

    // deadlines: selected columns zeroed (applied last so they stay exactly 0)
    for (int b : select_bands(spec.seed, 6, B, spec.deadline_band_fraction)) {
        Philox rng(spec.seed, stream_of(7, static_cast<std::uint64_t>(b)));
        const double frac = rng.next_uniform(spec.deadline_col_min, spec.deadline_col_max);
        int ncols = std::min(W, std::max(1, static_cast<int>(std::lround(frac * W))));
        std::vector<int> cols(static_cast<std::size_t>(W));
        for (int j = 0; j < W; ++j) cols[static_cast<std::size_t>(j)] = j;
        for (int i = 0; i < ncols; ++i) {
            int j = i + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(W - i)));
            std::swap(cols[static_cast<std::size_t>(i)], cols[static_cast<std::size_t>(j)]);
        }
        S* yb = y.ptr() + b * plane;
        for (int i = 0; i < ncols; ++i) {
            const int col = cols[static_cast<std::size_t>(i)];
            for (int r = 0; r < H; ++r) yb[static_cast<std::int64_t>(r) * W + col] = S(0);
        }
    }
    return y;
}

template <class S>
HsiCube<S> apply_noise(const HsiCube<S>& x, const NoiseSpec& spec) {
    if (spec.kind == NoiseSpec::Kind::Gaussian)
        return add_gaussian_noniid(x, spec.sigma_max, spec.seed);
    return add_mixture(x, spec);
}

template HsiCube<float> add_gaussian_noniid<float>(const HsiCube<float>&, double, std::uint64_t);
template HsiCube<double> add_gaussian_noniid<double>(const HsiCube<double>&, double, std::uint64_t);
template HsiCube<float> add_mixture<float>(const HsiCube<float>&, const NoiseSpec&);
template HsiCube<double> add_mixture<double>(const HsiCube<double>&, const NoiseSpec&);
template HsiCube<float> apply_noise<float>(const HsiCube<float>&, const NoiseSpec&);
template HsiCube<double> apply_noise<double>(const HsiCube<double>&, const NoiseSpec&);

} // namespace ssrt
