#include "ssrt/metrics.hpp"

#include <cmath>
#include <sstream>
#include <vector>

#include "ssrt/errors.hpp"

namespace ssrt {

namespace {

std::vector<double> gaussian_window_11() {
    std::vector<double> w(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        double d = i - 5.0;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// separable valid-region filtering of an H x W plane with the 11-tap window
void filter_valid(const std::vector<double>& img, int H, int W, const std::vector<double>& win,
                  std::vector<double>& out) {
    const int T = static_cast<int>(win.size());
    const int Hv = H - T + 1, Wv = W - T + 1;
    std::vector<double> rows(static_cast<std::size_t>(H) * Wv);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < Wv; ++j) {
            double acc = 0.0;
            for (int t = 0; t < T; ++t)
                acc += win[static_cast<std::size_t>(t)] * img[static_cast<std::size_t>(i) * W + j + t];
            rows[static_cast<std::size_t>(i) * Wv + j] = acc;
        }
    out.assign(static_cast<std::size_t>(Hv) * Wv, 0.0);
    for (int i = 0; i < Hv; ++i)
        for (int j = 0; j < Wv; ++j) {
            double acc = 0.0;
            for (int t = 0; t < T; ++t)
                acc += win[static_cast<std::size_t>(t)] * rows[static_cast<std::size_t>(i + t) * Wv + j];
            out[static_cast<std::size_t>(i) * Wv + j] = acc;
        }
}

} // namespace

std::string MetricsReport::serialize() const {
    std::ostringstream os;
    os.precision(10);
    os << "psnr_db=" << psnr_db << "\n";
    os << "ssim=" << ssim << "\n";
    os << "sam_rad=" << sam_rad << "\n";
    if (ssim_global_fallback) os << "ssim_global_fallback=1\n";
    if (sam_excluded > 0) os << "sam_excluded=" << sam_excluded << "\n";
    return os.str();
}

template <class S>
double psnr(const HsiCube<S>& x, const HsiCube<S>& y, double peak) {
    check_same_shape(x, y, "psnr");
    double mse = 0.0;
    for (std::int64_t i = 0; i < x.numel(); ++i) {
        double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(x.numel());
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

template <class S>
double ssim(const HsiCube<S>& x, const HsiCube<S>& y, double peak, bool* global_fallback) {
    check_same_shape(x, y, "ssim");
    const int B = x.extent(0), H = x.extent(1), W = x.extent(2);
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const bool fallback = H < 11 || W < 11;
    if (global_fallback) *global_fallback = fallback;

    double band_mean = 0.0;
    if (fallback) {
        for (int b = 0; b < B; ++b) {
            const S* xb = x.ptr() + b * plane;
            const S* yb = y.ptr() + b * plane;
            double mx = 0, my = 0;
            for (std::int64_t i = 0; i < plane; ++i) {
                mx += xb[i];
                my += yb[i];
            }
            mx /= static_cast<double>(plane);
            my /= static_cast<double>(plane);
            double vx = 0, vy = 0, cov = 0;
            for (std::int64_t i = 0; i < plane; ++i) {
                double dx = xb[i] - mx, dy = yb[i] - my;
                vx += dx * dx;
                vy += dy * dy;
                cov += dx * dy;
            }
            vx /= static_cast<double>(plane);
            vy /= static_cast<double>(plane);
            cov /= static_cast<double>(plane);
            band_mean += ((2 * mx * my + c1) * (2 * cov + c2)) /
                         ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        return band_mean / B;
    }

    const std::vector<double> win = gaussian_window_11();
    std::vector<double> xb(static_cast<std::size_t>(plane)), yb(static_cast<std::size_t>(plane)),
        xx(static_cast<std::size_t>(plane)), yy(static_cast<std::size_t>(plane)),
        xy(static_cast<std::size_t>(plane));
    std::vector<double> mux, muy, sxx, syy, sxy;
    for (int b = 0; b < B; ++b) {
        const S* xp = x.ptr() + b * plane;
        const S* yp = y.ptr() + b * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
            xb[static_cast<std::size_t>(i)] = xp[i];
            yb[static_cast<std::size_t>(i)] = yp[i];
            xx[static_cast<std::size_t>(i)] = xb[static_cast<std::size_t>(i)] * xb[static_cast<std::size_t>(i)];
            yy[static_cast<std::size_t>(i)] = yb[static_cast<std::size_t>(i)] * yb[static_cast<std::size_t>(i)];
            xy[static_cast<std::size_t>(i)] = xb[static_cast<std::size_t>(i)] * yb[static_cast<std::size_t>(i)];
        }
        filter_valid(xb, H, W, win, mux);
        filter_valid(yb, H, W, win, muy);
        filter_valid(xx, H, W, win, sxx);
        filter_valid(yy, H, W, win, syy);
        filter_valid(xy, H, W, win, sxy);
        double acc = 0.0;
        for (std::size_t i = 0; i < mux.size(); ++i) {
            double mx = mux[i], my = muy[i];
            double vx = sxx[i] - mx * mx;
            double vy = syy[i] - my * my;
            double cov = sxy[i] - mx * my;
            acc += ((2 * mx * my + c1) * (2 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        band_mean += acc / static_cast<double>(mux.size());
    }
    return band_mean / B;
}

template <class S>
double sam(const HsiCube<S>& x, const HsiCube<S>& y, std::int64_t* excluded) {
    check_same_shape(x, y, "sam");
    const int B = x.extent(0), H = x.extent(1), W = x.extent(2);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    double acc = 0.0;
    std::int64_t used = 0, skipped = 0;
    for (std::int64_t p = 0; p < plane; ++p) {
        double dot = 0.0, nx = 0.0, ny = 0.0;
        for (int b = 0; b < B; ++b) {
            double xv = x[b * plane + p], yv = y[b * plane + p];
            dot += xv * yv;
            nx += xv * xv;
            ny += yv * yv;
        }
        if (nx == 0.0 || ny == 0.0) {
            ++skipped;
            continue;
        }
        double c = dot / (std::sqrt(nx) * std::sqrt(ny));
        c = std::max(-1.0, std::min(1.0, c));
        acc += std::acos(c);
        ++used;
    }
    if (excluded) *excluded = skipped;
    if (used == 0) throw NumericError("sam undefined: every pixel has a zero-norm spectrum");
    return acc / static_cast<double>(used);
}

template <class S>
MetricsReport compute_metrics(const HsiCube<S>& reference, const HsiCube<S>& test, double peak) {
    MetricsReport r;
    r.psnr_db = psnr(reference, test, peak);
    r.ssim = ssim(reference, test, peak, &r.ssim_global_fallback);
    r.sam_rad = sam(reference, test, &r.sam_excluded);
    return r;
}

template double psnr<float>(const HsiCube<float>&, const HsiCube<float>&, double);
template double psnr<double>(const HsiCube<double>&, const HsiCube<double>&, double);
template double ssim<float>(const HsiCube<float>&, const HsiCube<float>&, double, bool*);
template double ssim<double>(const HsiCube<double>&, const HsiCube<double>&, double, bool*);
template double sam<float>(const HsiCube<float>&, const HsiCube<float>&, std::int64_t*);
template double sam<double>(const HsiCube<double>&, const HsiCube<double>&, std::int64_t*);
template MetricsReport compute_metrics<float>(const HsiCube<float>&, const HsiCube<float>&, double);
template MetricsReport compute_metrics<double>(const HsiCube<double>&, const HsiCube<double>&,
                                               double);

} // namespace ssrt
