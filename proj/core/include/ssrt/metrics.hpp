#pragma once

// Evaluation indices. All internal arithmetic is double regardless of the
// cube scalar width.

#include <cstdint>
#include <string>

#include "ssrt/tensor.hpp"

namespace ssrt {

inline constexpr double kPsnrCap = 100.0;

struct MetricsReport {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double sam_rad = 0.0;
    bool ssim_global_fallback = false; // spatial extent < 11, global-statistics SSIM used
    std::int64_t sam_excluded = 0;     // zero-norm pixels excluded from the SAM mean

    /// Line-oriented key=value block.
    std::string serialize() const;
};

/// 10*log10(peak^2 / MSE) over the whole cube, capped at 100 dB.
template <class S>
double psnr(const HsiCube<S>& x, const HsiCube<S>& y, double peak = 1.0);

/// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), C1=(0.01*peak)^2,
/// C2=(0.03*peak)^2, computed per band over the valid filter region and
/// averaged over bands. Falls back to global statistics when H or W < 11.
template <class S>
double ssim(const HsiCube<S>& x, const HsiCube<S>& y, double peak = 1.0,
            bool* global_fallback = nullptr);

/// Mean per-pixel spectral angle in radians; zero-norm pixels are excluded
/// and counted. Throws NumericError if every pixel is excluded.
template <class S>
double sam(const HsiCube<S>& x, const HsiCube<S>& y, std::int64_t* excluded = nullptr);

template <class S>
MetricsReport compute_metrics(const HsiCube<S>& reference, const HsiCube<S>& test,
                              double peak = 1.0);

} // namespace ssrt
