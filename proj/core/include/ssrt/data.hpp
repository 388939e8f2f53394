#pragma once

// Dataset plumbing: manifests, patch sampling with augmentation, and the
// procedural clean-cube generator used for desk-scale experiments.

#include <optional>
#include <string>
#include <vector>

#include "ssrt/noise.hpp"
#include "ssrt/rng.hpp"
#include "ssrt/tensor.hpp"

namespace ssrt {

struct ManifestEntry {
    std::string path;
    std::optional<NoiseSpec> noise;
};

/// Line-oriented dataset manifest:
///   <split> <cube path> [key=value noise spec ...]
/// split in {train, val, test}; '#' starts a comment. Every referenced file
/// must exist and parse at load time.
struct Manifest {
    std::vector<ManifestEntry> train, val, test;

    static Manifest load(const std::string& path);
};

struct AugmentConfig {
    bool crop = true;
    bool flip_h = true;
    bool flip_v = true;
    bool resize = true;
};

/// Random crop offsets: uniform over [0, max_*] inclusive.
struct PatchOffsets {
    int band = 0, row = 0, col = 0;
    bool flip_h = false, flip_v = false;
    double resize_factor = 1.0; // in {0.5, 1, 1.5}
};

PatchOffsets draw_patch_offsets(Philox& rng, int max_band, int max_row, int max_col,
                                const AugmentConfig& aug);

/// Bilinear spatial resize of each band to (out_h, out_w).
template <class S>
Tensor<S> resize_bilinear(const Tensor<S>& cube, int out_h, int out_w);

/// Crops a clean patch of (bands, ph, pw) with flips and resize augmentation
/// per the drawn offsets; noise is the caller's responsibility so a clean and
/// noisy pair stays aligned.
template <class S>
Tensor<S> extract_patch(const Tensor<S>& cube, int bands, int ph, int pw,
                        const PatchOffsets& off);

/// Convenience: draws offsets from `rng` and extracts the patch; errors if
/// the cube is smaller than the patch.
template <class S>
Tensor<S> sample_patch(const Tensor<S>& cube, int bands, int ph, int pw,
                       const AugmentConfig& aug, Philox& rng);

/// Smooth procedural clean reflectance cube in [0.05, 0.95]: a few spatial
/// abundance fields mixing smooth spectral signatures.
template <class S>
HsiCube<S> make_synthetic_cube(int bands, int height, int width, std::uint64_t seed);

} // namespace ssrt
