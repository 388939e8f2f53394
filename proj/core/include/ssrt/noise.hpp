#pragma once

// Synthetic degradations: non-i.i.d. Gaussian noise with a per-band standard
// deviation drawn from [0, sigma_max]/255, and the mixture protocol adding
// salt-pepper impulses, constant-offset stripes and zeroed deadline columns
// on independently drawn subsets of bands. Fully deterministic given the
// seed; each band's randomness derives from (seed, purpose, band) streams.

#include <cstdint>
#include <string>
#include <vector>

#include "ssrt/tensor.hpp"

namespace ssrt {

struct NoiseSpec {
    enum class Kind { Gaussian, Mixture };

    Kind kind = Kind::Gaussian;
    double sigma_max = 55.0; // on the 0-255 scale; applied as sigma_max/255
    double impulse_band_fraction = 1.0 / 3.0;
    double impulse_intensity_min = 0.10;
    double impulse_intensity_max = 0.70;
    double stripe_band_fraction = 1.0 / 3.0;
    double stripe_col_min = 0.05;
    double stripe_col_max = 0.15;
    double stripe_offset = 0.25; // offsets drawn uniform in [-stripe_offset, stripe_offset]
    double deadline_band_fraction = 1.0 / 3.0;
    double deadline_col_min = 0.05;
    double deadline_col_max = 0.15;
    std::uint64_t seed = 0;

    /// Flat key=value block (single line), embeddable in manifests.
    std::string serialize() const;

    /// Parses whitespace-separated key=value tokens; unknown keys rejected.
    static NoiseSpec parse(const std::string& text);
};

/// The per-band sigma draws used by the Gaussian generator (0-1 scale).
std::vector<double> draw_band_sigmas(std::uint64_t seed, int bands, double sigma_max);

template <class S>
HsiCube<S> add_gaussian_noniid(const HsiCube<S>& x, double sigma_max, std::uint64_t seed);

template <class S>
HsiCube<S> add_mixture(const HsiCube<S>& x, const NoiseSpec& spec);

template <class S>
HsiCube<S> apply_noise(const HsiCube<S>& x, const NoiseSpec& spec);

/// Bands selected for one corruption type: exactly ceil(B * fraction)
/// distinct indices, drawn independently per type.
std::vector<int> select_bands(std::uint64_t seed, std::uint64_t purpose, int bands,
                              double fraction);

} // namespace ssrt
