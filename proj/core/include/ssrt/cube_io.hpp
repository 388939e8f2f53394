#pragma once

// Cube file format:
//   magic "HSIC" | version u16 | dtype u16 (f32=1, f64=2)
//   | B u32 | H u32 | W u32 | payload: band-major row-major little-endian scalars.

#include <cstdint>
#include <string>

#include "ssrt/tensor.hpp"

namespace ssrt {

enum class CubeDtype : std::uint16_t { F32 = 1, F64 = 2 };

inline constexpr std::uint16_t kCubeVersion = 1;

/// A cube of either scalar width, as read from disk.
struct AnyCube {
    CubeDtype dtype = CubeDtype::F32;
    Tensor<float> f32;
    Tensor<double> f64;

    Tensor<float> as_f32() const { return dtype == CubeDtype::F32 ? f32 : f64.cast<float>(); }
    Tensor<double> as_f64() const { return dtype == CubeDtype::F64 ? f64 : f32.cast<double>(); }
};

void write_cube(const std::string& path, const Tensor<float>& cube);
void write_cube(const std::string& path, const Tensor<double>& cube);

/// Rejects bad magic, unknown version/dtype and payload length mismatches.
AnyCube read_cube(const std::string& path);

} // namespace ssrt
