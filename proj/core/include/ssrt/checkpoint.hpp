#pragma once

// Weight checkpoint format:
//   magic "SSRTW\0" | format version u32
//   | config: channels u32, window u32, scalar width u32 (4 or 8)
//   | named tensors until EOF, each:
//       name length u32 | name bytes | rank u32 | extents u32 x rank
//       | raw little-endian scalars.
// Round-trips bit-exactly.

#include <cstdint>
#include <string>

#include "ssrt/params.hpp"

namespace ssrt {

struct CheckpointMeta {
    int channels = 0;
    int window = 0;
    int scalar_width = 4;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamStore<float>& ps,
                     const CheckpointMeta& meta);
void save_checkpoint(const std::string& path, const ParamStore<double>& ps,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    CheckpointMeta meta;
    ParamStore<float> f32;  // engaged when scalar_width == 4
    ParamStore<double> f64; // engaged when scalar_width == 8

    ParamStore<float> as_f32() const { return meta.scalar_width == 4 ? f32 : f64.cast<float>(); }
    ParamStore<double> as_f64() const { return meta.scalar_width == 8 ? f64 : f32.cast<double>(); }
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace ssrt
