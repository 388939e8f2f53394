#include "ssrt/cube_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ssrt/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "cube files are little-endian; big-endian hosts are unsupported");

namespace ssrt {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'I', 'C'};

template <class T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is, const std::string& path, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw DataError(path + ": truncated cube file while reading " + what);
    return v;
}

template <class S>
void write_cube_impl(const std::string& path, const Tensor<S>& cube, CubeDtype dtype) {
    if (cube.rank() != 3)
        throw std::invalid_argument("cube must be (B,H,W), got " + shape_str(cube.shape));
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put<std::uint16_t>(os, kCubeVersion);
    put<std::uint16_t>(os, static_cast<std::uint16_t>(dtype));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(cube.extent(0)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(cube.extent(1)));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(cube.extent(2)));
    os.write(reinterpret_cast<const char*>(cube.ptr()),
             static_cast<std::streamsize>(sizeof(S) * cube.data.size()));
    if (!os) throw DataError("short write to " + path);
}

} // namespace

void write_cube(const std::string& path, const Tensor<float>& cube) {
    write_cube_impl(path, cube, CubeDtype::F32);
}

void write_cube(const std::string& path, const Tensor<double>& cube) {
    write_cube_impl(path, cube, CubeDtype::F64);
}

AnyCube read_cube(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open cube file " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError(path + ": not a cube file (bad magic)");
    auto version = get<std::uint16_t>(is, path, "version");
    if (version != kCubeVersion)
        throw DataError(path + ": unsupported cube version " + std::to_string(version));
    auto dtype = get<std::uint16_t>(is, path, "dtype");
    if (dtype != 1 && dtype != 2)
        throw DataError(path + ": unknown dtype code " + std::to_string(dtype));
    auto B = get<std::uint32_t>(is, path, "bands");
    auto H = get<std::uint32_t>(is, path, "height");
    auto W = get<std::uint32_t>(is, path, "width");
    if (B < 1 || H < 1 || W < 1) throw DataError(path + ": non-positive extents");
    const std::uint64_t count = std::uint64_t(B) * H * W;

    AnyCube out;
    out.dtype = static_cast<CubeDtype>(dtype);
    const std::size_t scalar = dtype == 1 ? 4 : 8;
    // payload length must match exactly
    auto data_start = is.tellg();
    is.seekg(0, std::ios::end);
    auto file_end = is.tellg();
    is.seekg(data_start);
    if (static_cast<std::uint64_t>(file_end - data_start) != count * scalar)
        throw DataError(path + ": payload length " + std::to_string(file_end - data_start) +
                        " does not match extents (" + std::to_string(count * scalar) +
                        " bytes expected)");
    Shape sh{static_cast<int>(B), static_cast<int>(H), static_cast<int>(W)};
    if (dtype == 1) {
        out.f32 = Tensor<float>(sh);
        if (!is.read(reinterpret_cast<char*>(out.f32.ptr()),
                     static_cast<std::streamsize>(count * scalar)))
            throw DataError(path + ": truncated payload");
    } else {
        out.f64 = Tensor<double>(sh);
        if (!is.read(reinterpret_cast<char*>(out.f64.ptr()),
                     static_cast<std::streamsize>(count * scalar)))
            throw DataError(path + ": truncated payload");
    }
    return out;
}

} // namespace ssrt
