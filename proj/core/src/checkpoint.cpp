#include "ssrt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ssrt/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian; big-endian hosts are unsupported");

namespace ssrt {

namespace {

constexpr char kMagic[6] = {'S', 'S', 'R', 'T', 'W', '\0'};

template <class T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class S>
void save_impl(const std::string& path, const ParamStore<S>& ps, const CheckpointMeta& meta) {
    const int width = static_cast<int>(sizeof(S));
    if (meta.scalar_width != width)
        throw std::invalid_argument("checkpoint meta width " + std::to_string(meta.scalar_width) +
                                    " does not match store scalar size " + std::to_string(width));
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open " + path + " for writing");
    os.write(kMagic, 6);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(meta.channels));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(meta.window));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(meta.scalar_width));
    for (const auto& [name, t] : ps.items()) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
        for (int e : t.shape) put<std::uint32_t>(os, static_cast<std::uint32_t>(e));
        os.write(reinterpret_cast<const char*>(t.ptr()),
                 static_cast<std::streamsize>(sizeof(S) * t.data.size()));
    }
    if (!os) throw DataError("short write to " + path);
}

template <class T>
bool try_get(std::ifstream& is, T& v) {
    return static_cast<bool>(is.read(reinterpret_cast<char*>(&v), sizeof(T)));
}

template <class T>
T need(std::ifstream& is, const std::string& path, const char* what) {
    T v{};
    if (!try_get(is, v)) throw DataError(path + ": truncated checkpoint while reading " + what);
    return v;
}

template <class S>
void read_tensors(std::ifstream& is, const std::string& path, ParamStore<S>& ps) {
    for (;;) {
        std::uint32_t name_len;
        if (!try_get(is, name_len)) break; // clean EOF
        if (name_len == 0 || name_len > 4096) throw DataError(path + ": implausible tensor name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw DataError(path + ": truncated tensor name");
        auto rank = need<std::uint32_t>(is, path, "rank");
        if (rank > 8) throw DataError(path + ": implausible tensor rank");
        Shape sh;
        std::uint64_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            auto e = need<std::uint32_t>(is, path, "extent");
            if (e < 1) throw DataError(path + ": non-positive extent in " + name);
            sh.push_back(static_cast<int>(e));
            count *= e;
        }
        Tensor<S> t(sh);
        if (!is.read(reinterpret_cast<char*>(t.ptr()),
                     static_cast<std::streamsize>(sizeof(S) * count)))
            throw DataError(path + ": truncated payload for " + name);
        ps.add(name, std::move(t));
    }
}

} // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& ps,
                     const CheckpointMeta& meta) {
    save_impl(path, ps, meta);
}

void save_checkpoint(const std::string& path, const ParamStore<double>& ps,
                     const CheckpointMeta& meta) {
    save_impl(path, ps, meta);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path);
    char magic[6];
    if (!is.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
        throw DataError(path + ": not a weight checkpoint (bad magic)");
    auto version = need<std::uint32_t>(is, path, "version");
    if (version != kCheckpointVersion)
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    LoadedCheckpoint out;
    out.meta.channels = static_cast<int>(need<std::uint32_t>(is, path, "channels"));
    out.meta.window = static_cast<int>(need<std::uint32_t>(is, path, "window"));
    out.meta.scalar_width = static_cast<int>(need<std::uint32_t>(is, path, "scalar width"));
    if (out.meta.scalar_width == 4)
        read_tensors(is, path, out.f32);
    else if (out.meta.scalar_width == 8)
        read_tensors(is, path, out.f64);
    else
        throw DataError(path + ": unsupported scalar width " +
                        std::to_string(out.meta.scalar_width));
    return out;
}

} // namespace ssrt
