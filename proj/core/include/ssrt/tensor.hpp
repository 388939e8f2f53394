#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssrt {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

/// Dense row-major tensor of real scalars. S is float (default width) or
/// double (verification runs).
template <class S>
struct Tensor {
    Shape shape;
    std::vector<S> data;

    Tensor() = default;

    explicit Tensor(Shape sh) : shape(std::move(sh)) {
        validate_extents();
        data.assign(static_cast<std::size_t>(shape_numel(shape)), S(0));
    }

    Tensor(Shape sh, S fill) : shape(std::move(sh)) {
        validate_extents();
        data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
    }

    Tensor(Shape sh, std::vector<S> d) : shape(std::move(sh)), data(std::move(d)) {
        validate_extents();
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        }
    }

    static Tensor zeros(Shape sh) { return Tensor(std::move(sh)); }
    static Tensor full(Shape sh, S v) { return Tensor(std::move(sh), v); }
    static Tensor scalar(S v) { return Tensor(Shape{1}, std::vector<S>{v}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int extent(int axis) const { return shape[static_cast<std::size_t>(axis)]; }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    S& at2(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    const S& at2(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

    S& at3(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    const S& at3(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }

    S& at4(int i, int j, int k, int l) {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    const S& at4(int i, int j, int k, int l) const {
        return data[((static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    S max_abs() const {
        S m = 0;
        for (S v : data) {
            S a = v < 0 ? -v : v;
            if (a > m) m = a;
        }
        return m;
    }

    template <class T>
    Tensor<T> cast() const {
        Tensor<T> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
        return out;
    }

private:
    void validate_extents() const {
        for (int e : shape) {
            if (e < 1) throw std::invalid_argument("non-positive extent in shape " + shape_str(shape));
        }
    }
};

/// Hyperspectral cube: shape (B, H, W), reflectance nominally in [0,1].
template <class S>
using HsiCube = Tensor<S>;

template <class S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
    }
}

} // namespace ssrt
