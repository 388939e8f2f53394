#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssrt/errors.hpp"
#include "ssrt/tensor.hpp"

namespace ssrt {

/// Handle to a value recorded on a Tape.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Dynamically recorded operation graph for one forward/backward pass.
/// Single-writer: one tape per pass, not shared across threads.
template <class S>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, Var)>;

    Var leaf(Tensor<S> value, const char* kind = "leaf") {
        return emplace(std::move(value), BackwardFn(), kind);
    }

    Var push(Tensor<S> value, BackwardFn backward, const char* kind) {
        return emplace(std::move(value), std::move(backward), kind);
    }

    const Tensor<S>& val(Var v) const { return nodes_[check(v)].value; }

    /// Gradient buffer for a var, allocated (zeroed) on first access.
    Tensor<S>& grad(Var v) {
        Node& n = nodes_[check(v)];
        if (!n.grad_live) {
            n.grad = Tensor<S>::zeros(n.value.shape);
            n.grad_live = true;
        }
        return n.grad;
    }

    bool has_grad(Var v) const { return nodes_[check(v)].grad_live; }

    /// Reverse pass from a scalar root; seeds d(root)/d(root) = 1.
    void backward(Var root) {
        std::size_t r = check(root);
        if (nodes_[r].value.numel() != 1) {
            throw std::invalid_argument("backward root must be scalar, got shape " +
                                        shape_str(nodes_[r].value.shape));
        }
        grad(root)[0] = S(1);
        for (std::size_t i = r + 1; i-- > 0;) {
            if (nodes_[i].grad_live && nodes_[i].backward)
                nodes_[i].backward(*this, Var{static_cast<std::int32_t>(i)});
        }
    }

    std::size_t size() const { return nodes_.size(); }

    std::size_t count(const std::string& kind) const {
        auto it = kind_counts_.find(kind);
        return it == kind_counts_.end() ? 0 : it->second;
    }

private:
    struct Node {
        Tensor<S> value;
        Tensor<S> grad;
        bool grad_live = false;
        BackwardFn backward;
    };

    Var emplace(Tensor<S> value, BackwardFn backward, const char* kind) {
        Node n;
        n.value = std::move(value);
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        ++kind_counts_[kind];
        return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    std::size_t check(Var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw std::logic_error("invalid tape var");
        return static_cast<std::size_t>(v.id);
    }

    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> kind_counts_;
};

} // namespace ssrt
