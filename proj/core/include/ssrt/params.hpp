#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ssrt/errors.hpp"
#include "ssrt/tensor.hpp"

namespace ssrt {

/// Named learnable tensors in a fixed (insertion) order. The order is part of
/// the checkpoint contract: writing and re-reading must round-trip bit-exactly.
template <class S>
class ParamStore {
public:
    Tensor<S>& add(const std::string& name, Tensor<S> t) {
        if (index_.count(name)) throw std::logic_error("duplicate parameter " + name);
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
        return items_.back().second;
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<S>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw DataError("missing parameter " + name);
        return items_[it->second].second;
    }

    const Tensor<S>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw DataError("missing parameter " + name);
        return items_[it->second].second;
    }

    std::vector<std::pair<std::string, Tensor<S>>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor<S>>>& items() const { return items_; }

    std::size_t size() const { return items_.size(); }

    std::int64_t total_scalars() const {
        std::int64_t n = 0;
        for (const auto& [_, t] : items_) n += t.numel();
        return n;
    }

    bool all_finite() const {
        for (const auto& [_, t] : items_)
            if (!t.all_finite()) return false;
        return true;
    }

    template <class T>
    ParamStore<T> cast() const {
        ParamStore<T> out;
        for (const auto& [name, t] : items_) out.add(name, t.template cast<T>());
        return out;
    }

private:
    std::vector<std::pair<std::string, Tensor<S>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

} // namespace ssrt
