#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssrt/params.hpp"

namespace ssrt {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a named parameter store. Steps with non-finite
/// gradients are skipped and counted.
template <class S>
class Adam {
public:
    Adam(const ParamStore<S>& params, AdamConfig cfg = {});

    /// Applies one update; `grads` must be ordered exactly like the store.
    /// Returns false (and leaves everything untouched) when any gradient is
    /// non-finite.
    bool step(ParamStore<S>& params, const std::vector<std::pair<std::string, Tensor<S>>>& grads,
              double lr);

    std::int64_t steps_taken() const { return t_; }
    std::int64_t steps_skipped() const { return skipped_; }
    const AdamConfig& config() const { return cfg_; }

    /// Persists moments and counters as named tensors under "opt.".
    void save_state(ParamStore<S>& into) const;
    void load_state(const ParamStore<S>& from);

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::int64_t skipped_ = 0;
    std::vector<std::pair<std::string, Tensor<S>>> m_;
    std::vector<std::pair<std::string, Tensor<S>>> v_;
};

/// lr(e) = lr0 * factor^(#{d in decay_epochs : e >= d}), epochs 1-based.
double lr_at_epoch(double lr0, const std::vector<int>& decay_epochs, double factor, int epoch);

} // namespace ssrt
