#include "ssrt/optim.hpp"

#include <cmath>

#include "ssrt/errors.hpp"

namespace ssrt {

template <class S>
Adam<S>::Adam(const ParamStore<S>& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& [name, t] : params.items()) {
        m_.emplace_back(name, Tensor<S>::zeros(t.shape));
        v_.emplace_back(name, Tensor<S>::zeros(t.shape));
    }
}

template <class S>
bool Adam<S>::step(ParamStore<S>& params,
                   const std::vector<std::pair<std::string, Tensor<S>>>& grads, double lr) {
    auto& items = params.items();
    if (grads.size() != items.size())
        throw std::invalid_argument("gradient list size " + std::to_string(grads.size()) +
                                    " does not match parameter count " +
                                    std::to_string(items.size()));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].first != items[i].first)
            throw std::invalid_argument("gradient order mismatch at " + grads[i].first + " vs " +
                                        items[i].first);
        if (!grads[i].second.all_finite()) {
            ++skipped_;
            return false;
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < items.size(); ++i) {
        Tensor<S>& w = items[i].second;
        const Tensor<S>& g = grads[i].second;
        Tensor<S>& m = m_[i].second;
        Tensor<S>& v = v_[i].second;
        for (std::int64_t j = 0; j < w.numel(); ++j) {
            const double gj = static_cast<double>(g[j]);
            const double mj = cfg_.beta1 * static_cast<double>(m[j]) + (1.0 - cfg_.beta1) * gj;
            const double vj = cfg_.beta2 * static_cast<double>(v[j]) + (1.0 - cfg_.beta2) * gj * gj;
            m[j] = static_cast<S>(mj);
            v[j] = static_cast<S>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            w[j] = static_cast<S>(static_cast<double>(w[j]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
        }
    }
    return true;
}

template <class S>
void Adam<S>::save_state(ParamStore<S>& into) const {
    for (const auto& [name, t] : m_) into.add("opt.m." + name, t);
    for (const auto& [name, t] : v_) into.add("opt.v." + name, t);
    into.add("opt.t", Tensor<S>::scalar(static_cast<S>(t_)));
    into.add("opt.skipped", Tensor<S>::scalar(static_cast<S>(skipped_)));
    into.add("opt.beta1", Tensor<S>::scalar(static_cast<S>(cfg_.beta1)));
    into.add("opt.beta2", Tensor<S>::scalar(static_cast<S>(cfg_.beta2)));
    into.add("opt.eps", Tensor<S>::scalar(static_cast<S>(cfg_.eps)));
}

template <class S>
void Adam<S>::load_state(const ParamStore<S>& from) {
    for (auto& [name, t] : m_) t = from.at("opt.m." + name);
    for (auto& [name, t] : v_) t = from.at("opt.v." + name);
    t_ = static_cast<std::int64_t>(from.at("opt.t")[0]);
    skipped_ = static_cast<std::int64_t>(from.at("opt.skipped")[0]);
}

template class Adam<float>;
template class Adam<double>;

double lr_at_epoch(double lr0, const std::vector<int>& decay_epochs, double factor, int epoch) {
    int hits = 0;
    for (int d : decay_epochs)
        if (epoch >= d) ++hits;
    return lr0 * std::pow(factor, hits);
}

} // namespace ssrt
