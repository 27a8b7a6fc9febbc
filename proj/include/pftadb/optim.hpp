#ifndef PFTADB_OPTIM_HPP
#define PFTADB_OPTIM_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <unordered_map>

#include "pftadb/error.hpp"
#include "pftadb/tensor.hpp"

namespace pftadb {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter and created on
/// the first step that touches it. Frozen parameters are never updated.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(std::span<Parameter* const> params, double lr) {
        ++t_;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (Parameter* p : params) {
            if (!p->trainable) continue;
            if (p->gradient.shape() != p->value.shape()) {
                throw DimensionError("adam: gradient shape differs from value for " + p->name);
            }
            auto [it, fresh] = moments_.try_emplace(p);
            Moments& m = it->second;
            if (fresh) {
                m.first = Tensor(p->value.shape());
                m.second = Tensor(p->value.shape());
            }
            auto value = p->value.data();
            auto grad = p->gradient.data();
            auto m1 = m.first.data();
            auto m2 = m.second.data();
            for (std::size_t i = 0; i < value.size(); ++i) {
                const double g = grad[i];
                m1[i] = cfg_.beta1 * m1[i] + (1.0 - cfg_.beta1) * g;
                m2[i] = cfg_.beta2 * m2[i] + (1.0 - cfg_.beta2) * g * g;
                value[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + cfg_.eps);
            }
        }
    }

    std::size_t steps() const noexcept { return t_; }

private:
    struct Moments {
        Tensor first;
        Tensor second;
    };

    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::unordered_map<const Parameter*, Moments> moments_;
};

/// One Adam update of the trainable parameters from their accumulated gradients.
inline void optimizer_step(std::span<Parameter* const> params, Adam& state, double lr) { state.step(params, lr); }

}  // namespace pftadb

#endif  // PFTADB_OPTIM_HPP
