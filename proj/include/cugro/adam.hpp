#pragma once

#include <vector>

#include "cugro/tensor.hpp"

namespace cugro {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. Accumulator shapes mirror the parameter list passed
/// to reset(); step() must see the same list in the same order.
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void reset(const std::vector<Tensor*>& params);

    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    long long steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    long long t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

}  // namespace cugro
