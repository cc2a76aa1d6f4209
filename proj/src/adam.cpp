#include "cugro/adam.hpp"

#include <cmath>

namespace cugro {

void Adam::reset(const std::vector<Tensor*>& params) {
    t_ = 0;
    m_.clear();
    v_.clear();
    for (const Tensor* p : params) {
        m_.push_back(Tensor(p->shape));
        v_.push_back(Tensor(p->shape));
    }
}

void Adam::step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads) {
    if (params.size() != m_.size() || grads.size() != params.size()) {
        throw ShapeError("adam: parameter/gradient list does not match optimizer state");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        if (!p.same_shape(m_[i]) || !g.same_shape(p)) {
            throw ShapeError("adam: accumulator shape mismatch at parameter " + std::to_string(i));
        }
        check_finite(g, "adam gradient");
        double* mp = m_[i].data.data();
        double* vp = v_[i].data.data();
        double* pp = p.data.data();
        const double* gp = g.data.data();
        for (std::size_t j = 0; j < p.size(); ++j) {
            mp[j] = cfg_.beta1 * mp[j] + (1.0 - cfg_.beta1) * gp[j];
            vp[j] = cfg_.beta2 * vp[j] + (1.0 - cfg_.beta2) * gp[j] * gp[j];
            const double mhat = mp[j] / bc1;
            const double vhat = vp[j] / bc2;
            pp[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace cugro
