#include "amoe/optim.hpp"

#include <cmath>

#include "amoe/errors.hpp"

namespace amoe {

Adam::Adam(std::vector<Param*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param* p : params_) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void Adam::step() {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Param& prm = *params_[p];
        if (!prm.node) throw ContractError("adam step: param '" + prm.name + "' is not bound");
        const Tensor2& g = prm.node->grad;
        if (!g.same_shape(prm.value))
            throw DimensionError("adam step: grad shape mismatch for '" + prm.name + "'");
        for (std::size_t i = 0; i < prm.value.size(); ++i) {
            const double gi = g.data()[i];
            double& mi = m_[p].data()[i];
            double& vi = v_[p].data()[i];
            mi = cfg_.beta1 * mi + (1.0 - cfg_.beta1) * gi;
            vi = cfg_.beta2 * vi + (1.0 - cfg_.beta2) * gi * gi;
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            prm.value.data()[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace amoe
