#pragma once

#include <span>
#include <vector>

#include "amoe/params.hpp"

namespace amoe {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected adaptive-moment optimizer over a fixed parameter list.
// Gradients are read from each param's currently bound node.
class Adam {
  public:
    Adam(std::vector<Param*> params, AdamConfig cfg);

    // One update from the grads on the bound nodes.
    void step();

    long step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }

  private:
    std::vector<Param*> params_;
    std::vector<Tensor2> m_, v_;
    AdamConfig cfg_;
    long step_ = 0;
};

}  // namespace amoe
