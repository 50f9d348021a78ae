#include "amoe/loss.hpp"

#include <cmath>

#include "amoe/errors.hpp"

namespace amoe {

Node cross_entropy(Tape& t, const Node& logits, std::span<const int> targets,
                   const std::vector<bool>& mask) {
    const Tensor2& z = logits->value;
    const int T = z.rows();
    const int V = z.cols();
    if (static_cast<int>(targets.size()) != T || static_cast<int>(mask.size()) != T)
        throw DimensionError("cross_entropy: logits rows " + std::to_string(T) + " vs targets " +
                             std::to_string(targets.size()) + ", mask " + std::to_string(mask.size()));

    int n_masked = 0;
    for (bool m : mask)
        if (m) ++n_masked;
    if (n_masked == 0) throw ContractError("cross_entropy: empty mask");

    // stable log-softmax per masked row; keep probs for the backward rule
    auto probs = std::make_shared<Tensor2>(T, V);
    double loss = 0.0;
    for (int i = 0; i < T; ++i) {
        if (!mask[i]) continue;
        const int y = targets[i];
        if (y < 0 || y >= V) throw ContractError("cross_entropy: target id out of vocab");
        double mx = z.at(i, 0);
        for (int j = 1; j < V; ++j) mx = std::max(mx, z.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < V; ++j) sum += (probs->at(i, j) = std::exp(z.at(i, j) - mx));
        for (int j = 0; j < V; ++j) probs->at(i, j) /= sum;
        loss -= z.at(i, y) - mx - std::log(sum);
    }
    loss /= n_masked;

    std::vector<int> tgt(targets.begin(), targets.end());
    std::vector<bool> msk = mask;
    return t.make(Tensor2{{loss}}, {logits},
                  [logits, probs, tgt = std::move(tgt), msk = std::move(msk), n_masked](NodeData& n) {
                      const double g = n.grad.at(0, 0) / n_masked;
                      for (int i = 0; i < logits->grad.rows(); ++i) {
                          if (!msk[i]) continue;
                          for (int j = 0; j < logits->grad.cols(); ++j)
                              logits->grad.at(i, j) += g * probs->at(i, j);
                          logits->grad.at(i, tgt[i]) -= g;
                      }
                  });
}

}  // namespace amoe
