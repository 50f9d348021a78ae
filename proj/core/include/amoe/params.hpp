#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "amoe/autodiff.hpp"
#include "amoe/rng.hpp"
#include "amoe/tensor.hpp"

namespace amoe {

// A named trainable tensor. `node` is rebound to a fresh leaf on every tape;
// the persistent state is `value`.
struct Param {
    std::string name;
    Tensor2 value;
    bool adapter = false;  // true: stage-2 trainable; false: base weight
    Node node;             // transient, valid for the tape it was bound on

    void bind(Tape& t, bool requires_grad) { node = t.leaf(value, requires_grad); }
};

// Uniform(-1/sqrt(d), 1/sqrt(d)) init, stream derived from (seed, name) so a
// parameter's init does not depend on construction order.
inline Tensor2 init_uniform(int rows, int cols, int fan_in, std::uint64_t seed, const std::string& name) {
    SplitMix64 g(derive_stream(seed, fnv1a64(name.data(), name.size())));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor2 t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = g.uniform(-bound, bound);
    return t;
}

inline std::uint64_t params_digest(const std::vector<const Param*>& ps) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto* p : ps) {
        h = fnv1a64(p->name.data(), p->name.size(), h);
        h = fnv1a64(p->value.data(), p->value.size() * sizeof(double), h);
    }
    return h;
}

}  // namespace amoe
