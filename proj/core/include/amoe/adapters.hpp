#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "amoe/autodiff.hpp"
#include "amoe/params.hpp"
#include "amoe/tensor.hpp"

namespace amoe {

enum class AdapterVariant { LoraOnly, MoeOnly, Full };

std::string variant_name(AdapterVariant v);
AdapterVariant variant_from_name(const std::string& s);

struct AdapterConfig {
    int dim = 64;          // d: feature width of the injected projection
    int n_experts = 16;    // N
    int rank = 4;          // r
    double alpha = 16.0;   // adapter scale, applied as alpha / r
    int hidden = -1;       // hypernetwork hidden width h; -1 means dim
    int hyper_rank = 1;    // k: H(c) = sum of k outer products u_j^T v_j
    AdapterVariant variant = AdapterVariant::Full;

    int hidden_width() const { return hidden > 0 ? hidden : dim; }
};

// One generalist expert: delta(x) = x A^T B^T (row form of B A x).
struct LoraExpert {
    Param a;  // r x d
    Param b;  // d x r, zero at construction
};

// d -> h -> out_dim MLP with tanh hidden activation.
struct HyperMlp {
    Param w1, b1, w2, b2;
    Node forward(Tape& t, const Node& in) const;
};

// Per-sample factors generated by the hypernetwork, materialized for
// inspection (never inside the forward pass).
struct GeneratedFactors {
    Tensor2 a0;  // r x d
    Tensor2 b0;  // d x r
    Tensor2 u;   // k x d
    Tensor2 v;   // k x d
};

// Softmax-routed mixture of generalist LoRA experts plus a hypernetwork
// generated anomaly-aware LoRA, fused additively with the base projection
// output. Parameters are bound per tape via bind().
class AmoeLoraAdapter {
  public:
    AmoeLoraAdapter(const AdapterConfig& cfg, std::string name_prefix, std::uint64_t seed);

    void bind(Tape& t, bool requires_grad);
    void collect(std::vector<Param*>& out);

    // Softmax(x W_g): per-token contribution weights, T x N.
    Node route(Tape& t, const Node& x) const;

    // x A_i^T B_i^T; unscaled, caller applies alpha / r.
    Node expert_forward(Tape& t, int i, const Node& x) const;

    // o1 = (alpha / r) * sum_i w_i .* expert_forward(i, x).
    Node generalist_forward(Tape& t, const Node& x) const;

    // u = phi_u(c), v = phi_v(c), each reshaped to k x d.
    std::pair<Node, Node> hyper_core(Tape& t, const Node& c) const;

    struct AnomalyOut {
        Node o2;
        GeneratedFactors factors;
    };
    // o2 = (alpha / r) * x A0^T B0^T with A0 = W_a H, B0 = H W_b, H = u^T v.
    // Evaluated in factored order; never materializes a d x d matrix.
    AnomalyOut anomaly_forward(Tape& t, const Node& x, const Node& c) const;

    // o = o0 + o1 + o2, branches per variant; c = mean_rows(x).
    Node forward(Tape& t, const Node& o0, const Node& x) const;

    // One row per conditioning vector: flatten(A0) || flatten(B0), length 2rd.
    Tensor2 extract_generated_params(const std::vector<Tensor2>& conditioning) const;

    const AdapterConfig& config() const { return cfg_; }
    int n_experts() const { return static_cast<int>(experts_.size()); }
    const LoraExpert& expert(int i) const { return experts_[i]; }
    const Param& router_weights() const { return wg_; }
    const HyperMlp& phi_u() const { return phi_u_; }
    const HyperMlp& phi_v() const { return phi_v_; }

  private:
    AdapterConfig cfg_;
    std::vector<LoraExpert> experts_;
    Param wg_;              // d x N
    HyperMlp phi_u_, phi_v_;
    Param wa_;              // r x d
    Param wb_;              // d x r, zero at construction
    std::vector<Param*> all_;
};

}  // namespace amoe
