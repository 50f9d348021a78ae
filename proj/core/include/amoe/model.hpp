#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amoe/adapters.hpp"
#include "amoe/autodiff.hpp"
#include "amoe/params.hpp"

namespace amoe {

enum class InjectionPoint { AttnQ, AttnK, AttnV, AttnO, MlpUp, MlpDown };

std::string injection_name(InjectionPoint p);
InjectionPoint injection_from_name(const std::string& s);

enum class Stage { Stage1, Stage2 };

struct ModelConfig {
    int vocab_size = 0;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq = 64;
    int mlp_hidden = -1;  // -1 means 2 * d_model
    std::vector<InjectionPoint> injection_points = {InjectionPoint::AttnQ, InjectionPoint::AttnV};
    bool adapters_enabled = true;
    AdapterConfig adapter;

    int mlp_width() const { return mlp_hidden > 0 ? mlp_hidden : 2 * d_model; }
    void validate() const;
};

// Decoder-only causal transformer (pre-norm) with an AMoE-LoRA adapter on
// each configured projection of every layer. Base weights are the stage-1
// trainable set; adapters are the stage-2 set.
class TinyTransformer {
  public:
    TinyTransformer(ModelConfig cfg, std::uint64_t seed);

    // Create tape leaves for every parameter. Parameters in the trainable
    // set of `stage` get gradients; pass nullopt for inference-only binding.
    void bind(Tape& t, std::optional<Stage> stage);

    // Causal forward to logits [T x vocab]. bind() must have been called on
    // the same tape. When `capture` is given, the per-adapter conditioning
    // row (mean over tokens of the adapter's input) is stored under
    // "layer<l>.<point>".
    Node forward(Tape& t, std::span<const int> tokens,
                 std::map<std::string, Tensor2>* capture = nullptr) const;

    std::vector<Param*> params();
    std::vector<const Param*> params() const;
    std::vector<Param*> trainable_params(Stage stage);
    std::uint64_t base_digest() const;

    const ModelConfig& config() const { return cfg_; }
    AmoeLoraAdapter* adapter_at(int layer, InjectionPoint p);
    const AmoeLoraAdapter* adapter_at(int layer, InjectionPoint p) const;

  private:
    struct Block {
        Param ln1_g, ln1_b, ln2_g, ln2_b;
        Param wq, bq, wk, bk, wv, bv, wo, bo;
        Param w_up, b_up, w_down, b_down;
        std::map<InjectionPoint, std::unique_ptr<AmoeLoraAdapter>> adapters;
    };

    Node project(Tape& t, const Node& x, const Param& w, const Param& b,
                 const Block& blk, int layer, InjectionPoint p,
                 std::map<std::string, Tensor2>* capture) const;

    ModelConfig cfg_;
    Param tok_emb_, pos_emb_;
    std::vector<Block> blocks_;
    Param lnf_g_, lnf_b_;
    Param w_head_, b_head_;
    std::vector<Param*> base_params_;
    std::vector<Param*> adapter_params_;
};

}  // namespace amoe
