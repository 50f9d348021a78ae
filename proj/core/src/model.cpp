#include "amoe/model.hpp"

#include <cmath>

#include "amoe/errors.hpp"

namespace amoe {

std::string injection_name(InjectionPoint p) {
    switch (p) {
        case InjectionPoint::AttnQ: return "attn_q";
        case InjectionPoint::AttnK: return "attn_k";
        case InjectionPoint::AttnV: return "attn_v";
        case InjectionPoint::AttnO: return "attn_o";
        case InjectionPoint::MlpUp: return "mlp_up";
        case InjectionPoint::MlpDown: return "mlp_down";
    }
    return "attn_q";
}

InjectionPoint injection_from_name(const std::string& s) {
    for (InjectionPoint p : {InjectionPoint::AttnQ, InjectionPoint::AttnK, InjectionPoint::AttnV,
                             InjectionPoint::AttnO, InjectionPoint::MlpUp, InjectionPoint::MlpDown})
        if (injection_name(p) == s) return p;
    throw ParseError("unknown injection point '" + s + "'");
}

void ModelConfig::validate() const {
    if (vocab_size < 1) throw ContractError("vocab_size must be >= 1");
    if (d_model % n_heads != 0) throw ContractError("d_model must be divisible by n_heads");
    if (adapters_enabled && injection_points.empty())
        throw ContractError("adapters enabled but no injection points configured");
}

TinyTransformer::TinyTransformer(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const int d = cfg_.d_model;
    const int mh = cfg_.mlp_width();
    auto base = [&](const std::string& name, int rows, int cols, int fan) {
        return Param{name, init_uniform(rows, cols, fan, seed, name), false};
    };
    auto ones_row = [&](const std::string& name, int n) {
        return Param{name, Tensor2::full(1, n, 1.0), false};
    };

    tok_emb_ = base("base.tok_emb", cfg_.vocab_size, d, d);
    pos_emb_ = base("base.pos_emb", cfg_.max_seq, d, d);

    AdapterConfig acfg = cfg_.adapter;
    acfg.dim = d;

    blocks_.resize(cfg_.n_layers);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string pre = "base.layer" + std::to_string(l) + ".";
        Block& blk = blocks_[l];
        blk.ln1_g = ones_row(pre + "ln1.g", d);
        blk.ln1_b = Param{pre + "ln1.b", Tensor2(1, d), false};
        blk.ln2_g = ones_row(pre + "ln2.g", d);
        blk.ln2_b = Param{pre + "ln2.b", Tensor2(1, d), false};
        blk.wq = base(pre + "attn.wq", d, d, d);
        blk.bq = Param{pre + "attn.bq", Tensor2(1, d), false};
        blk.wk = base(pre + "attn.wk", d, d, d);
        blk.bk = Param{pre + "attn.bk", Tensor2(1, d), false};
        blk.wv = base(pre + "attn.wv", d, d, d);
        blk.bv = Param{pre + "attn.bv", Tensor2(1, d), false};
        blk.wo = base(pre + "attn.wo", d, d, d);
        blk.bo = Param{pre + "attn.bo", Tensor2(1, d), false};
        blk.w_up = base(pre + "mlp.w_up", d, mh, d);
        blk.b_up = Param{pre + "mlp.b_up", Tensor2(1, mh), false};
        blk.w_down = base(pre + "mlp.w_down", mh, d, mh);
        blk.b_down = Param{pre + "mlp.b_down", Tensor2(1, d), false};
        if (cfg_.adapters_enabled) {
            for (InjectionPoint p : cfg_.injection_points) {
                // MLP projections are non-square; adapters attach to the
                // square attention projections plus mlp_down's d-wide output
                // side is unsupported at desk scale.
                if (p == InjectionPoint::MlpUp || p == InjectionPoint::MlpDown)
                    throw ContractError("adapter injection at " + injection_name(p) +
                                        " is not supported (non-square projection)");
                std::string an = "adapter.layer" + std::to_string(l) + "." + injection_name(p);
                blk.adapters[p] = std::make_unique<AmoeLoraAdapter>(acfg, an, seed);
            }
        }
    }
    lnf_g_ = ones_row("base.lnf.g", d);
    lnf_b_ = Param{"base.lnf.b", Tensor2(1, d), false};
    w_head_ = base("base.head.w", d, cfg_.vocab_size, d);
    b_head_ = Param{"base.head.b", Tensor2(1, cfg_.vocab_size), false};

    auto reg = [&](Param& p) { base_params_.push_back(&p); };
    reg(tok_emb_);
    reg(pos_emb_);
    for (auto& blk : blocks_) {
        for (Param* p : {&blk.ln1_g, &blk.ln1_b, &blk.ln2_g, &blk.ln2_b, &blk.wq, &blk.bq, &blk.wk,
                         &blk.bk, &blk.wv, &blk.bv, &blk.wo, &blk.bo, &blk.w_up, &blk.b_up,
                         &blk.w_down, &blk.b_down})
            base_params_.push_back(p);
        for (auto& [point, ad] : blk.adapters) ad->collect(adapter_params_);
    }
    reg(lnf_g_);
    reg(lnf_b_);
    reg(w_head_);
    reg(b_head_);
    for (Param* p : adapter_params_) p->adapter = true;
}

void TinyTransformer::bind(Tape& t, std::optional<Stage> stage) {
    const bool base_grad = stage.has_value() && *stage == Stage::Stage1;
    const bool adapter_grad = stage.has_value() && *stage == Stage::Stage2;
    for (Param* p : base_params_) p->bind(t, base_grad);
    for (Param* p : adapter_params_) p->bind(t, adapter_grad);
}

Node TinyTransformer::project(Tape& t, const Node& x, const Param& w, const Param& b,
                              const Block& blk, int layer, InjectionPoint p,
                              std::map<std::string, Tensor2>* capture) const {
    Node o0 = add_rowvec(t, matmul(t, x, w.node), b.node);
    auto it = blk.adapters.find(p);
    if (it == blk.adapters.end()) return o0;
    if (capture) {
        Tensor2 c(1, x->value.cols());
        for (int i = 0; i < x->value.rows(); ++i)
            for (int j = 0; j < x->value.cols(); ++j) c.at(0, j) += x->value.at(i, j);
        for (int j = 0; j < x->value.cols(); ++j) c.at(0, j) /= x->value.rows();
        (*capture)["layer" + std::to_string(layer) + "." + injection_name(p)] = std::move(c);
    }
    return it->second->forward(t, o0, x);
}

Node TinyTransformer::forward(Tape& t, std::span<const int> tokens,
                              std::map<std::string, Tensor2>* capture) const {
    const int T = static_cast<int>(tokens.size());
    if (T < 1) throw ContractError("empty token sequence");
    if (T > cfg_.max_seq)
        throw ContractError("sequence length " + std::to_string(T) + " exceeds max_seq " +
                            std::to_string(cfg_.max_seq));
    for (int id : tokens)
        if (id < 0 || id >= cfg_.vocab_size)
            throw ContractError("token id " + std::to_string(id) + " out of vocab " +
                                std::to_string(cfg_.vocab_size));

    const int d = cfg_.d_model;
    const int nh = cfg_.n_heads;
    const int dh = d / nh;

    std::vector<int> ids(tokens.begin(), tokens.end());
    std::vector<int> pos(T);
    for (int i = 0; i < T; ++i) pos[i] = i;
    Node x = add(t, embed_rows(t, tok_emb_.node, ids), embed_rows(t, pos_emb_.node, pos));

    // causal additive mask: 0 on and below the diagonal, -1e9 above
    Tensor2 mask(T, T);
    for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) mask.at(i, j) = -1e9;
    Node mask_n = t.constant(std::move(mask));

    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const Block& blk = blocks_[l];
        const int li = static_cast<int>(l);
        Node xn = layernorm_rows(t, x, blk.ln1_g.node, blk.ln1_b.node);
        Node q = project(t, xn, blk.wq, blk.bq, blk, li, InjectionPoint::AttnQ, capture);
        Node k = project(t, xn, blk.wk, blk.bk, blk, li, InjectionPoint::AttnK, capture);
        Node v = project(t, xn, blk.wv, blk.bv, blk, li, InjectionPoint::AttnV, capture);

        std::vector<Node> heads;
        heads.reserve(nh);
        for (int h = 0; h < nh; ++h) {
            Node qh = slice_cols(t, q, h * dh, dh);
            Node kh = slice_cols(t, k, h * dh, dh);
            Node vh = slice_cols(t, v, h * dh, dh);
            Node scores = add(t, scale(t, matmul(t, qh, transpose(t, kh)), 1.0 / std::sqrt(dh)), mask_n);
            heads.push_back(matmul(t, softmax_rows(t, scores), vh));
        }
        Node attn = project(t, concat_cols(t, heads), blk.wo, blk.bo, blk, li, InjectionPoint::AttnO, capture);
        x = add(t, x, attn);

        Node xn2 = layernorm_rows(t, x, blk.ln2_g.node, blk.ln2_b.node);
        Node hid = tanh_map(t, add_rowvec(t, matmul(t, xn2, blk.w_up.node), blk.b_up.node));
        Node mlp = add_rowvec(t, matmul(t, hid, blk.w_down.node), blk.b_down.node);
        x = add(t, x, mlp);
    }

    Node xf = layernorm_rows(t, x, lnf_g_.node, lnf_b_.node);
    return add_rowvec(t, matmul(t, xf, w_head_.node), b_head_.node);
}

std::vector<Param*> TinyTransformer::params() {
    std::vector<Param*> out = base_params_;
    out.insert(out.end(), adapter_params_.begin(), adapter_params_.end());
    return out;
}

std::vector<const Param*> TinyTransformer::params() const {
    std::vector<const Param*> out(base_params_.begin(), base_params_.end());
    out.insert(out.end(), adapter_params_.begin(), adapter_params_.end());
    return out;
}

std::vector<Param*> TinyTransformer::trainable_params(Stage stage) {
    return stage == Stage::Stage1 ? base_params_ : adapter_params_;
}

std::uint64_t TinyTransformer::base_digest() const {
    std::vector<const Param*> ps(base_params_.begin(), base_params_.end());
    return params_digest(ps);
}

AmoeLoraAdapter* TinyTransformer::adapter_at(int layer, InjectionPoint p) {
    auto it = blocks_.at(layer).adapters.find(p);
    return it == blocks_.at(layer).adapters.end() ? nullptr : it->second.get();
}

const AmoeLoraAdapter* TinyTransformer::adapter_at(int layer, InjectionPoint p) const {
    auto it = blocks_.at(layer).adapters.find(p);
    return it == blocks_.at(layer).adapters.end() ? nullptr : it->second.get();
}

}  // namespace amoe
