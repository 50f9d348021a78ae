#include "amoe/adapters.hpp"

#include <cmath>

#include "amoe/errors.hpp"

namespace amoe {

std::string variant_name(AdapterVariant v) {
    switch (v) {
        case AdapterVariant::LoraOnly: return "lora";
        case AdapterVariant::MoeOnly: return "moe";
        case AdapterVariant::Full: return "full";
    }
    return "full";
}

AdapterVariant variant_from_name(const std::string& s) {
    if (s == "lora") return AdapterVariant::LoraOnly;
    if (s == "moe") return AdapterVariant::MoeOnly;
    if (s == "full") return AdapterVariant::Full;
    throw ParseError("unknown adapter variant '" + s + "' (expected lora|moe|full)");
}

Node HyperMlp::forward(Tape& t, const Node& in) const {
    Node hid = tanh_map(t, add_rowvec(t, matmul(t, in, w1.node), b1.node));
    return add_rowvec(t, matmul(t, hid, w2.node), b2.node);
}

AmoeLoraAdapter::AmoeLoraAdapter(const AdapterConfig& cfg, std::string prefix, std::uint64_t seed)
    : cfg_(cfg) {
    const int d = cfg_.dim;
    const int r = cfg_.rank;
    if (r < 1 || r > d) throw ContractError("adapter rank must satisfy 1 <= r <= d");
    if (cfg_.n_experts < 1) throw ContractError("adapter needs at least one expert");
    if (cfg_.variant == AdapterVariant::LoraOnly) cfg_.n_experts = 1;
    const int n = cfg_.n_experts;
    const int h = cfg_.hidden_width();
    const int k = cfg_.hyper_rank;

    experts_.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::string en = prefix + ".expert" + std::to_string(i);
        experts_.push_back(LoraExpert{
            Param{en + ".A", init_uniform(r, d, d, seed, en + ".A"), true},
            Param{en + ".B", Tensor2(d, r), true},  // zero: expert silent until trained
        });
    }
    if (cfg_.variant != AdapterVariant::LoraOnly)
        wg_ = Param{prefix + ".router.Wg", init_uniform(d, n, d, seed, prefix + ".router.Wg"), true};
    if (cfg_.variant == AdapterVariant::Full) {
        auto mlp = [&](const std::string& mn) {
            return HyperMlp{
                Param{mn + ".w1", init_uniform(d, h, d, seed, mn + ".w1"), true},
                Param{mn + ".b1", Tensor2(1, h), true},
                Param{mn + ".w2", init_uniform(h, k * d, d, seed, mn + ".w2"), true},
                Param{mn + ".b2", Tensor2(1, k * d), true},
            };
        };
        phi_u_ = mlp(prefix + ".hyper_u");
        phi_v_ = mlp(prefix + ".hyper_v");
        wa_ = Param{prefix + ".Wa", init_uniform(r, d, d, seed, prefix + ".Wa"), true};
        wb_ = Param{prefix + ".Wb", Tensor2(d, r), true};  // zero: anomaly branch silent
    }

    for (auto& e : experts_) {
        all_.push_back(&e.a);
        all_.push_back(&e.b);
    }
    if (cfg_.variant != AdapterVariant::LoraOnly) all_.push_back(&wg_);
    if (cfg_.variant == AdapterVariant::Full) {
        for (auto* m : {&phi_u_, &phi_v_}) {
            all_.push_back(&m->w1);
            all_.push_back(&m->b1);
            all_.push_back(&m->w2);
            all_.push_back(&m->b2);
        }
        all_.push_back(&wa_);
        all_.push_back(&wb_);
    }
}

void AmoeLoraAdapter::bind(Tape& t, bool requires_grad) {
    for (auto* p : all_) p->bind(t, requires_grad);
}

void AmoeLoraAdapter::collect(std::vector<Param*>& out) {
    for (auto* p : all_) out.push_back(p);
}

Node AmoeLoraAdapter::route(Tape& t, const Node& x) const {
    if (cfg_.variant == AdapterVariant::LoraOnly)
        return t.constant(Tensor2::full(x->value.rows(), 1, 1.0));
    return softmax_rows(t, matmul(t, x, wg_.node));
}

Node AmoeLoraAdapter::expert_forward(Tape& t, int i, const Node& x) const {
    const LoraExpert& e = experts_[i];
    return matmul(t, matmul(t, x, transpose(t, e.a.node)), transpose(t, e.b.node));
}

Node AmoeLoraAdapter::generalist_forward(Tape& t, const Node& x) const {
    const double s = cfg_.alpha / cfg_.rank;
    Node w = route(t, x);
    Node acc;
    for (int i = 0; i < n_experts(); ++i) {
        Node term = scale_rows(t, expert_forward(t, i, x), slice_cols(t, w, i, 1));
        acc = acc ? add(t, acc, term) : term;
    }
    return scale(t, acc, s);
}

std::pair<Node, Node> AmoeLoraAdapter::hyper_core(Tape& t, const Node& c) const {
    if (c->value.rows() != 1 || c->value.cols() != cfg_.dim)
        throw DimensionError("hyper_core: conditioning must be 1x" + std::to_string(cfg_.dim) +
                             ", got " + shape_str(c->value));
    const int k = cfg_.hyper_rank;
    Node u = reshape(t, phi_u_.forward(t, c), k, cfg_.dim);
    Node v = reshape(t, phi_v_.forward(t, c), k, cfg_.dim);
    return {u, v};
}

AmoeLoraAdapter::AnomalyOut AmoeLoraAdapter::anomaly_forward(Tape& t, const Node& x, const Node& c) const {
    const double s = cfg_.alpha / cfg_.rank;
    auto [u, v] = hyper_core(t, c);
    // x A0^T = (x v^T)(u Wa^T); B0^T = (v Wb)^T u
    Node left = matmul(t, matmul(t, x, transpose(t, v)), matmul(t, u, transpose(t, wa_.node)));
    Node right = matmul(t, transpose(t, matmul(t, v, wb_.node)), u);
    Node o2 = scale(t, matmul(t, left, right), s);

    GeneratedFactors gf;
    gf.u = u->value;
    gf.v = v->value;
    Tensor2 wa_ut;  // Wa u^T, r x k
    mm_nt(wa_.node->value, u->value, wa_ut);
    mm_nn(wa_ut, v->value, gf.a0);             // r x d
    Tensor2 vb;
    mm_nn(v->value, wb_.node->value, vb);      // k x r
    mm_tn(u->value, vb, gf.b0);                // d x r
    return {o2, std::move(gf)};
}

Node AmoeLoraAdapter::forward(Tape& t, const Node& o0, const Node& x) const {
    if (!o0->value.same_shape(x->value))
        throw DimensionError("adapter forward: o0 " + shape_str(o0->value) + " vs x " + shape_str(x->value));
    const double s = cfg_.alpha / cfg_.rank;
    switch (cfg_.variant) {
        case AdapterVariant::LoraOnly:
            return add(t, o0, scale(t, expert_forward(t, 0, x), s));
        case AdapterVariant::MoeOnly:
            return add(t, o0, generalist_forward(t, x));
        case AdapterVariant::Full: {
            Node c = mean_rows(t, x);
            Node o1 = generalist_forward(t, x);
            Node o2 = anomaly_forward(t, x, c).o2;
            return add(t, add(t, o0, o1), o2);
        }
    }
    throw ContractError("unreachable adapter variant");
}

Tensor2 AmoeLoraAdapter::extract_generated_params(const std::vector<Tensor2>& conditioning) const {
    if (cfg_.variant != AdapterVariant::Full)
        throw ContractError("extract_generated_params requires the full variant, got " + variant_name(cfg_.variant));
    const int d = cfg_.dim;
    const int r = cfg_.rank;
    Tensor2 out(static_cast<int>(conditioning.size()), 2 * r * d);
    auto mlp_value = [&](const HyperMlp& m, const Tensor2& c) {
        Tensor2 hid;
        mm_nn(c, m.w1.value, hid);
        hid.add_scaled(m.b1.value, 1.0);
        for (std::size_t i = 0; i < hid.size(); ++i) hid.data()[i] = std::tanh(hid.data()[i]);
        Tensor2 o;
        mm_nn(hid, m.w2.value, o);
        o.add_scaled(m.b2.value, 1.0);
        return Tensor2(cfg_.hyper_rank, d, std::vector<double>(o.data(), o.data() + o.size()));
    };
    for (std::size_t s = 0; s < conditioning.size(); ++s) {
        const Tensor2& c = conditioning[s];
        if (c.rows() != 1 || c.cols() != d)
            throw DimensionError("conditioning row must be 1x" + std::to_string(d));
        Tensor2 u = mlp_value(phi_u_, c);
        Tensor2 v = mlp_value(phi_v_, c);
        Tensor2 wa_ut, a0, vb, b0;
        mm_nt(wa_.value, u, wa_ut);
        mm_nn(wa_ut, v, a0);
        mm_nn(v, wb_.value, vb);
        mm_tn(u, vb, b0);
        int j = 0;
        for (std::size_t i = 0; i < a0.size(); ++i) out.at(static_cast<int>(s), j++) = a0.data()[i];
        for (std::size_t i = 0; i < b0.size(); ++i) out.at(static_cast<int>(s), j++) = b0.data()[i];
    }
    return out;
}

}  // namespace amoe
