#include "amoe/trainer.hpp"

#include <algorithm>
#include <cmath>

#include "amoe/errors.hpp"
#include "amoe/loss.hpp"
#include "amoe/optim.hpp"
#include "amoe/rng.hpp"

namespace amoe {

void TrainConfig::validate() const {
    if (steps < 1) throw ContractError("steps must be >= 1");
    if (batch_size < 1) throw ContractError("batch_size must be >= 1");
    if (eval_every < 1) throw ContractError("eval_every must be >= 1");
}

std::vector<SyntheticSample> normal_only(const std::vector<SyntheticSample>& samples) {
    std::vector<SyntheticSample> out;
    for (const auto& s : samples)
        if (s.defect_id == 0) out.push_back(s);
    return out;
}

namespace {

struct RenderedSeq {
    std::vector<int> tokens;  // input ++ target
    int input_len = 0;
};

RenderedSeq render_training_seq(const TaskConfig& task, const SyntheticSample& s) {
    auto [input, target] = render_qa(task, s);
    RenderedSeq r;
    r.input_len = static_cast<int>(input.size());
    r.tokens = std::move(input);
    r.tokens.insert(r.tokens.end(), target.begin(), target.end());
    return r;
}

// Per-sample next-token loss. answer_only masks loss to target positions.
Node sample_loss(Tape& tape, TinyTransformer& model, const RenderedSeq& r, bool answer_only) {
    const int L = static_cast<int>(r.tokens.size());
    std::span<const int> input(r.tokens.data(), L - 1);
    std::vector<int> targets(r.tokens.begin() + 1, r.tokens.end());
    std::vector<bool> mask(L - 1);
    for (int i = 0; i < L - 1; ++i) mask[i] = !answer_only || i + 1 >= r.input_len;
    Node logits = model.forward(tape, input);
    return cross_entropy(tape, logits, targets, mask);
}

}  // namespace

std::pair<double, double> discriminative_eval(TinyTransformer& model, const TaskConfig& task,
                                              const std::vector<SyntheticSample>& samples, int cap) {
    const VocabLayout vl(task);
    int n = 0, correct = 0;
    double loss_sum = 0.0;
    for (const auto& s : samples) {
        if (s.qa_style != QaStyle::Discriminative) continue;
        if (cap >= 0 && n >= cap) break;
        ++n;
        auto [input, target] = render_qa(task, s);
        Tape tape;
        model.bind(tape, std::nullopt);
        Node logits = model.forward(tape, input);
        const int last = logits->value.rows() - 1;
        // full-vocab argmax at the answer position
        int best = 0;
        for (int j = 1; j < logits->value.cols(); ++j)
            if (logits->value.at(last, j) > logits->value.at(last, best)) best = j;
        if (best == s.answer[0]) ++correct;
        // answer-token NLL
        double mx = logits->value.at(last, 0);
        for (int j = 1; j < logits->value.cols(); ++j) mx = std::max(mx, logits->value.at(last, j));
        double z = 0.0;
        for (int j = 0; j < logits->value.cols(); ++j) z += std::exp(logits->value.at(last, j) - mx);
        loss_sum -= logits->value.at(last, s.answer[0]) - mx - std::log(z);
    }
    if (n == 0) return {0.0, 0.0};
    return {static_cast<double>(correct) / n, loss_sum / n};
}

TrainReport run_stage(TinyTransformer& model, const TaskConfig& task,
                      const std::vector<SyntheticSample>& train,
                      const std::vector<SyntheticSample>& heldout, const TrainConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw ContractError("run_stage: empty training set");
    const bool answer_only = cfg.stage == Stage::Stage2;

    std::vector<RenderedSeq> rendered;
    rendered.reserve(train.size());
    for (const auto& s : train) rendered.push_back(render_training_seq(task, s));

    Adam opt(model.trainable_params(cfg.stage),
             AdamConfig{.lr = cfg.lr});

    std::vector<std::size_t> order(rendered.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::size_t cursor = order.size();  // forces a shuffle before the first batch
    std::uint64_t epoch = 0;

    TrainReport report;
    for (int step = 1; step <= cfg.steps; ++step) {
        Tape tape;
        model.bind(tape, cfg.stage);
        Node total;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                SplitMix64 g(derive_stream(cfg.seed, 0x53485546ULL + epoch++));
                for (std::size_t i = order.size(); i > 1; --i)
                    std::swap(order[i - 1], order[g.below(i)]);
                cursor = 0;
            }
            Node l = sample_loss(tape, model, rendered[order[cursor++]], answer_only);
            total = total ? add(tape, total, l) : l;
        }
        Node loss = scale(tape, total, 1.0 / cfg.batch_size);
        tape.backward(loss);
        opt.step();

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            auto [acc, dloss] = discriminative_eval(model, task, heldout, 200);
            report.entries.push_back({step, loss->value.at(0, 0), acc, dloss});
        }
    }
    return report;
}

}  // namespace amoe
