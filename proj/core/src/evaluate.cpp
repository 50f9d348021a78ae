#include "amoe/evaluate.hpp"

#include <algorithm>

namespace amoe {

std::vector<int> greedy_answer(TinyTransformer& model, const TaskConfig& task,
                               const SyntheticSample& s, int max_len) {
    const VocabLayout vl(task);
    auto [prefix, target] = render_qa(task, s);
    std::vector<int> out;
    for (int i = 0; i < max_len; ++i) {
        Tape tape;
        model.bind(tape, std::nullopt);
        Node logits = model.forward(tape, prefix);
        const int last = logits->value.rows() - 1;
        int best = 0;
        for (int j = 1; j < logits->value.cols(); ++j)
            if (logits->value.at(last, j) > logits->value.at(last, best)) best = j;
        if (best == vl.eos) break;
        out.push_back(best);
        prefix.push_back(best);
    }
    return out;
}

namespace {

EvalReport build_report(const TaskConfig& task, const std::vector<SyntheticSample>& samples,
                        const std::vector<Prediction>& preds) {
    const VocabLayout vl(task);
    struct Acc {
        int disc_n = 0, disc_correct = 0, open_n = 0;
        double r1 = 0, r2 = 0, rl = 0, b4 = 0;
    };
    std::vector<Acc> acc(task.n_domains);
    for (const auto& p : preds) {
        const SyntheticSample& s = samples[p.sample_index];
        Acc& a = acc[s.domain_id];
        if (s.qa_style == QaStyle::Discriminative) {
            ++a.disc_n;
            if (!p.answer.empty() && p.answer[0] == s.answer[0]) ++a.disc_correct;
        } else {
            ++a.open_n;
            a.r1 += rouge_n(p.answer, s.answer, 1);
            a.r2 += rouge_n(p.answer, s.answer, 2);
            a.rl += rouge_l(p.answer, s.answer);
            a.b4 += bleu4(p.answer, s.answer);
        }
    }
    EvalReport report;
    report.per_domain.resize(task.n_domains);
    for (int d = 0; d < task.n_domains; ++d) {
        EvalScores& sc = report.per_domain[d];
        sc.n_disc = acc[d].disc_n;
        sc.n_open = acc[d].open_n;
        if (acc[d].disc_n > 0) sc.disc_acc = static_cast<double>(acc[d].disc_correct) / acc[d].disc_n;
        if (acc[d].open_n > 0) {
            sc.rouge1 = acc[d].r1 / acc[d].open_n;
            sc.rouge2 = acc[d].r2 / acc[d].open_n;
            sc.rougeL = acc[d].rl / acc[d].open_n;
            sc.bleu = acc[d].b4 / acc[d].open_n;
        }
    }
    report.aggregate = macro_average(report.per_domain);
    return report;
}

}  // namespace

EvalReport evaluate_model(TinyTransformer& model, const TaskConfig& task,
                          const std::vector<SyntheticSample>& samples, int cap,
                          std::vector<Prediction>* predictions) {
    std::vector<Prediction> preds;
    const int limit = cap < 0 ? static_cast<int>(samples.size())
                              : std::min<int>(cap, static_cast<int>(samples.size()));
    preds.reserve(limit);
    for (int i = 0; i < limit; ++i)
        preds.push_back({i, greedy_answer(model, task, samples[i])});
    EvalReport report = build_report(task, samples, preds);
    if (predictions) *predictions = std::move(preds);
    return report;
}

EvalReport report_from_predictions(const TaskConfig& task,
                                   const std::vector<SyntheticSample>& samples,
                                   const std::vector<Prediction>& predictions) {
    return build_report(task, samples, predictions);
}

}  // namespace amoe
