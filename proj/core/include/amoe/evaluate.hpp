#pragma once

#include <vector>

#include "amoe/metrics.hpp"
#include "amoe/model.hpp"
#include "amoe/synthdata.hpp"

namespace amoe {

struct Prediction {
    int sample_index = 0;
    std::vector<int> answer;  // greedy-decoded, EOS stripped
};

// Greedy decoding over the sample set: discriminative accuracy per domain and
// ROUGE/BLEU for open-ended answers. cap < 0 evaluates everything.
EvalReport evaluate_model(TinyTransformer& model, const TaskConfig& task,
                          const std::vector<SyntheticSample>& samples, int cap = -1,
                          std::vector<Prediction>* predictions = nullptr);

// Recompute a report from dumped predictions (the recomputation oracle).
EvalReport report_from_predictions(const TaskConfig& task,
                                   const std::vector<SyntheticSample>& samples,
                                   const std::vector<Prediction>& predictions);

// Greedy decode of one sample's answer (EOS stripped).
std::vector<int> greedy_answer(TinyTransformer& model, const TaskConfig& task,
                               const SyntheticSample& s, int max_len = 4);

}  // namespace amoe
