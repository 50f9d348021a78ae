#pragma once

#include <string>
#include <vector>

#include "amoe/tensor.hpp"

namespace amoe {

using TokenSeq = std::vector<int>;

// Clipped n-gram overlap F1. 0 when either side has no n-grams.
double rouge_n(const TokenSeq& cand, const TokenSeq& ref, int n);

// LCS-based F1. 0 when either side is empty.
double rouge_l(const TokenSeq& cand, const TokenSeq& ref);

// BLEU-4 with add-one smoothing on p_n (n >= 2) when the raw numerator is 0,
// and brevity penalty exp(1 - |ref|/|cand|) when |cand| < |ref|.
double bleu4(const TokenSeq& cand, const TokenSeq& ref);

double discriminative_accuracy(const std::vector<bool>& preds, const std::vector<bool>& gold);

// Mean-centered projection onto the top-2 principal directions (power
// iteration with deflation, tol 1e-10, max 1000 iterations).
Tensor2 pca2(const Tensor2& points);

// (mean inter-label pairwise distance) / (mean intra-label pairwise
// distance); > 1 indicates label-aligned clustering.
double separation_ratio(const Tensor2& points, const std::vector<int>& labels);

struct EvalScores {
    double disc_acc = 0.0;
    double rouge1 = 0.0, rouge2 = 0.0, rougeL = 0.0, bleu = 0.0;
    int n_disc = 0, n_open = 0;
};

// Per-domain scores plus macro average over domains that have samples.
struct EvalReport {
    std::vector<EvalScores> per_domain;
    EvalScores aggregate;
};

EvalScores macro_average(const std::vector<EvalScores>& per_domain);

// One row per metric, one column per domain plus a final "Avg." column.
std::string report_table_tsv(const EvalReport& report);

}  // namespace amoe
