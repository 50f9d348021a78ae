#pragma once

#include <cstdint>
#include <vector>

#include "amoe/model.hpp"
#include "amoe/synthdata.hpp"

namespace amoe {

struct TrainConfig {
    Stage stage = Stage::Stage2;
    int steps = 2000;
    int batch_size = 16;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    int eval_every = 200;

    void validate() const;
};

struct ReportEntry {
    int step = 0;
    double train_loss = 0.0;
    double disc_acc = 0.0;   // teacher-forced accuracy on held-out discriminative samples
    double disc_loss = 0.0;  // answer-token cross entropy on the same subset
};

struct TrainReport {
    std::vector<ReportEntry> entries;
};

// Stage 1: next-token loss over whole sequences (base pretraining on
// normal samples); Stage 2: loss on answer tokens only, base frozen.
// Deterministic in (model state, corpus, cfg).
TrainReport run_stage(TinyTransformer& model, const TaskConfig& task,
                      const std::vector<SyntheticSample>& train,
                      const std::vector<SyntheticSample>& heldout, const TrainConfig& cfg);

std::vector<SyntheticSample> normal_only(const std::vector<SyntheticSample>& samples);

// Teacher-forced evaluation of discriminative samples: predicted answer token
// vs gold, plus mean answer-token cross entropy. cap < 0 means all samples.
std::pair<double, double> discriminative_eval(TinyTransformer& model, const TaskConfig& task,
                                              const std::vector<SyntheticSample>& samples, int cap);

}  // namespace amoe
