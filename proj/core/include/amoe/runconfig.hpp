#pragma once

#include <cstdint>
#include <string>

#include "amoe/model.hpp"
#include "amoe/synthdata.hpp"
#include "amoe/trainer.hpp"

namespace amoe {

// Flat `key = value` run configuration; the union of task, model, and
// training keys. Unknown keys are rejected. Every command echoes the fully
// resolved config next to its outputs, and checkpoints embed it.
struct RunConfig {
    // task
    int n_domains = 6;
    int objects_per_domain = 3;
    int defect_classes = 8;
    int seq_len = 24;
    double normal_ratio = 0.5;
    int n_samples = 20000;
    int band_size = 8;
    int question_len = 4;
    // model
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq = 64;
    int mlp_hidden = -1;
    std::string injection_points = "attn_q,attn_v";
    std::string variant = "full";
    int n_experts = 16;
    int rank = 4;
    double alpha = 16.0;
    int hyper_hidden = -1;
    int hyper_rank = 1;
    // training
    int stage = 2;
    int steps = 2000;
    int batch_size = 0;  // 0 = stage default: 8 for stage 1, 16 for stage 2
    double lr = 0.0;     // 0 = stage default: 3e-3 for stage 1, 1e-3 for stage 2
    int eval_every = 200;
    std::uint64_t seed = 1;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text, const std::string& origin = "<text>");

    // "key=value" or "key = value"; unknown key -> ParseError naming it.
    void set_kv(const std::string& assignment);
    void set(const std::string& key, const std::string& value);

    // Sorted `key = value` lines covering every key.
    std::string resolved_text() const;

    TaskConfig task() const;
    ModelConfig model() const;  // vocab_size derived from the task layout
    TrainConfig train() const;
    double effective_lr() const { return lr != 0.0 ? lr : (stage == 1 ? 3e-3 : 1e-3); }
    int effective_batch() const { return batch_size != 0 ? batch_size : (stage == 1 ? 8 : 16); }
};

}  // namespace amoe
