#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace amoe {

enum class QaStyle { Discriminative, OpenEnded };

struct TaskConfig {
    int n_domains = 6;
    int objects_per_domain = 3;
    int defect_classes = 8;   // abnormal classes; defect_id 0 is "normal"
    int seq_len = 24;         // content tokens per sample
    double normal_ratio = 0.5;
    int n_samples = 20000;
    std::uint64_t seed = 1;
    int band_size = 8;        // content tokens owned by each (domain, object)
    int question_len = 4;

    void validate() const;
};

// Fixed token-id layout derived from a TaskConfig. Control tokens first,
// then defect-class answer tokens, domain tokens, question tokens,
// per-(domain,object) content bands, and per-defect span tokens.
struct VocabLayout {
    explicit VocabLayout(const TaskConfig& cfg);

    int pad, bos, eos, sep, true_tok, false_tok;
    int pos_none, pos_begin, pos_mid, pos_end;
    int def_first;       // def_first + k = answer token for defect class k (0 = normal)
    int domain_first;
    int question_first;  // 16 question-template tokens
    int band_first;
    int span_first;
    int vocab_size;

    int n_domains, objects_per_domain, defect_classes, band_size;

    int domain_token(int d) const { return domain_first + d; }
    int defect_token(int k) const { return def_first + k; }
    int band_start(int domain, int object) const {
        return band_first + (domain * objects_per_domain + object) * band_size;
    }
    int span_start_token(int defect) const { return span_first + (defect - 1) * kSpanTokens; }
    bool in_band(int tok, int domain, int object) const {
        const int b = band_start(domain, object);
        return tok >= b && tok < b + band_size;
    }
    static constexpr int kQuestionTokens = 16;
    static constexpr int kSpanTokens = 4;  // span vocabulary per defect class
};

struct SyntheticSample {
    int domain_id = 0;
    int object_id = 0;
    int defect_id = 0;                    // 0 = normal
    int span_start = -1, span_len = -1;   // -1,-1 when normal
    QaStyle qa_style = QaStyle::Discriminative;
    std::vector<int> content;
    std::vector<int> question;
    std::vector<int> answer;              // without EOS

    bool operator==(const SyntheticSample&) const = default;
};

// Fully determined by (cfg.seed, index); draws share nothing between indices.
SyntheticSample gen_sample(const TaskConfig& cfg, std::uint64_t index);

// Deterministic corpus with a stratified 80/20 split by (domain, defect).
std::pair<std::vector<SyntheticSample>, std::vector<SyntheticSample>> gen_split(const TaskConfig& cfg);

// input = [BOS, domain, content.., SEP, question..]; target = answer + [EOS]
std::pair<std::vector<int>, std::vector<int>> render_qa(const TaskConfig& cfg, const SyntheticSample& s);

// Position bucket of a defect span: thirds of the content sequence.
int position_bucket_token(const VocabLayout& vl, int seq_len, int span_start, int span_len);

void write_dataset(const std::string& path, const std::vector<SyntheticSample>& samples);
std::vector<SyntheticSample> read_dataset(const std::string& path);

}  // namespace amoe
