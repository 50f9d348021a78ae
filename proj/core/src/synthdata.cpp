#include "amoe/synthdata.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "amoe/errors.hpp"
#include "amoe/rng.hpp"

namespace amoe {

void TaskConfig::validate() const {
    if (n_domains < 1 || objects_per_domain < 1 || defect_classes < 1)
        throw ContractError("task config counts must be >= 1");
    if (seq_len < 6) throw ContractError("seq_len must be >= 6");
    if (!(normal_ratio > 0.0 && normal_ratio < 1.0))
        throw ContractError("normal_ratio must be strictly inside (0,1)");
    if (n_samples < 1) throw ContractError("n_samples must be >= 1");
}

VocabLayout::VocabLayout(const TaskConfig& cfg)
    : n_domains(cfg.n_domains),
      objects_per_domain(cfg.objects_per_domain),
      defect_classes(cfg.defect_classes),
      band_size(cfg.band_size) {
    int next = 0;
    pad = next++;
    bos = next++;
    eos = next++;
    sep = next++;
    true_tok = next++;
    false_tok = next++;
    pos_none = next++;
    pos_begin = next++;
    pos_mid = next++;
    pos_end = next++;
    def_first = next;
    next += defect_classes + 1;
    domain_first = next;
    next += n_domains;
    question_first = next;
    next += kQuestionTokens;
    band_first = next;
    next += n_domains * objects_per_domain * band_size;
    span_first = next;
    next += defect_classes * kSpanTokens;
    vocab_size = next;
}

int position_bucket_token(const VocabLayout& vl, int seq_len, int span_start, int span_len) {
    const int center = span_start + span_len / 2;
    if (3 * center < seq_len) return vl.pos_begin;
    if (3 * center < 2 * seq_len) return vl.pos_mid;
    return vl.pos_end;
}

namespace {

// Fixed per-(domain, object) categorical over that pair's band.
std::vector<double> band_cdf(const TaskConfig& cfg, int domain, int object) {
    SplitMix64 g(derive_stream(cfg.seed, 0x42414e44ULL ^ (static_cast<std::uint64_t>(domain) << 20) ^
                                             (static_cast<std::uint64_t>(object) << 8)));
    std::vector<double> cdf(cfg.band_size);
    double total = 0.0;
    for (int j = 0; j < cfg.band_size; ++j) {
        total += 0.5 + g.uniform();
        cdf[j] = total;
    }
    for (double& c : cdf) c /= total;
    return cdf;
}

int draw_cdf(const std::vector<double>& cdf, double u) {
    for (std::size_t j = 0; j < cdf.size(); ++j)
        if (u < cdf[j]) return static_cast<int>(j);
    return static_cast<int>(cdf.size()) - 1;
}

}  // namespace

SyntheticSample gen_sample(const TaskConfig& cfg, std::uint64_t index) {
    cfg.validate();
    const VocabLayout vl(cfg);
    SplitMix64 g(derive_stream(cfg.seed, index));

    SyntheticSample s;
    s.domain_id = static_cast<int>(g.below(cfg.n_domains));
    s.object_id = static_cast<int>(g.below(cfg.objects_per_domain));
    const bool abnormal = g.uniform() >= cfg.normal_ratio;
    s.defect_id = abnormal ? 1 + static_cast<int>(g.below(cfg.defect_classes)) : 0;
    s.qa_style = g.below(2) == 0 ? QaStyle::Discriminative : QaStyle::OpenEnded;

    const auto cdf = band_cdf(cfg, s.domain_id, s.object_id);
    const int band0 = vl.band_start(s.domain_id, s.object_id);
    s.content.resize(cfg.seq_len);
    for (int i = 0; i < cfg.seq_len; ++i) s.content[i] = band0 + draw_cdf(cdf, g.uniform());

    if (abnormal) {
        const int min_len = std::max(2, cfg.seq_len / 6);
        const int max_len = std::max(min_len, cfg.seq_len / 3);
        s.span_len = min_len + static_cast<int>(g.below(max_len - min_len + 1));
        s.span_start = static_cast<int>(g.below(cfg.seq_len - s.span_len + 1));
        const int sp0 = vl.span_start_token(s.defect_id);
        for (int i = 0; i < s.span_len; ++i)
            s.content[s.span_start + i] = sp0 + static_cast<int>(g.below(VocabLayout::kSpanTokens));
    }

    // question: style-identifying first token, then template-pool tokens
    const int tmpl = static_cast<int>(g.below(4));
    s.question.resize(cfg.question_len);
    s.question[0] = vl.question_first + (s.qa_style == QaStyle::Discriminative ? 0 : 1);
    for (int j = 1; j < cfg.question_len; ++j)
        s.question[j] = vl.question_first + 2 + (tmpl * 5 + j * 3) % (VocabLayout::kQuestionTokens - 2);

    if (s.qa_style == QaStyle::Discriminative) {
        s.answer = {abnormal ? vl.true_tok : vl.false_tok};
    } else if (abnormal) {
        s.answer = {vl.defect_token(s.defect_id),
                    position_bucket_token(vl, cfg.seq_len, s.span_start, s.span_len)};
    } else {
        s.answer = {vl.defect_token(0), vl.pos_none};
    }
    return s;
}

std::pair<std::vector<SyntheticSample>, std::vector<SyntheticSample>> gen_split(const TaskConfig& cfg) {
    cfg.validate();
    std::vector<SyntheticSample> train, test;
    std::map<std::pair<int, int>, int> stratum_count;  // (domain, defect) -> seen
    for (int i = 0; i < cfg.n_samples; ++i) {
        SyntheticSample s = gen_sample(cfg, static_cast<std::uint64_t>(i));
        const int pos = stratum_count[{s.domain_id, s.defect_id}]++;
        if (pos % 5 == 4)
            test.push_back(std::move(s));
        else
            train.push_back(std::move(s));
    }
    return {std::move(train), std::move(test)};
}

std::pair<std::vector<int>, std::vector<int>> render_qa(const TaskConfig& cfg, const SyntheticSample& s) {
    const VocabLayout vl(cfg);
    std::vector<int> input;
    input.reserve(2 + s.content.size() + 1 + s.question.size());
    input.push_back(vl.bos);
    input.push_back(vl.domain_token(s.domain_id));
    input.insert(input.end(), s.content.begin(), s.content.end());
    input.push_back(vl.sep);
    input.insert(input.end(), s.question.begin(), s.question.end());
    std::vector<int> target = s.answer;
    target.push_back(vl.eos);
    return {std::move(input), std::move(target)};
}

namespace {

std::string join_ids(const std::vector<int>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(ids[i]);
    }
    return out;
}

std::vector<int> parse_ids(const std::string& field, int line_no) {
    std::vector<int> out;
    std::istringstream ss(field);
    std::string tok;
    while (ss >> tok) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(line_no) + ": bad token id '" + tok + "'");
        }
    }
    return out;
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<SyntheticSample>& samples) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f << "mauqa-synth v1\n";
    for (const auto& s : samples) {
        f << s.domain_id << '\t' << s.object_id << '\t' << s.defect_id << '\t' << s.span_start
          << '\t' << s.span_len << '\t'
          << (s.qa_style == QaStyle::Discriminative ? "discriminative" : "open_ended") << '\t'
          << join_ids(s.content) << '\t' << join_ids(s.question) << '\t' << join_ids(s.answer)
          << '\n';
    }
    if (!f) throw IoError("write failure on '" + path + "'");
}

std::vector<SyntheticSample> read_dataset(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::string line;
    if (!std::getline(f, line)) throw ParseError(path + ": missing header");
    if (line != "mauqa-synth v1") throw ParseError(path + ": bad header '" + line + "'");

    std::vector<SyntheticSample> out;
    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 9)
            throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 9 fields, got " +
                             std::to_string(fields.size()));
        SyntheticSample s;
        try {
            s.domain_id = std::stoi(fields[0]);
            s.object_id = std::stoi(fields[1]);
            s.defect_id = std::stoi(fields[2]);
            s.span_start = std::stoi(fields[3]);
            s.span_len = std::stoi(fields[4]);
        } catch (const std::exception&) {
            throw ParseError(path + ": line " + std::to_string(line_no) + ": bad integer field");
        }
        if (fields[5] == "discriminative")
            s.qa_style = QaStyle::Discriminative;
        else if (fields[5] == "open_ended")
            s.qa_style = QaStyle::OpenEnded;
        else
            throw ParseError(path + ": line " + std::to_string(line_no) + ": bad qa_style '" + fields[5] + "'");
        s.content = parse_ids(fields[6], line_no);
        s.question = parse_ids(fields[7], line_no);
        s.answer = parse_ids(fields[8], line_no);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace amoe
