#include "amoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "amoe/errors.hpp"
#include "amoe/rng.hpp"

namespace amoe {

namespace {

std::map<std::vector<int>, int> ngram_counts(const TokenSeq& s, int n) {
    std::map<std::vector<int>, int> counts;
    for (int i = 0; i + n <= static_cast<int>(s.size()); ++i)
        ++counts[std::vector<int>(s.begin() + i, s.begin() + i + n)];
    return counts;
}

// clipped overlap: sum over candidate n-grams of min(count_cand, count_ref)
long clipped_overlap(const TokenSeq& cand, const TokenSeq& ref, int n) {
    const auto cc = ngram_counts(cand, n);
    const auto rc = ngram_counts(ref, n);
    long overlap = 0;
    for (const auto& [gram, c] : cc) {
        auto it = rc.find(gram);
        if (it != rc.end()) overlap += std::min(c, it->second);
    }
    return overlap;
}

long ngram_total(const TokenSeq& s, int n) {
    return std::max<long>(0, static_cast<long>(s.size()) - n + 1);
}

}  // namespace

double rouge_n(const TokenSeq& cand, const TokenSeq& ref, int n) {
    if (n < 1) throw ContractError("rouge_n: n must be >= 1");
    const long nc = ngram_total(cand, n);
    const long nr = ngram_total(ref, n);
    if (nc == 0 || nr == 0) return 0.0;
    const long overlap = clipped_overlap(cand, ref, n);
    const double p = static_cast<double>(overlap) / nc;
    const double r = static_cast<double>(overlap) / nr;
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

double rouge_l(const TokenSeq& cand, const TokenSeq& ref) {
    if (cand.empty() || ref.empty()) return 0.0;
    const int m = static_cast<int>(cand.size());
    const int n = static_cast<int>(ref.size());
    std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
    for (int i = 1; i <= m; ++i) {
        for (int j = 1; j <= n; ++j)
            cur[j] = cand[i - 1] == ref[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    const int lcs = prev[n];
    const double p = static_cast<double>(lcs) / m;
    const double r = static_cast<double>(lcs) / n;
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

double bleu4(const TokenSeq& cand, const TokenSeq& ref) {
    if (cand.empty()) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        double num = static_cast<double>(clipped_overlap(cand, ref, n));
        double den = static_cast<double>(ngram_total(cand, n));
        if (n >= 2 && num == 0.0) {  // add-one smoothing
            num += 1.0;
            den += 1.0;
        }
        if (num == 0.0 || den == 0.0) return 0.0;  // unigram miss or no n-grams
        log_sum += 0.25 * std::log(num / den);
    }
    double bp = 1.0;
    if (cand.size() < ref.size())
        bp = std::exp(1.0 - static_cast<double>(ref.size()) / cand.size());
    return bp * std::exp(log_sum);
}

double discriminative_accuracy(const std::vector<bool>& preds, const std::vector<bool>& gold) {
    if (preds.empty()) throw ContractError("discriminative_accuracy: empty input");
    if (preds.size() != gold.size())
        throw ContractError("discriminative_accuracy: length mismatch " + std::to_string(preds.size()) +
                            " vs " + std::to_string(gold.size()));
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == gold[i]) ++correct;
    return static_cast<double>(correct) / preds.size();
}

namespace {

// Leading eigenvector of symmetric C by power iteration; returns eigenvalue.
// When `ortho` is given the iterate is kept orthogonal to it (Gram-Schmidt
// each step), so a near-null deflated matrix cannot leak the first component
// back into the second. A (numerically) zero residual yields a zero vector.
double power_iterate(const Tensor2& c, std::vector<double>& v,
                     const std::vector<double>* ortho, double floor_scale) {
    const int d = c.rows();
    SplitMix64 g(0x50434132ULL);
    v.resize(d);
    double norm = 0.0;
    for (int i = 0; i < d; ++i) norm += (v[i] = g.uniform(-1.0, 1.0)) * v[i];
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    auto project_out = [&](std::vector<double>& x) {
        if (!ortho) return;
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += x[i] * (*ortho)[i];
        for (int i = 0; i < d; ++i) x[i] -= dot * (*ortho)[i];
    };
    project_out(v);

    std::vector<double> w(d);
    double lambda = 0.0;
    for (int iter = 0; iter < 1000; ++iter) {
        for (int i = 0; i < d; ++i) {
            double s = 0.0;
            for (int j = 0; j < d; ++j) s += c.at(i, j) * v[j];
            w[i] = s;
        }
        project_out(w);
        double wn = 0.0;
        for (double x : w) wn += x * x;
        wn = std::sqrt(wn);
        if (wn <= 1e-12 * floor_scale) {  // null residual: no such direction
            v.assign(d, 0.0);
            return 0.0;
        }
        double diff = 0.0;
        for (int i = 0; i < d; ++i) {
            w[i] /= wn;
            diff = std::max(diff, std::fabs(std::fabs(w[i]) - std::fabs(v[i])));
        }
        v = w;
        lambda = wn;
        if (diff < 1e-10) break;
    }
    return lambda;
}

}  // namespace

Tensor2 pca2(const Tensor2& points) {
    const int s = points.rows();
    const int d = points.cols();
    if (s < 3 || d < 2) throw ContractError("pca2 needs at least 3 points of dimension >= 2");

    Tensor2 centered = points;
    for (int j = 0; j < d; ++j) {
        double mu = 0.0;
        for (int i = 0; i < s; ++i) mu += centered.at(i, j);
        mu /= s;
        for (int i = 0; i < s; ++i) centered.at(i, j) -= mu;
    }

    Tensor2 cov;
    mm_tn(centered, centered, cov);
    double total_var = 0.0;
    for (int i = 0; i < d; ++i) total_var += (cov.at(i, i) /= s);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            if (i != j) cov.at(i, j) /= s;
    if (total_var <= 0.0) throw ContractError("pca2: degenerate input (all points identical)");

    Tensor2 out(s, 2);
    std::vector<double> v, first;
    for (int comp = 0; comp < 2; ++comp) {
        const double lambda = power_iterate(cov, v, comp == 0 ? nullptr : &first, total_var);
        if (comp == 0) first = v;
        for (int i = 0; i < s; ++i) {
            double proj = 0.0;
            for (int j = 0; j < d; ++j) proj += centered.at(i, j) * v[j];
            out.at(i, comp) = proj;
        }
        // deflate: C -= lambda v v^T
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) cov.at(i, j) -= lambda * v[i] * v[j];
    }
    return out;
}

double separation_ratio(const Tensor2& points, const std::vector<int>& labels) {
    if (static_cast<int>(labels.size()) != points.rows())
        throw ContractError("separation_ratio: label count mismatch");
    std::map<int, int> counts;
    for (int l : labels) ++counts[l];
    if (counts.size() < 2) throw ContractError("separation_ratio needs >= 2 labels");
    for (const auto& [l, c] : counts)
        if (c < 2) throw ContractError("separation_ratio: label " + std::to_string(l) + " has < 2 points");

    double inter = 0.0, intra = 0.0;
    long n_inter = 0, n_intra = 0;
    for (int i = 0; i < points.rows(); ++i) {
        for (int j = i + 1; j < points.rows(); ++j) {
            double d2 = 0.0;
            for (int k = 0; k < points.cols(); ++k) {
                const double d = points.at(i, k) - points.at(j, k);
                d2 += d * d;
            }
            const double dist = std::sqrt(d2);
            if (labels[i] == labels[j]) {
                intra += dist;
                ++n_intra;
            } else {
                inter += dist;
                ++n_inter;
            }
        }
    }
    const double mean_intra = intra / n_intra;
    const double mean_inter = inter / n_inter;
    if (mean_intra == 0.0 && mean_inter == 0.0)
        throw ContractError("separation_ratio: degenerate (all points identical)");
    if (mean_intra == 0.0) return std::numeric_limits<double>::infinity();
    return mean_inter / mean_intra;
}

EvalScores macro_average(const std::vector<EvalScores>& per_domain) {
    EvalScores agg;
    int d_disc = 0, d_open = 0;
    for (const auto& s : per_domain) {
        agg.n_disc += s.n_disc;
        agg.n_open += s.n_open;
        if (s.n_disc > 0) {
            agg.disc_acc += s.disc_acc;
            ++d_disc;
        }
        if (s.n_open > 0) {
            agg.rouge1 += s.rouge1;
            agg.rouge2 += s.rouge2;
            agg.rougeL += s.rougeL;
            agg.bleu += s.bleu;
            ++d_open;
        }
    }
    if (d_disc > 0) agg.disc_acc /= d_disc;
    if (d_open > 0) {
        agg.rouge1 /= d_open;
        agg.rouge2 /= d_open;
        agg.rougeL /= d_open;
        agg.bleu /= d_open;
    }
    return agg;
}

std::string report_table_tsv(const EvalReport& report) {
    std::ostringstream os;
    os << "metric";
    for (std::size_t d = 0; d < report.per_domain.size(); ++d) os << "\tD" << d;
    os << "\tAvg.\n";
    auto row = [&](const char* name, auto get) {
        os << name;
        for (const auto& s : report.per_domain) os << '\t' << get(s);
        os << '\t' << get(report.aggregate) << '\n';
    };
    row("disc_acc", [](const EvalScores& s) { return s.disc_acc; });
    row("rouge1", [](const EvalScores& s) { return s.rouge1; });
    row("rouge2", [](const EvalScores& s) { return s.rouge2; });
    row("rougeL", [](const EvalScores& s) { return s.rougeL; });
    row("bleu4", [](const EvalScores& s) { return s.bleu; });
    return os.str();
}

}  // namespace amoe
