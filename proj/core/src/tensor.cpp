#include "amoe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "amoe/errors.hpp"

namespace amoe {

Tensor2::Tensor2(int rows, int cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, 0.0) {
    if (rows < 0 || cols < 0) throw DimensionError("negative tensor dimension");
}

Tensor2::Tensor2(int rows, int cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(rows) * cols)
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
}

Tensor2::Tensor2(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = static_cast<int>(rows.size());
    cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
    data_.reserve(static_cast<std::size_t>(rows_) * cols_);
    for (const auto& r : rows) {
        if (static_cast<int>(r.size()) != cols_) throw DimensionError("ragged initializer rows");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Tensor2 Tensor2::full(int rows, int cols, double v) {
    Tensor2 t(rows, cols);
    t.fill(v);
    return t;
}

Tensor2 Tensor2::identity(int n) {
    Tensor2 t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

bool Tensor2::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor2::max_abs_diff(const Tensor2& o) const {
    if (!same_shape(o)) throw DimensionError("max_abs_diff: " + shape_str(*this) + " vs " + shape_str(o));
    double m = 0.0;
    for (std::size_t i = 0; i < data_.size(); ++i) m = std::max(m, std::fabs(data_[i] - o.data_[i]));
    return m;
}

void Tensor2::fill(double v) {
    for (auto& x : data_) x = v;
}

void Tensor2::add_scaled(const Tensor2& o, double s) {
    if (!same_shape(o)) throw DimensionError("add_scaled: " + shape_str(*this) + " vs " + shape_str(o));
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
}

std::string shape_str(const Tensor2& t) {
    return "[" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + "]";
}

namespace {
void prep(Tensor2& out, int r, int c, bool acc) {
    if (!acc) {
        out = Tensor2(r, c);
    } else if (out.rows() != r || out.cols() != c) {
        throw DimensionError("accumulate target shape " + shape_str(out));
    }
}
}  // namespace

void mm_nn(const Tensor2& a, const Tensor2& b, Tensor2& out, bool acc) {
    if (a.cols() != b.rows())
        throw DimensionError("matmul: " + shape_str(a) + " x " + shape_str(b));
    prep(out, a.rows(), b.cols(), acc);
    const int n = b.cols();
    for (int i = 0; i < a.rows(); ++i) {
        double* o = out.data() + static_cast<std::size_t>(i) * n;
        for (int k = 0; k < a.cols(); ++k) {
            const double av = a.at(i, k);
            if (av == 0.0) continue;
            const double* br = b.data() + static_cast<std::size_t>(k) * n;
            for (int j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
}

void mm_nt(const Tensor2& a, const Tensor2& b, Tensor2& out, bool acc) {
    if (a.cols() != b.cols())
        throw DimensionError("matmul_nt: " + shape_str(a) + " x " + shape_str(b) + "^T");
    prep(out, a.rows(), b.rows(), acc);
    for (int i = 0; i < a.rows(); ++i) {
        const double* ar = a.data() + static_cast<std::size_t>(i) * a.cols();
        for (int j = 0; j < b.rows(); ++j) {
            const double* br = b.data() + static_cast<std::size_t>(j) * b.cols();
            double s = 0.0;
            for (int k = 0; k < a.cols(); ++k) s += ar[k] * br[k];
            out.at(i, j) += s;
        }
    }
}

void mm_tn(const Tensor2& a, const Tensor2& b, Tensor2& out, bool acc) {
    if (a.rows() != b.rows())
        throw DimensionError("matmul_tn: " + shape_str(a) + "^T x " + shape_str(b));
    prep(out, a.cols(), b.cols(), acc);
    const int n = b.cols();
    for (int k = 0; k < a.rows(); ++k) {
        const double* br = b.data() + static_cast<std::size_t>(k) * n;
        for (int i = 0; i < a.cols(); ++i) {
            const double av = a.at(k, i);
            if (av == 0.0) continue;
            double* o = out.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
}

}  // namespace amoe
