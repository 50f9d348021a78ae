#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace amoe {

// Dense row-major 2-D array of doubles. The only tensor shape in the project;
// token batches are (tokens x features) matrices.
class Tensor2 {
  public:
    Tensor2() = default;
    Tensor2(int rows, int cols);  // zero-filled
    Tensor2(int rows, int cols, std::vector<double> data);
    Tensor2(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor2 zeros(int rows, int cols) { return Tensor2(rows, cols); }
    static Tensor2 full(int rows, int cols, double v);
    static Tensor2 identity(int n);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;
    double max_abs_diff(const Tensor2& o) const;  // shapes must match
    bool operator==(const Tensor2& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

    void fill(double v);
    void add_scaled(const Tensor2& o, double s);  // *this += s * o

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// Raw matmul kernels (out is resized; acc=true accumulates into out).
void mm_nn(const Tensor2& a, const Tensor2& b, Tensor2& out, bool acc = false);  // a * b
void mm_nt(const Tensor2& a, const Tensor2& b, Tensor2& out, bool acc = false);  // a * b^T
void mm_tn(const Tensor2& a, const Tensor2& b, Tensor2& out, bool acc = false);  // a^T * b

std::string shape_str(const Tensor2& t);

}  // namespace amoe
