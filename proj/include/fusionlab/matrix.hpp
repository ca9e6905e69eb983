#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "fusionlab/rng.hpp"

namespace fusionlab {

// Dense row-major matrix of 64-bit floats; the only tensor type in the
// library.  Vectors (biases, norm scales) are stored as 1xN matrices so that
// parameter traversal, optimizers, and serialization handle one shape kind.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(std::vector<double> v);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row_ptr(std::size_t r) { return data_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool all_finite() const;
    std::string shape_str() const;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

bool operator==(const Matrix& a, const Matrix& b);

// Standard product; throws ShapeError naming both operand shapes when the
// inner dimensions disagree.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// Row-wise softmax with per-row max subtraction, stable for entries of any
// magnitude.
Matrix softmax_rows(const Matrix& m);

// GELU via the tanh approximation:
//   0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 x^3)))
double gelu_scalar(double x);
double gelu_grad_scalar(double x);
Matrix gelu(const Matrix& m);
Matrix gelu_grad(const Matrix& m);

// Per-row normalization to mean 0 / variance 1 followed by affine
// scale/shift.  gamma and beta must have length m.cols().
Matrix layer_norm(const Matrix& m, const std::vector<double>& gamma,
                  const std::vector<double>& beta, double eps);

Matrix add(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);
void axpy_inplace(Matrix& a, double s, const Matrix& b);  // a += s * b
void scale_inplace(Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);

// Central differences (f(t + h e_i) - f(t - h e_i)) / 2h for every
// coordinate.  Throws EvaluationError if f returns a non-finite value.
std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& theta, double h);

// Uniform on [-b, +b] with b = sqrt(6 / (rows + cols)), filled in row-major
// draw order so a given rng stream always produces the same matrix.
Matrix xavier_init(std::size_t rows, std::size_t cols, SeededRng& rng);

}  // namespace fusionlab
