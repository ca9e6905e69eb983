#include "fusionlab/matrix.hpp"

#include <cmath>
#include <sstream>

#include "fusionlab/errors.hpp"

namespace fusionlab {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: data length " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m.cols_) throw ShapeError("Matrix::from_rows: ragged rows");
        std::size_t c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

Matrix Matrix::row_vector(std::vector<double> v) {
    return Matrix(1, v.size(), std::move(v));
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a.data() == b.data();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    Matrix out(a.rows(), b.cols());
    // i-k-j order keeps the inner loop contiguous in both b and out.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
    return out;
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* in = m.row_ptr(r);
        double* o = out.row_ptr(r);
        double mx = in[0];
        for (std::size_t c = 1; c < m.cols(); ++c) mx = std::max(mx, in[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (std::size_t c = 0; c < m.cols(); ++c) o[c] /= sum;
    }
    return out;
}

namespace {
constexpr double kGeluCoeff = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / M_PI);
}  // namespace

double gelu_scalar(double x) {
    double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad_scalar(double x) {
    double u = kSqrt2OverPi * (x + kGeluCoeff * x * x * x);
    double t = std::tanh(u);
    double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoeff * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

Matrix gelu(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = gelu_scalar(m.data()[i]);
    return out;
}

Matrix gelu_grad(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) out.data()[i] = gelu_grad_scalar(m.data()[i]);
    return out;
}

Matrix layer_norm(const Matrix& m, const std::vector<double>& gamma,
                  const std::vector<double>& beta, double eps) {
    if (gamma.size() != m.cols() || beta.size() != m.cols()) {
        throw ShapeError("layer_norm: gamma/beta length " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()) + " does not match width " +
                         std::to_string(m.cols()));
    }
    if (eps <= 0.0) throw ConfigError("layer_norm: eps must be positive");
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* in = m.row_ptr(r);
        double* o = out.row_ptr(r);
        double mean = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) mean += in[c];
        mean /= static_cast<double>(m.cols());
        double var = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) {
            double d = in[c] - mean;
            var += d * d;
        }
        var /= static_cast<double>(m.cols());
        double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < m.cols(); ++c) {
            o[c] = gamma[c] * (in[c] - mean) * inv + beta[c];
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    Matrix out = a;
    add_inplace(out, b);
    return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += b.data()[i];
}

void axpy_inplace(Matrix& a, double s, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("axpy: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    for (std::size_t i = 0; i < a.size(); ++i) a.data()[i] += s * b.data()[i];
}

void scale_inplace(Matrix& a, double s) {
    for (double& v : a.data()) v *= s;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("hadamard: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

std::vector<double> finite_diff_grad(const std::function<double(const std::vector<double>&)>& f,
                                     const std::vector<double>& theta, double h) {
    if (h <= 0.0) throw ConfigError("finite_diff_grad: h must be positive");
    std::vector<double> grad(theta.size());
    std::vector<double> probe = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        probe[i] = theta[i] + h;
        double fp = f(probe);
        probe[i] = theta[i] - h;
        double fm = f(probe);
        probe[i] = theta[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw EvaluationError("finite_diff_grad: objective returned a non-finite value at coordinate " +
                                  std::to_string(i));
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

Matrix xavier_init(std::size_t rows, std::size_t cols, SeededRng& rng) {
    if (rows == 0 || cols == 0) throw ConfigError("xavier_init: dimensions must be >= 1");
    double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = rng.uniform(-bound, bound);
    return out;
}

}  // namespace fusionlab
