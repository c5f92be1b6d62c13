#include "faegen/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "faegen/errors.hpp"

namespace faegen {

namespace {

std::string vshape(std::size_t n) { return "(" + std::to_string(n) + ")"; }

void require_same_dim(std::size_t a, std::size_t b, const char* op) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": dimension mismatch " + vshape(a) + " vs " + vshape(b));
    }
}

} // namespace

void Vector::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("Matrix: ragged initializer list");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values do not fill " + shape_string());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

void Matrix::set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: shape mismatch " + a.shape_string() + " * " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.data() + i * out.cols();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            const double* brow = b.data() + k * b.cols();
            for (std::size_t j = 0; j < b.cols(); ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "dot");
    const std::size_t n = a.size();
    // Four independent partial sums; the reduction order is fixed, so results
    // are reproducible on a given build.
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) {
        s0 += a[i] * b[i];
    }
    return (s0 + s1) + (s2 + s3);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    require_same_dim(x.size(), y.size(), "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] += alpha * x[i];
    }
}

void matvec_accumulate(const Matrix& a, std::span<const double> x, std::span<double> out) {
    if (a.cols() != x.size() || a.rows() != out.size()) {
        throw ShapeError("matvec: shape mismatch " + a.shape_string() + " * " + vshape(x.size()) + " -> " +
                         vshape(out.size()));
    }
    for (std::size_t r = 0; r < a.rows(); ++r) {
        out[r] += dot(a.row(r), x);
    }
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    Vector out(a.rows());
    matvec_accumulate(a, x, out.span());
    return out;
}

void matvec_transposed_accumulate(const Matrix& a, std::span<const double> x, std::span<double> out) {
    if (a.rows() != x.size() || a.cols() != out.size()) {
        throw ShapeError("matvec_transposed: shape mismatch " + a.shape_string() + "^T * " + vshape(x.size()) +
                         " -> " + vshape(out.size()));
    }
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double xr = x[r];
        if (xr == 0.0) {
            continue;
        }
        const double* arow = a.data() + r * a.cols();
        for (std::size_t c = 0; c < a.cols(); ++c) {
            out[c] += xr * arow[c];
        }
    }
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    Vector out(a.cols());
    matvec_transposed_accumulate(a, x, out.span());
    return out;
}

void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double scale) {
    if (m.rows() != u.size() || m.cols() != v.size()) {
        throw ShapeError("add_outer: shape mismatch " + m.shape_string() + " vs " + vshape(u.size()) + " x " +
                         vshape(v.size()));
    }
    for (std::size_t c = 0; c < v.size(); ++c) {
        if (v[c] == 0.0) {
            continue;
        }
        const double s = scale * v[c];
        for (std::size_t r = 0; r < u.size(); ++r) {
            m(r, c) += s * u[r];
        }
    }
}

Vector softmax(const Vector& v) {
    if (v.empty()) {
        throw ShapeError("softmax: empty vector");
    }
    const double m = *std::max_element(v.begin(), v.end());
    Vector out(v.dim());
    double total = 0.0;
    for (std::size_t i = 0; i < v.dim(); ++i) {
        out[i] = std::exp(v[i] - m);
        total += out[i];
    }
    for (double& x : out) {
        x /= total;
    }
    return out;
}

Vector log_softmax(const Vector& v) {
    if (v.empty()) {
        throw ShapeError("log_softmax: empty vector");
    }
    const auto max_it = std::max_element(v.begin(), v.end());
    const double m = *max_it;
    const auto argmax = static_cast<std::size_t>(max_it - v.begin());
    double others = 0.0;
    for (std::size_t i = 0; i < v.dim(); ++i) {
        if (i != argmax) {
            others += std::exp(v[i] - m);
        }
    }
    const double log_norm = std::log1p(others);
    Vector out(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) {
        out[i] = (v[i] - m) - log_norm;
    }
    return out;
}

Matrix diag(const Vector& v) {
    if (v.empty()) {
        throw ShapeError("diag: empty vector");
    }
    Matrix m(v.dim(), v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) {
        m(i, i) = v[i];
    }
    return m;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Vector tanh_ew(const Vector& v) {
    Vector out(v.dim());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return std::tanh(x); });
    return out;
}

Vector sigmoid_ew(const Vector& v) {
    Vector out(v.dim());
    std::transform(v.begin(), v.end(), out.begin(), [](double x) { return sigmoid(x); });
    return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
    require_same_dim(a.dim(), b.dim(), "hadamard");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        out[i] = a[i] * b[i];
    }
    return out;
}

Vector add(const Vector& a, const Vector& b) {
    require_same_dim(a.dim(), b.dim(), "add");
    Vector out(a.dim());
    for (std::size_t i = 0; i < a.dim(); ++i) {
        out[i] = a[i] + b[i];
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("add: shape mismatch " + a.shape_string() + " vs " + b.shape_string());
    }
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data()[i] += b.data()[i];
    }
    return out;
}

Vector concat(const Vector& a, const Vector& b) {
    Vector out(a.dim() + b.dim());
    std::copy(a.begin(), a.end(), out.begin());
    std::copy(b.begin(), b.end(), out.begin() + static_cast<std::ptrdiff_t>(a.dim()));
    return out;
}

Vector one_hot(std::size_t dim, std::size_t index) {
    if (index >= dim) {
        throw InputError("one_hot: index " + std::to_string(index) + " out of range for dim " + std::to_string(dim));
    }
    Vector out(dim);
    out[index] = 1.0;
    return out;
}

double compensated_sum(std::span<const double> v) {
    double sum = 0.0;
    double carry = 0.0;
    for (double x : v) {
        const double t = sum + x;
        carry += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
        sum = t;
    }
    return sum + carry;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    require_same_dim(a.size(), b.size(), "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

} // namespace faegen
