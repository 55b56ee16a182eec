#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace eigenmap {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

/// Dense row-major tensor of doubles. Rank 0 (a scalar) has an empty shape
/// and one element. Most of the library works with rank-2 tensors.
class Tensor {
public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

    static Tensor matrix(std::size_t r, std::size_t c, double fill = 0.0) {
        return Tensor(Shape{r, c}, fill);
    }

    static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        Tensor t = matrix(r, c);
        std::size_t i = 0;
        for (const auto& row : rows) {
            if (row.size() != c) throw ShapeError("from_rows: ragged initializer");
            std::copy(row.begin(), row.end(), t.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
            ++i;
        }
        return t;
    }

    static Tensor identity(std::size_t n) {
        Tensor t = matrix(n, n);
        for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const { return shape_.size() >= 1 ? shape_[0] : 1; }
    std::size_t cols() const { return shape_.size() >= 2 ? shape_[1] : 1; }
    bool is_scalar() const { return data_.size() == 1 && shape_.empty(); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    double item() const {
        if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    Tensor transposed() const {
        require_matrix("transpose");
        Tensor t = matrix(cols(), rows());
        for (std::size_t i = 0; i < rows(); ++i)
            for (std::size_t j = 0; j < cols(); ++j) t(j, i) = (*this)(i, j);
        return t;
    }

    Tensor row(std::size_t r) const {
        require_matrix("row");
        Tensor t = matrix(1, cols());
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(r * cols()), cols(), t.data_.begin());
        return t;
    }

    Tensor col(std::size_t c) const {
        require_matrix("col");
        Tensor t = matrix(rows(), 1);
        for (std::size_t i = 0; i < rows(); ++i) t[i] = (*this)(i, c);
        return t;
    }

    void require_matrix(const char* op) const {
        if (shape_.size() != 2)
            throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_str(shape_));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Plain numeric kernels shared by the tape and by non-differentiated code.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    a.require_matrix("matmul");
    b.require_matrix("matmul");
    if (a.cols() != b.rows())
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " @ " +
                         shape_str(b.shape()));
    const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
    Tensor c = Tensor::matrix(n, p);
    const double* A = a.data().data();
    const double* B = b.data().data();
    double* C = c.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = C + i * p;
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = A[i * m + k];
            if (aik == 0.0) continue;
            const double* bk = B + k * p;
            for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

/// a^T b without materializing the transpose.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    a.require_matrix("matmul_tn");
    b.require_matrix("matmul_tn");
    if (a.rows() != b.rows())
        throw ShapeError("matmul_tn: row counts differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t n = a.cols(), m = a.rows(), p = b.cols();
    Tensor c = Tensor::matrix(n, p);
    for (std::size_t k = 0; k < m; ++k) {
        const double* ak = a.data().data() + k * n;
        const double* bk = b.data().data() + k * p;
        for (std::size_t i = 0; i < n; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = c.data().data() + i * p;
            for (std::size_t j = 0; j < p; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

/// a b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    a.require_matrix("matmul_nt");
    b.require_matrix("matmul_nt");
    if (a.cols() != b.cols())
        throw ShapeError("matmul_nt: column counts differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    const std::size_t n = a.rows(), m = a.cols(), p = b.rows();
    Tensor c = Tensor::matrix(n, p);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data().data() + i * m;
        for (std::size_t j = 0; j < p; ++j) {
            const double* bj = b.data().data() + j * m;
            double s = 0.0;
            for (std::size_t k = 0; k < m; ++k) s += ai[k] * bj[k];
            c(i, j) = s;
        }
    }
    return c;
}

inline double frobenius_norm(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return std::sqrt(s);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Rows selected by index, in the given order.
inline Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
    a.require_matrix("gather_rows");
    Tensor t = Tensor::matrix(idx.size(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.rows()) throw ShapeError("gather_rows: index out of range");
        std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(idx[i] * a.cols()), a.cols(),
                    t.data().begin() + static_cast<std::ptrdiff_t>(i * a.cols()));
    }
    return t;
}

inline Tensor gather_cols(const Tensor& a, const std::vector<std::size_t>& idx) {
    a.require_matrix("gather_cols");
    Tensor t = Tensor::matrix(a.rows(), idx.size());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (idx[j] >= a.cols()) throw ShapeError("gather_cols: index out of range");
            t(r, j) = a(r, idx[j]);
        }
    return t;
}

}  // namespace eigenmap
