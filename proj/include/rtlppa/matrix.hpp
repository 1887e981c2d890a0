#pragma once

#include <cstddef>
#include <vector>

#include "rtlppa/errors.hpp"

namespace rtlppa {

using Vector = std::vector<double>;

// Dense row-major matrix. Sized for desk-scale models; everything is double
// so gradient checks run at full precision.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    Vector& data() { return data_; }
    const Vector& data() const { return data_; }

    // y = M x
    Vector matvec(const Vector& x) const {
        if (x.size() != cols_) throw ShapeError("matvec: vector length does not match column count");
        Vector y(rows_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* w = row(r);
            double acc = 0.0;
            for (std::size_t c = 0; c < cols_; ++c) acc += w[c] * x[c];
            y[r] = acc;
        }
        return y;
    }

    // y = M^T x
    Vector matvec_transposed(const Vector& x) const {
        if (x.size() != rows_) throw ShapeError("matvec_transposed: vector length does not match row count");
        Vector y(cols_, 0.0);
        for (std::size_t r = 0; r < rows_; ++r) {
            const double* w = row(r);
            const double xi = x[r];
            for (std::size_t c = 0; c < cols_; ++c) y[c] += w[c] * xi;
        }
        return y;
    }

    // self += scale * (a outer b), a of length rows, b of length cols.
    void add_outer(const Vector& a, const Vector& b, double scale = 1.0) {
        if (a.size() != rows_ || b.size() != cols_) throw ShapeError("add_outer: shape mismatch");
        for (std::size_t r = 0; r < rows_; ++r) {
            double* w = row(r);
            const double ar = scale * a[r];
            for (std::size_t c = 0; c < cols_; ++c) w[c] += ar * b[c];
        }
    }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    Vector data_;
};

inline void axpy(Vector& y, double a, const Vector& x) {
    if (y.size() != x.size()) throw ShapeError("axpy: length mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

inline double dot(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace rtlppa
