#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <vector>

#include "mfs/common.hpp"
#include "mfs/core.hpp"

namespace mfs {

/// Row-major dense matrix. Target systems stay below a few hundred states;
/// no sparsity machinery.
template <typename T>
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, T{}) {}

    static DenseMatrix identity(int n) {
        DenseMatrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = T{1};
        return m;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    T& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
    const T& operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

    std::span<T> row(int i) { return {data_.data() + static_cast<size_t>(i) * cols_, static_cast<size_t>(cols_)}; }
    std::span<const T> row(int i) const {
        return {data_.data() + static_cast<size_t>(i) * cols_, static_cast<size_t>(cols_)};
    }

    void set_zero() { std::fill(data_.begin(), data_.end(), T{}); }

    std::vector<T> operator*(std::span<const T> x) const {
        std::vector<T> y(static_cast<size_t>(rows_), T{});
        for (int i = 0; i < rows_; ++i) {
            T acc{};
            const T* r = data_.data() + static_cast<size_t>(i) * cols_;
            for (int j = 0; j < cols_; ++j) acc += r[j] * x[static_cast<size_t>(j)];
            y[static_cast<size_t>(i)] = acc;
        }
        return y;
    }

    DenseMatrix operator*(const DenseMatrix& b) const {
        DenseMatrix out(rows_, b.cols_);
        for (int i = 0; i < rows_; ++i)
            for (int k = 0; k < cols_; ++k) {
                const T a = (*this)(i, k);
                if (a == T{}) continue;
                for (int j = 0; j < b.cols_; ++j) out(i, j) += a * b(k, j);
            }
        return out;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<T> data_;
};

using Matrix = DenseMatrix<double>;
using CMatrix = DenseMatrix<Complex>;

/// LU factorization with partial pivoting, reusable across solves.
template <typename T>
class LuFactor {
public:
    LuFactor() = default;
    explicit LuFactor(DenseMatrix<T> a) { factor(std::move(a)); }

    /// Throws NumericalError naming the pivot index on a numerically singular pivot.
    void factor(DenseMatrix<T> a);

    void solve_inplace(std::span<T> b) const;
    std::vector<T> solve(std::span<const T> b) const;

    int size() const { return lu_.rows(); }
    bool valid() const { return lu_.rows() > 0; }

private:
    DenseMatrix<T> lu_;
    std::vector<int> perm_;
};

extern template class LuFactor<double>;
extern template class LuFactor<Complex>;

std::vector<double> lu_solve(const Matrix& a, std::span<const double> b);
std::vector<Complex> lu_solve(const CMatrix& a, std::span<const Complex> b);

double max_abs(std::span<const double> v);

}  // namespace mfs
