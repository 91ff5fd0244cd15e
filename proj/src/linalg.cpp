#include "mfs/linalg.hpp"

#include <algorithm>
#include <string>

namespace mfs {

namespace {
template <typename T>
double abs_of(const T& v) {
    return std::abs(v);
}
}  // namespace

template <typename T>
void LuFactor<T>::factor(DenseMatrix<T> a) {
    if (a.rows() != a.cols()) throw ArgumentError("LU: matrix must be square");
    const int n = a.rows();
    lu_ = std::move(a);
    perm_.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm_[static_cast<size_t>(i)] = i;

    for (int k = 0; k < n; ++k) {
        int piv = k;
        double pmax = abs_of(lu_(k, k));
        for (int i = k + 1; i < n; ++i) {
            const double v = abs_of(lu_(i, k));
            if (v > pmax) {
                pmax = v;
                piv = i;
            }
        }
        if (!(pmax > 0.0) || !std::isfinite(pmax))
            throw NumericalError("LU: numerically singular pivot at column " + std::to_string(k));
        if (piv != k) {
            for (int j = 0; j < n; ++j) std::swap(lu_(k, j), lu_(piv, j));
            std::swap(perm_[static_cast<size_t>(k)], perm_[static_cast<size_t>(piv)]);
        }
        const T inv_pivot = T{1} / lu_(k, k);
        for (int i = k + 1; i < n; ++i) {
            const T m = lu_(i, k) * inv_pivot;
            lu_(i, k) = m;
            if (m == T{}) continue;
            for (int j = k + 1; j < n; ++j) lu_(i, j) -= m * lu_(k, j);
        }
    }
}

template <typename T>
void LuFactor<T>::solve_inplace(std::span<T> b) const {
    const int n = size();
    if (static_cast<int>(b.size()) != n) throw ArgumentError("LU: rhs size mismatch");
    std::vector<T> y(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) y[static_cast<size_t>(i)] = b[static_cast<size_t>(perm_[static_cast<size_t>(i)])];
    // forward substitution (unit lower)
    for (int i = 1; i < n; ++i) {
        T acc = y[static_cast<size_t>(i)];
        for (int j = 0; j < i; ++j) acc -= lu_(i, j) * y[static_cast<size_t>(j)];
        y[static_cast<size_t>(i)] = acc;
    }
    // back substitution
    for (int i = n - 1; i >= 0; --i) {
        T acc = y[static_cast<size_t>(i)];
        for (int j = i + 1; j < n; ++j) acc -= lu_(i, j) * y[static_cast<size_t>(j)];
        y[static_cast<size_t>(i)] = acc / lu_(i, i);
    }
    std::copy(y.begin(), y.end(), b.begin());
}

template <typename T>
std::vector<T> LuFactor<T>::solve(std::span<const T> b) const {
    std::vector<T> x(b.begin(), b.end());
    solve_inplace(x);
    return x;
}

template class LuFactor<double>;
template class LuFactor<Complex>;

std::vector<double> lu_solve(const Matrix& a, std::span<const double> b) {
    return LuFactor<double>(a).solve(b);
}

std::vector<Complex> lu_solve(const CMatrix& a, std::span<const Complex> b) {
    return LuFactor<Complex>(a).solve(b);
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace mfs
