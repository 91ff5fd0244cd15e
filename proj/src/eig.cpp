#include "mfs/eig.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mfs {

void balance_in_place(Matrix& a) {
    const int n = a.rows();
    constexpr double radix = 2.0;
    constexpr double radix2 = radix * radix;
    bool done = false;
    while (!done) {
        done = true;
        for (int i = 0; i < n; ++i) {
            double r = 0.0, c = 0.0;
            for (int j = 0; j < n; ++j) {
                if (j == i) continue;
                c += std::abs(a(j, i));
                r += std::abs(a(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix;
            double f = 1.0;
            const double s = c + r;
            while (c < g) {
                f *= radix;
                c *= radix2;
            }
            g = r * radix;
            while (c > g) {
                f /= radix;
                c /= radix2;
            }
            if ((c + r) / f < 0.95 * s) {
                done = false;
                const double ginv = 1.0 / f;
                for (int j = 0; j < n; ++j) a(i, j) *= ginv;
                for (int j = 0; j < n; ++j) a(j, i) *= f;
            }
        }
    }
}

void hessenberg_in_place(Matrix& a) {
    const int n = a.rows();
    std::vector<double> v(static_cast<size_t>(n));
    for (int k = 0; k + 2 < n; ++k) {
        // Householder vector annihilating a(k+2.., k)
        double xnorm = 0.0;
        for (int i = k + 1; i < n; ++i) xnorm = std::hypot(xnorm, a(i, k));
        if (xnorm == 0.0) continue;
        const double alpha = (a(k + 1, k) >= 0.0) ? -xnorm : xnorm;
        double vnorm2 = 0.0;
        for (int i = k + 1; i < n; ++i) {
            v[static_cast<size_t>(i)] = a(i, k);
            if (i == k + 1) v[static_cast<size_t>(i)] -= alpha;
            vnorm2 += v[static_cast<size_t>(i)] * v[static_cast<size_t>(i)];
        }
        if (vnorm2 == 0.0) continue;
        const double beta = 2.0 / vnorm2;
        // left: A := (I - beta v v^T) A on rows k+1..
        for (int j = k; j < n; ++j) {
            double dot = 0.0;
            for (int i = k + 1; i < n; ++i) dot += v[static_cast<size_t>(i)] * a(i, j);
            dot *= beta;
            for (int i = k + 1; i < n; ++i) a(i, j) -= dot * v[static_cast<size_t>(i)];
        }
        // right: A := A (I - beta v v^T) on cols k+1..
        for (int i = 0; i < n; ++i) {
            double dot = 0.0;
            for (int j = k + 1; j < n; ++j) dot += a(i, j) * v[static_cast<size_t>(j)];
            dot *= beta;
            for (int j = k + 1; j < n; ++j) a(i, j) -= dot * v[static_cast<size_t>(j)];
        }
        a(k + 1, k) = alpha;
        for (int i = k + 2; i < n; ++i) a(i, k) = 0.0;
    }
}

namespace {

// Wilkinson shift: eigenvalue of the trailing 2x2 closest to h(m,m).
Complex wilkinson_shift(const DenseMatrix<Complex>& h, int m) {
    const Complex a = h(m - 1, m - 1), b = h(m - 1, m), c = h(m, m - 1), d = h(m, m);
    const Complex tr = a + d;
    const Complex det = a * d - b * c;
    const Complex disc = std::sqrt(tr * tr - 4.0 * det);
    const Complex l1 = 0.5 * (tr + disc);
    const Complex l2 = 0.5 * (tr - disc);
    return (std::abs(l1 - d) < std::abs(l2 - d)) ? l1 : l2;
}

struct Givens {
    Complex c;
    Complex s;
};

}  // namespace

EigResult eigenvalues_impl(Matrix a, int max_sweeps_per_eig) {
    if (a.rows() != a.cols()) throw ArgumentError("eigenvalues: matrix must be square");
    const int n = a.rows();
    EigResult out;
    out.values.assign(static_cast<size_t>(n), Complex{});
    if (n == 0) return out;

    balance_in_place(a);
    hessenberg_in_place(a);

    DenseMatrix<Complex> h(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = std::max(0, i - 1); j < n; ++j) h(i, j) = a(i, j);

    const double eps = std::numeric_limits<double>::epsilon();
    double anorm = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = std::max(0, i - 1); j < n; ++j) anorm += std::abs(h(i, j));
    if (anorm == 0.0) anorm = 1.0;

    int m = n - 1;  // active block ends here
    int iters_this_eig = 0;
    std::vector<Givens> rot(static_cast<size_t>(n));

    while (m >= 0) {
        if (m == 0) {
            out.values[0] = h(0, 0);
            out.deflated++;
            break;
        }
        // deflation scan
        int l = m;
        while (l > 0) {
            double s = std::abs(h(l - 1, l - 1)) + std::abs(h(l, l));
            if (s == 0.0) s = anorm;
            if (std::abs(h(l, l - 1)) <= eps * s) {
                h(l, l - 1) = 0.0;
                break;
            }
            --l;
        }
        if (l == m) {
            out.values[static_cast<size_t>(m)] = h(m, m);
            out.deflated++;
            --m;
            iters_this_eig = 0;
            continue;
        }

        if (iters_this_eig >= max_sweeps_per_eig) {
            out.converged = false;
            for (int i = 0; i <= m; ++i) out.values[static_cast<size_t>(i)] = h(i, i);
            return out;
        }

        Complex mu;
        if (iters_this_eig > 0 && iters_this_eig % 12 == 0) {
            // exceptional shift to break stagnation cycles
            mu = h(m, m) + Complex(1.5 * (std::abs(h(m, m - 1).real()) + std::abs(h(m, m - 1).imag())),
                                   0.5 * std::abs(h(m, m - 1)));
        } else {
            mu = wilkinson_shift(h, m);
        }
        ++iters_this_eig;

        // QR step on the active block [l..m]: factor H - mu I with Givens
        // rotations on adjacent rows, then multiply back on the right.
        for (int k = l; k <= m; ++k) h(k, k) -= mu;
        for (int k = l; k < m; ++k) {
            const Complex x = h(k, k);
            const Complex y = h(k + 1, k);
            const double r = std::hypot(std::abs(x), std::abs(y));
            Givens g;
            if (r == 0.0) {
                g = {1.0, 0.0};
            } else {
                g = {x / r, y / r};
            }
            rot[static_cast<size_t>(k)] = g;
            // rows k, k+1 (columns k..m)
            for (int j = k; j <= m; ++j) {
                const Complex t1 = h(k, j), t2 = h(k + 1, j);
                h(k, j) = std::conj(g.c) * t1 + std::conj(g.s) * t2;
                h(k + 1, j) = -g.s * t1 + g.c * t2;
            }
        }
        // right multiply: columns k, k+1 (rows l..min(k+2, m))
        for (int k = l; k < m; ++k) {
            const Givens g = rot[static_cast<size_t>(k)];
            const int top = l;
            const int bot = std::min(k + 1, m);
            for (int i = top; i <= bot; ++i) {
                const Complex t1 = h(i, k), t2 = h(i, k + 1);
                h(i, k) = t1 * g.c + t2 * g.s;
                h(i, k + 1) = -t1 * std::conj(g.s) + t2 * std::conj(g.c);
            }
        }
        for (int k = l; k <= m; ++k) h(k, k) += mu;
    }
    return out;
}

std::vector<Complex> eigenvalues(const Matrix& a) {
    EigResult r = eigenvalues_impl(a);
    if (!r.converged)
        throw NumericalError("eigenvalues: QR iteration failed to converge (" +
                             std::to_string(r.deflated) + " of " + std::to_string(a.rows()) +
                             " eigenvalues isolated)");
    return r.values;
}

}  // namespace mfs
