#include <doctest.h>

#include <cmath>

#include "mfs/linalg.hpp"

using namespace mfs;

namespace {

// deterministic LCG so test data is reproducible
struct Lcg {
    uint64_t s = 0x9e3779b97f4a7c15ull;
    double uniform() {
        s = s * 6364136223846793005ull + 1442695040888963407ull;
        return static_cast<double>(s >> 11) / 9007199254740992.0;
    }
    double symmetric() { return 2.0 * uniform() - 1.0; }
};

}  // namespace

TEST_SUITE("linalg") {

TEST_CASE("identity solve returns rhs") {
    Matrix a = Matrix::identity(4);
    std::vector<double> b{1.0, -2.0, 3.5, 0.25};
    const auto x = lu_solve(a, b);
    for (int i = 0; i < 4; ++i) CHECK(x[static_cast<size_t>(i)] == doctest::Approx(b[static_cast<size_t>(i)]));
}

TEST_CASE("hilbert 4x4 against the exact rational solution") {
    Matrix h(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) h(i, j) = 1.0 / static_cast<double>(i + j + 1);
    // b = H * [1 2 3 4] evaluated in exact rationals
    const std::vector<double> b{4.0, 163.0 / 60.0, 21.0 / 10.0, 241.0 / 140.0};
    const auto x = lu_solve(h, b);
    // cond_2(H_4) ~ 1.6e4; allow a comfortable multiple of cond * eps
    for (int i = 0; i < 4; ++i)
        CHECK(std::abs(x[static_cast<size_t>(i)] - static_cast<double>(i + 1)) < 1e-9);
}

TEST_CASE("random well-conditioned 50x50 residual") {
    Lcg rng;
    const int n = 50;
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = rng.symmetric() + (i == j ? 60.0 : 0.0);
    std::vector<double> b(static_cast<size_t>(n));
    for (auto& v : b) v = rng.symmetric();
    const auto x = lu_solve(a, b);
    const auto ax = a * std::span<const double>(x);
    double rmax = 0.0, bmax = 0.0;
    for (int i = 0; i < n; ++i) {
        rmax = std::max(rmax, std::abs(ax[static_cast<size_t>(i)] - b[static_cast<size_t>(i)]));
        bmax = std::max(bmax, std::abs(b[static_cast<size_t>(i)]));
    }
    CHECK(rmax < 1e-10 * bmax);
}

TEST_CASE("singular pivot reported with column index") {
    Matrix a(2, 2);
    a(0, 0) = 1.0;
    a(0, 1) = 2.0;
    a(1, 0) = 2.0;
    a(1, 1) = 4.0;
    std::vector<double> b{1.0, 2.0};
    CHECK_THROWS_WITH_AS(static_cast<void>(lu_solve(a, b)),
                         doctest::Contains("singular pivot at column 1"), NumericalError);
}

TEST_CASE("complex lu solves a known system") {
    CMatrix a(2, 2);
    a(0, 0) = {1.0, 1.0};
    a(0, 1) = {0.0, -1.0};
    a(1, 0) = {2.0, 0.0};
    a(1, 1) = {3.0, 1.0};
    const std::vector<Complex> xref{{0.5, -0.25}, {1.0, 2.0}};
    const auto b = a * std::span<const Complex>(xref);
    const auto x = lu_solve(a, std::span<const Complex>(b));
    for (int i = 0; i < 2; ++i) CHECK(std::abs(x[static_cast<size_t>(i)] - xref[static_cast<size_t>(i)]) < 1e-14);
}

TEST_CASE("factorization reusable across right-hand sides") {
    Matrix a(3, 3);
    Lcg rng;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = rng.symmetric() + (i == j ? 5.0 : 0.0);
    LuFactor<double> lu(a);
    for (int trial = 0; trial < 4; ++trial) {
        std::vector<double> b{rng.symmetric(), rng.symmetric(), rng.symmetric()};
        const auto x = lu.solve(b);
        const auto ax = a * std::span<const double>(x);
        for (int i = 0; i < 3; ++i) CHECK(ax[static_cast<size_t>(i)] == doctest::Approx(b[static_cast<size_t>(i)]).epsilon(1e-12));
    }
}

}  // TEST_SUITE
