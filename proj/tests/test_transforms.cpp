#include <doctest.h>

#include <array>
#include <cmath>
#include <vector>

#include "mfs/linalg.hpp"
#include "mfs/transforms.hpp"

using namespace mfs;

namespace {

struct Lcg {
    uint64_t s = 0x2545f4914f6cdd1dull;
    double uniform() {
        s = s * 6364136223846793005ull + 1442695040888963407ull;
        return static_cast<double>(s >> 11) / 9007199254740992.0;
    }
    double symmetric() { return 2.0 * uniform() - 1.0; }
};

// independent oracle: explicit Park matrix c*T_p(theta) per the q-lags-d
// convention; inverse obtained by a 3x3 linear solve rather than the
// closed-form inverse used by the implementation
Matrix park_matrix(double theta, double c) {
    const double third = kTwoPi / 3.0;
    Matrix t(3, 3);
    t(0, 0) = c * std::cos(theta);
    t(0, 1) = c * std::cos(theta - third);
    t(0, 2) = c * std::cos(theta + third);
    t(1, 0) = -c * std::sin(theta);
    t(1, 1) = -c * std::sin(theta - third);
    t(1, 2) = -c * std::sin(theta + third);
    t(2, 0) = t(2, 1) = t(2, 2) = c;
    return t;
}

Abc3 balanced(double amplitude, double angle) {
    const double third = kTwoPi / 3.0;
    return {amplitude * std::cos(angle), amplitude * std::cos(angle - third),
            amplitude * std::cos(angle + third)};
}

}  // namespace

TEST_SUITE("transforms") {

TEST_CASE("park maps the aligned balanced set to (1,0,0)") {
    const double theta = 0.7;
    const Dq0 s = park(balanced(1.0, theta), theta);
    CHECK(s.d == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(s.q == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
    CHECK(s.zero == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
}

TEST_CASE("park of zero is zero") {
    const Dq0 s = park({0.0, 0.0, 0.0}, 1.3);
    CHECK(s.d == 0.0);
    CHECK(s.q == 0.0);
    CHECK(s.zero == 0.0);
}

TEST_CASE("park agrees with the explicit matrix product") {
    Lcg rng;
    const double theta = 0.7;
    const Matrix t = park_matrix(theta, 2.0 / 3.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Abc3 x{rng.symmetric(), rng.symmetric(), rng.symmetric()};
        const std::vector<double> xv{x.a, x.b, x.c};
        const auto ref = t * std::span<const double>(xv);
        const Dq0 s = park(x, theta);
        CHECK(std::abs(s.d - ref[0]) < 1e-14);
        CHECK(std::abs(s.q - ref[1]) < 1e-14);
        CHECK(std::abs(s.zero - ref[2]) < 1e-14);
    }
}

TEST_CASE("inverse_park of (1,0,0) at theta=0") {
    const Abc3 x = inverse_park({1.0, 0.0, 0.0}, 0.0);
    CHECK(x.a == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(x.b == doctest::Approx(-0.5).epsilon(1e-14));
    CHECK(x.c == doctest::Approx(-0.5).epsilon(1e-14));
}

TEST_CASE("inverse_park of zero is zero") {
    const Abc3 x = inverse_park({0.0, 0.0, 0.0}, 2.1);
    CHECK(x.a == 0.0);
    CHECK(x.b == 0.0);
    CHECK(x.c == 0.0);
}

TEST_CASE("round trip is the identity to 1e-12 (matrix-solve oracle)") {
    Lcg rng;
    for (int trial = 0; trial < 100; ++trial) {
        const double theta = kTwoPi * rng.symmetric();
        const Abc3 x{rng.symmetric(), rng.symmetric(), rng.symmetric()};
        const Dq0 s = park(x, theta);
        const Abc3 back = inverse_park(s, theta);
        CHECK(std::abs(back.a - x.a) < 1e-12);
        CHECK(std::abs(back.b - x.b) < 1e-12);
        CHECK(std::abs(back.c - x.c) < 1e-12);
        // independent route: solve c*T_p * y = dq0 for y
        const std::vector<double> rhs{s.d, s.q, s.zero};
        const auto y = lu_solve(park_matrix(theta, 2.0 / 3.0), rhs);
        CHECK(std::abs(y[0] - x.a) < 1e-12);
        CHECK(std::abs(y[1] - x.b) < 1e-12);
        CHECK(std::abs(y[2] - x.c) < 1e-12);
    }
}

TEST_CASE("frame_rotate basics") {
    const DqPair s{0.3, -0.8};
    const DqPair same = frame_rotate(s, 0.0);
    CHECK(same.d == s.d);
    CHECK(same.q == s.q);
    const DqPair quarter = frame_rotate({1.0, 0.0}, kTwoPi / 4.0);
    CHECK(quarter.d == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    CHECK(quarter.q == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("frame_rotate group inverse and magnitude invariance") {
    Lcg rng;
    for (int trial = 0; trial < 50; ++trial) {
        const DqPair s{rng.symmetric(), rng.symmetric()};
        const double a = 4.0 * rng.symmetric();
        const DqPair fwd = frame_rotate(s, a);
        const DqPair back = frame_rotate(fwd, -a);
        CHECK(std::abs(back.d - s.d) < 1e-14);
        CHECK(std::abs(back.q - s.q) < 1e-14);
        CHECK(std::abs(fwd.mag() - s.mag()) < 1e-12);
    }
}

TEST_CASE("space vector of the balanced set") {
    const double third = kTwoPi / 3.0;
    const SequencePair sp = space_vector({1.0, 1.0, 1.0}, {0.0, -third, third});
    CHECK(std::abs(sp.s_plus - Complex(3.0, 0.0)) < 1e-14);
    CHECK(std::abs(sp.s_minus) < 1e-10);
}

TEST_CASE("space vector of zero amplitudes") {
    const SequencePair sp = space_vector({0.0, 0.0, 0.0}, {0.4, 1.0, -2.0});
    CHECK(std::abs(sp.s_plus) == 0.0);
    CHECK(std::abs(sp.s_minus) == 0.0);
}

TEST_CASE("swapping phases b and c moves the signal to the negative sequence") {
    const double third = kTwoPi / 3.0;
    const SequencePair sp = space_vector({1.0, 1.0, 1.0}, {0.0, third, -third});
    CHECK(std::abs(sp.s_plus) < 1e-14);
    CHECK(std::abs(sp.s_minus - Complex(3.0, 0.0)) < 1e-14);
}

TEST_CASE("balanced-set equivalence: park equals s_plus/3 on the rotating frame") {
    Lcg rng;
    const double third = kTwoPi / 3.0;
    for (int trial = 0; trial < 20; ++trial) {
        const double amp = 0.5 + rng.uniform();
        const double phi = kTwoPi * rng.symmetric();
        const double wt = 10.0 * rng.symmetric();  // omega_s * t
        const Abc3 x = balanced(amp, wt + phi);
        const Dq0 s = park(x, wt);
        const SequencePair sp = space_vector({amp, amp, amp}, {phi, phi - third, phi + third});
        CHECK(std::abs(Complex(s.d, s.q) - sp.s_plus / 3.0) < 1e-12);
    }
}

TEST_CASE("dynamic phasor of cos at the fundamental is one half") {
    const double rho = kTwoPi * 60.0;
    const double period = kTwoPi / rho;
    const int n = 128;
    std::vector<double> samples(static_cast<size_t>(n + 1));
    const double dt = period / n;
    for (int i = 0; i <= n; ++i) samples[static_cast<size_t>(i)] = std::cos(rho * (0.3 + i * dt));
    const Complex p = dynamic_phasor(std::span<const double>(samples), 0.3, dt, 1, rho);
    CHECK(std::abs(p - Complex(0.5, 0.0)) < 1e-6);
}

TEST_CASE("dynamic phasor of a constant at k=0 is the constant") {
    const double rho = 100.0;
    const double period = kTwoPi / rho;
    const int n = 64;
    std::vector<double> samples(static_cast<size_t>(n + 1), 2.75);
    const Complex p = dynamic_phasor(std::span<const double>(samples), 0.0, period / n, 0, rho);
    CHECK(std::abs(p - Complex(2.75, 0.0)) < 1e-12);
}

TEST_CASE("dynamic phasor of cos at the second harmonic vanishes") {
    const double rho = kTwoPi * 60.0;
    const double period = kTwoPi / rho;
    const int n = 256;
    std::vector<double> samples(static_cast<size_t>(n + 1));
    const double dt = period / n;
    for (int i = 0; i <= n; ++i) samples[static_cast<size_t>(i)] = std::cos(rho * i * dt);
    const Complex p = dynamic_phasor(std::span<const double>(samples), 0.0, dt, 2, rho);
    CHECK(std::abs(p) < 1e-6);
}

TEST_CASE("dynamic phasor rejects window/period mismatch and short windows") {
    const double rho = 100.0;
    std::vector<double> samples(129, 1.0);
    CHECK_THROWS_AS(
        static_cast<void>(dynamic_phasor(std::span<const double>(samples), 0.0, 1e-3, 1, rho)),
        ArgumentError);
    std::vector<double> few(33, 1.0);
    const double period = kTwoPi / rho;
    CHECK_THROWS_AS(
        static_cast<void>(dynamic_phasor(std::span<const double>(few), 0.0, period / 32, 1, rho)),
        ArgumentError);
}

TEST_CASE("differential rule: d<s>/dt + j rho <s> equals <ds/dt>") {
    // s(t) = a(t) e^{j rho t} with a slowly varying; the relation is an exact
    // operator identity, so agreement is limited only by quadrature and the
    // finite-difference step
    const double rho = kTwoPi * 60.0;
    const double period = kTwoPi / rho;
    const int n = 512;
    const double dt = period / n;
    auto a = [](double t) { return Complex(1.0 + 0.05 * std::sin(2.0 * t), 0.03 * std::cos(3.0 * t)); };
    auto adot = [](double t) {
        return Complex(0.1 * std::cos(2.0 * t), -0.09 * std::sin(3.0 * t));
    };
    auto s = [&](double t) { return a(t) * std::exp(Complex(0.0, rho * t)); };
    auto sdot = [&](double t) {
        return (adot(t) + Complex(0.0, rho) * a(t)) * std::exp(Complex(0.0, rho * t));
    };
    auto phasor_at = [&](double t_end, auto&& fn) {
        std::vector<Complex> w(static_cast<size_t>(n + 1));
        const double t0 = t_end - period;
        for (int i = 0; i <= n; ++i) w[static_cast<size_t>(i)] = fn(t0 + i * dt);
        return dynamic_phasor(std::span<const Complex>(w), t0, dt, 1, rho);
    };
    const double t = 0.8;
    const double h = 1e-5;
    const Complex dphasor = (phasor_at(t + h, s) - phasor_at(t - h, s)) / (2.0 * h);
    const Complex lhs = dphasor + Complex(0.0, rho) * phasor_at(t, s);
    const Complex rhs = phasor_at(t, sdot);
    CHECK(std::abs(lhs - rhs) < 1e-4 * std::max(1.0, std::abs(rhs)));
}

TEST_CASE("bus frequency examples") {
    const double wb = kTwoPi * 60.0;
    CHECK(bus_frequency({1.0, 0.0}, {0.0, 0.0}, wb) == 0.0);
    CHECK(bus_frequency({1.0, 0.0}, {0.0, wb * 0.01}, wb) == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("bus frequency of a uniformly rotating voltage is the rotation rate") {
    Lcg rng;
    const double wb = kTwoPi * 50.0;
    for (int trial = 0; trial < 10; ++trial) {
        const double mag = 0.2 + rng.uniform();
        const double ang = kTwoPi * rng.symmetric();
        const double domega = 0.05 * rng.symmetric();  // pu
        const DqPair v{mag * std::cos(ang), mag * std::sin(ang)};
        // v rotating at domega pu: vdot = j*domega*wb*v
        const DqPair vdot{-domega * wb * v.q, domega * wb * v.d};
        CHECK(bus_frequency(v, vdot, wb) == doctest::Approx(domega).epsilon(1e-12));
    }
}

TEST_CASE("bus frequency singular at voltage collapse") {
    CHECK_THROWS_AS(static_cast<void>(bus_frequency({1e-7, 0.0}, {0.0, 1.0}, 377.0)),
                    NumericalError);
}

}  // TEST_SUITE
