#include "mfs/transforms.hpp"

#include <cmath>
#include <string>

namespace mfs {

namespace {
constexpr double kThird = kTwoPi / 3.0;
}

Dq0 park(const Abc3& x, double theta, const ParkConvention& conv) {
    const double ca = std::cos(theta);
    const double cb = std::cos(theta - kThird);
    const double cc = std::cos(theta + kThird);
    const double sa = std::sin(theta);
    const double sb = std::sin(theta - kThird);
    const double sc = std::sin(theta + kThird);
    Dq0 out;
    out.d = conv.scale * (ca * x.a + cb * x.b + cc * x.c);
    out.q = -conv.scale * (sa * x.a + sb * x.b + sc * x.c);
    out.zero = conv.scale * (x.a + x.b + x.c);
    return out;
}

Abc3 inverse_park(const Dq0& s, double theta, const ParkConvention& conv) {
    // Exact right-inverse of c*T_p: rows (cos, -sin, 1/2) scaled by (2/3)/c.
    const double k = 2.0 / (3.0 * conv.scale);
    const double z = s.zero * 0.5 * k;
    Abc3 out;
    out.a = k * (std::cos(theta) * s.d - std::sin(theta) * s.q) + z;
    out.b = k * (std::cos(theta - kThird) * s.d - std::sin(theta - kThird) * s.q) + z;
    out.c = k * (std::cos(theta + kThird) * s.d - std::sin(theta + kThird) * s.q) + z;
    return out;
}

DqPair frame_rotate(const DqPair& s, double delta_theta) {
    const double c = std::cos(delta_theta);
    const double sn = std::sin(delta_theta);
    return {s.d * c + s.q * sn, -s.d * sn + s.q * c};
}

SequencePair space_vector(const std::array<double, 3>& amplitudes,
                          const std::array<double, 3>& phases) {
    const Complex j(0.0, 1.0);
    SequencePair out;
    out.s_plus = amplitudes[0] * std::exp(j * phases[0]) +
                 amplitudes[1] * std::exp(j * (phases[1] + kThird)) +
                 amplitudes[2] * std::exp(j * (phases[2] - kThird));
    out.s_minus = amplitudes[0] * std::exp(-j * phases[0]) +
                  amplitudes[1] * std::exp(-j * (phases[1] - kThird)) +
                  amplitudes[2] * std::exp(-j * (phases[2] + kThird));
    return out;
}

Complex dynamic_phasor(std::span<const Complex> samples, double t0, double dt, int k, double rho) {
    if (samples.size() < 2) throw ArgumentError("dynamic_phasor: need at least two samples");
    if (!(rho > 0.0)) throw ArgumentError("dynamic_phasor: rho must be positive");
    const size_t n_intervals = samples.size() - 1;
    const double period = kTwoPi / rho;
    const double window = static_cast<double>(n_intervals) * dt;
    if (std::abs(window - period) > 1e-9 * period)
        throw ArgumentError("dynamic_phasor: window length " + std::to_string(window) +
                            " does not match period " + std::to_string(period));
    if (n_intervals < 64)
        throw ArgumentError("dynamic_phasor: need at least 64 samples per period");

    const Complex j(0.0, 1.0);
    Complex acc = 0.0;
    for (size_t i = 0; i <= n_intervals; ++i) {
        const double tau = t0 + static_cast<double>(i) * dt;
        const double w = (i == 0 || i == n_intervals) ? 0.5 : 1.0;
        acc += w * samples[i] * std::exp(-j * (static_cast<double>(k) * rho * tau));
    }
    return acc * dt / period;
}

Complex dynamic_phasor(std::span<const double> samples, double t0, double dt, int k, double rho) {
    std::vector<Complex> cs(samples.begin(), samples.end());
    return dynamic_phasor(std::span<const Complex>(cs), t0, dt, k, rho);
}

double bus_frequency(const DqPair& v, const DqPair& v_dot, double omega_b) {
    const double mag2 = v.d * v.d + v.q * v.q;
    if (mag2 <= 1e-12)  // |v| <= 1e-6
        throw NumericalError("bus_frequency: voltage magnitude below measurement singularity threshold");
    return (v.d * v_dot.q - v.q * v_dot.d) / (mag2 * omega_b);
}

}  // namespace mfs
