#pragma once

#include <array>
#include <complex>
#include <span>

#include "mfs/core.hpp"

namespace mfs {

/// Park convention per IEEE-1110: q-axis lags d-axis, a-phase aligned with d.
/// With the default amplitude-invariant scale 2/3, a balanced unit set aligned
/// with the d-axis maps to (1, 0, 0).
struct ParkConvention {
    double scale = 2.0 / 3.0;
};

struct Dq0 {
    double d = 0.0;
    double q = 0.0;
    double zero = 0.0;

    DqPair dq() const { return {d, q}; }
};

Dq0 park(const Abc3& x, double theta, const ParkConvention& conv = {});
Abc3 inverse_park(const Dq0& s, double theta, const ParkConvention& conv = {});

/// Re-expresses s in a frame rotated delta_theta ahead: s * e^{-j delta_theta}.
DqPair frame_rotate(const DqPair& s, double delta_theta);

/// Positive/negative frequency envelopes of a three-wire three-phase signal.
struct SequencePair {
    Complex s_plus;
    Complex s_minus;
};

/// Space-vector decomposition of amplitudes s_k and phase offsets theta_k
/// (the omega_s*t carrier factored out).
SequencePair space_vector(const std::array<double, 3>& amplitudes,
                          const std::array<double, 3>& phases);

/// Sliding-window Fourier dynamic phasor <s>_k over [t0, t0 + T], T = 2*pi/rho,
/// by trapezoidal quadrature. `samples` holds N+1 uniform points spanning the
/// full window (sample spacing dt, N*dt == T to 1e-9 relative); N >= 64.
Complex dynamic_phasor(std::span<const Complex> samples, double t0, double dt, int k, double rho);
Complex dynamic_phasor(std::span<const double> samples, double t0, double dt, int k, double rho);

/// Ideal bus-frequency measurement d/dt atan(vq/vd), returned in per unit.
/// v_dot is the real-time derivative of v. Throws NumericalError below the
/// 1e-6 voltage-magnitude singularity threshold.
double bus_frequency(const DqPair& v, const DqPair& v_dot, double omega_b);

}  // namespace mfs
