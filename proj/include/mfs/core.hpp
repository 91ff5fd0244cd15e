#pragma once

#include <complex>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfs/common.hpp"

namespace mfs {

using Complex = std::complex<double>;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Per-unit system bases. All model equations consume per-unit quantities;
/// omega_b is the only dimensional constant that enters the dynamics (as the
/// 1/omega_b factor on derivative terms).
struct PerUnitBase {
    double s_base_mva = 100.0;
    double v_base_kv = 230.0;
    double omega_b = kTwoPi * 60.0;

    void validate() const {
        if (!(s_base_mva > 0.0) || !(v_base_kv > 0.0) || !(omega_b > 0.0))
            throw ConfigError("per-unit base values must be strictly positive");
    }
};

/// Instantaneous three-phase quantity (per unit).
struct Abc3 {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    Abc3 operator+(const Abc3& o) const { return {a + o.a, b + o.b, c + o.c}; }
    Abc3 operator-(const Abc3& o) const { return {a - o.a, b - o.b, c - o.c}; }
    Abc3 operator*(double s) const { return {a * s, b * s, c * s}; }
    double sum() const { return a + b + c; }
};

/// dq pair interpreted as the complex value d + jq.
struct DqPair {
    double d = 0.0;
    double q = 0.0;

    Complex cx() const { return {d, q}; }
    static DqPair from(Complex z) { return {z.real(), z.imag()}; }

    DqPair operator+(const DqPair& o) const { return {d + o.d, q + o.q}; }
    DqPair operator-(const DqPair& o) const { return {d - o.d, q - o.q}; }
    DqPair operator*(double s) const { return {d * s, q * s}; }
    double mag() const { return std::hypot(d, q); }
};

/// Ordered global state map: differential states strictly precede algebraic
/// ones so the QSP mass matrix is diag(1,...,1,0,...,0).
class StateLayout {
public:
    struct Entry {
        std::string owner;
        std::string name;
        bool differential = true;
    };

    int add_differential(const std::string& owner, const std::string& name);
    int add_algebraic(const std::string& owner, const std::string& name);

    int size() const { return static_cast<int>(entries_.size()); }
    int differential_count() const { return n_diff_; }
    int algebraic_count() const { return size() - n_diff_; }

    /// Global index for (owner, state); throws ConfigError if unknown.
    int index_of(const std::string& owner, const std::string& name) const;
    bool contains(const std::string& owner, const std::string& name) const;

    const Entry& entry(int index) const { return entries_.at(static_cast<size_t>(index)); }
    std::string qualified_name(int index) const;

    bool operator==(const StateLayout& o) const;

private:
    int add(const std::string& owner, const std::string& name, bool differential);

    std::vector<Entry> entries_;
    std::map<std::pair<std::string, std::string>, int> index_;
    int n_diff_ = 0;
};

}  // namespace mfs
