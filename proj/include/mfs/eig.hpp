#pragma once

#include <vector>

#include "mfs/linalg.hpp"

namespace mfs {

struct EigResult {
    std::vector<Complex> values;
    bool converged = true;
    int deflated = 0;  // eigenvalues isolated before any failure
};

/// All eigenvalues of a real dense matrix via balancing, Householder
/// Hessenberg reduction and Wilkinson-shifted QR iteration.
EigResult eigenvalues_impl(Matrix a, int max_sweeps_per_eig = 60);

/// Throwing wrapper; reports partial progress on failure.
std::vector<Complex> eigenvalues(const Matrix& a);

/// Parlett-Reinsch diagonal balancing (radix-2 scaling), exposed for tests.
void balance_in_place(Matrix& a);

/// Householder reduction to upper Hessenberg form (eigenvalue-preserving).
void hessenberg_in_place(Matrix& a);

}  // namespace mfs
