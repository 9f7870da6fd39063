#pragma once

// Independent reference computations used by the unit and acceptance tests. Nothing here calls
// the library's own solvers.

#include "pgsearch/dp_scheduler.hpp"
#include "pgsearch/pg_dynamics.hpp"

#include <gmpxx.h>

#include <array>
#include <cstdint>
#include <random>
#include <vector>

namespace oracle {

/// Device accelerations per unit device torque from the constrained Lagrange equations
///   J a = tau + G^T lambda,  G a = 0
/// solved directly by Gauss-Jordan elimination on the KKT system. Entry [i][j] is the
/// acceleration of device i under a unit torque on device j.
std::array<std::array<mpq_class, 4>, 4> lagrange_a_star(const pgs::PowertrainConfiguration& config,
                                                        const pgs::InertiaSet& inertias,
                                                        const std::vector<pgs::Connection>& connections);

/// Rank of a rational matrix given as rows.
int rank_of(std::vector<std::vector<mpq_class>> rows);

struct ExhaustiveResult {
  bool feasible = false;
  double cost = 0;
  std::vector<int> ops;
};

/// Minimum of fuel + alpha * shift penalties + terminal SOC cost over every operation sequence,
/// with the SOC propagated exactly as stated by the problem's SOC model.
ExhaustiveResult dp_exhaustive(const pgs::DpProblem& p, const pgs::DpConfig& cfg);

/// Toy DP instance whose SOC moves land on grid points and whose costs are small dyadic numbers,
/// so every sum is exact in double precision.
struct ToyDp {
  pgs::DpProblem problem;
  pgs::DpConfig cfg;
};
ToyDp make_toy_dp(std::mt19937_64& rng, std::size_t stages, std::size_t modes);

}  // namespace oracle
