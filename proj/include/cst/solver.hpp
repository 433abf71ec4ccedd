// Damped Newton iteration and sparse linear solvers with a deterministic,
// tolerance-driven contract. The default linear method is restarted GMRES
// with Jacobi preconditioning; a sparse-LU direct path is available and is
// held to the same a-posteriori residual bound.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cst/sparse.hpp"

namespace cst {

class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, int iterations, double residual)
      : std::runtime_error(what),
        iterations(iterations),
        residual(residual) {}
  int iterations = 0;
  double residual = 0.0;
};

enum class LinearMethod { kDirect, kKrylov };
enum class Preconditioner { kNone, kJacobi, kBlockDiagonal };

struct LinearSolverConfig {
  LinearMethod method = LinearMethod::kKrylov;
  double rel_residual_tol = 1e-10;
  int max_krylov_iters = 10000;
  int restart = 200;
  Preconditioner preconditioner = Preconditioner::kJacobi;
  // First row of the second diagonal block for kBlockDiagonal; 0 treats the
  // whole matrix as a single block.
  int block_boundary = 0;
  void validate() const;
};

struct NewtonConfig {
  double abs_tol = 1e-10;
  double rel_tol = 1e-9;
  int max_iters = 25;
  double backtrack_factor = 0.5;
  double sufficient_decrease = 1e-4;
  int max_halvings = 10;
  void validate() const;
};

// Solves A x = b to ||A x - b|| <= rel_residual_tol * ||b||; the bound is
// verified a posteriori for every method. Throws SolverError on breakdown.
std::vector<double> linear_solve(const SparseMatrix& A,
                                 std::span<const double> b,
                                 const LinearSolverConfig& cfg);

struct NewtonResult {
  std::vector<double> x;
  bool converged = false;
  int iterations = 0;
  double final_residual = 0.0;
  std::vector<double> residual_norms;  // [||R(x0)||, ||R(x1)||, ...]
  std::vector<double> step_lengths;    // accepted line-search step per iter
  std::string failure;                 // empty when converged
};

using ResidualFn = std::function<std::vector<double>(std::span<const double>)>;
using JacobianFn = std::function<SparseMatrix(std::span<const double>)>;

// Stops when ||R|| <= abs_tol or ||R|| <= rel_tol * ||R(x0)||. Each step
// solves J d = -R, then backtracks until the residual norm satisfies
// ||R(x + a d)|| <= (1 - sufficient_decrease * a) ||R(x)||. Divergence and
// linear-solver breakdowns are reported in the result, never thrown.
NewtonResult newton_solve(const ResidualFn& residual,
                          const JacobianFn& jacobian,
                          std::vector<double> x0, const NewtonConfig& ncfg,
                          const LinearSolverConfig& lcfg);

double norm2(std::span<const double> v);

}  // namespace cst
