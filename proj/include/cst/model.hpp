// Simplified Carreau material law nu(g) = (1 + c|g|^2)^((n-1)/2), its flux
// F(g) = nu(g) g with first and second derivatives, and assembly of the
// state-equation residual and Jacobian. Spatial gradients are the first d
// components of the space-time gradient; d/dt is the last component.

#pragma once

#include <span>
#include <vector>

#include "cst/fem.hpp"
#include "cst/mesh.hpp"
#include "cst/sparse.hpp"

namespace cst {

struct CarreauParams {
  double n = 1.0;  // power exponent
  double c = 0.0;  // coefficient of |grad y|^2

  // n = 1 or c = 0 collapses to the linear heat operator.
  bool linear() const { return n == 1.0 || c == 0.0; }
  void validate() const;
};

double viscosity(const CarreauParams& params, std::span<const double> g);

void flux(const CarreauParams& params, std::span<const double> g,
          std::span<double> out);

// DF(g) = nu(g) I + c(n-1)(1+c|g|^2)^((n-3)/2) g g^T, row-major d x d.
void flux_jacobian(const CarreauParams& params, std::span<const double> g,
                   std::span<double> out);

// D2F(g)[h,k], symmetric in (h,k); zero in the linear regime.
void flux_hessian_apply(const CarreauParams& params, std::span<const double> g,
                        std::span<const double> h, std::span<const double> k,
                        std::span<double> out);

// Scalar potential with grad Phi = F (used by verification only).
double flux_potential(const CarreauParams& params, std::span<const double> g);

// Residual of the state equation tested against the free dofs of test_mask:
//   A(y,u)(q) = (dt y, q)_Q + (F(grad_x y), grad_x q)_Q - (f+u, q)_Q.
// Data terms use the exact P1 mass matrix on the interpolated fields.
std::vector<double> assemble_state_residual(const SimplexMesh& mesh,
                                            const CarreauParams& params,
                                            const NodalField& y,
                                            const NodalField& u,
                                            const NodalField& f,
                                            const DofMask& test_mask,
                                            int n_threads = 1);

// Gateaux derivative of A in y:
//   B[dy](q) = (dt dy, q)_Q + (DF(grad_x y) grad_x dy, grad_x q)_Q.
SparseMatrix assemble_state_jacobian(const SimplexMesh& mesh,
                                     const CarreauParams& params,
                                     const NodalField& y,
                                     const DofMask& trial_mask,
                                     const DofMask& test_mask,
                                     int n_threads = 1);

}  // namespace cst
