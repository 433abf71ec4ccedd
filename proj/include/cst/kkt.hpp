// Optimal-control layer: tracking cost, pointwise control elimination
// u = -p/rho, the reduced KKT residual/Jacobian on the stacked (y, p)
// unknowns, and the all-at-once Newton solve. Sign conventions follow the
// Lagrangian L = J_rho - A, which gives the adjoint right-hand side y - y_d.

#pragma once

#include <functional>
#include <memory>
#include <optional>

#include "cst/fem.hpp"
#include "cst/mesh.hpp"
#include "cst/model.hpp"
#include "cst/solver.hpp"

namespace cst {

using ScalarFn = std::function<double(std::span<const double>)>;

// Full problem instance: domain, mesh resolution, material, regularization
// and data. The initial state is identically zero, as are the lateral
// boundary values; the mesh, dof masks and interpolated data are built once
// at construction.
class OptControlProblem {
 public:
  OptControlProblem(const DomainSpec& domain, std::vector<int> divisions,
                    const CarreauParams& params, double rho, ScalarFn f,
                    ScalarFn y_d);

  const SimplexMesh& mesh() const { return *mesh_; }
  const DofMask& state_mask() const { return state_mask_; }    // Y
  const DofMask& adjoint_mask() const { return adjoint_mask_; }  // P
  const NodalField& f_h() const { return f_h_; }
  const NodalField& yd_h() const { return yd_h_; }
  const CarreauParams& params() const { return params_; }
  double rho() const { return rho_; }
  int num_state_dofs() const { return state_mask_.num_free(); }
  int num_adjoint_dofs() const { return adjoint_mask_.num_free(); }
  int assembly_threads() const { return assembly_threads_; }
  void set_assembly_threads(int n) { assembly_threads_ = n; }

 private:
  std::shared_ptr<const SimplexMesh> mesh_;
  DofMask state_mask_, adjoint_mask_;
  CarreauParams params_;
  double rho_;
  NodalField f_h_, yd_h_;
  int assembly_threads_ = 1;
};

struct KKTSolution {
  NodalField y, p, u;
  bool converged = false;
  int newton_iters = 0;
  double final_residual = 0.0;
  std::vector<double> residual_history;
  std::vector<double> step_lengths;
  std::string failure;
};

struct CostBreakdown {
  double J = 0.0;
  double tracking = 0.0;  // 1/2 ||y_d - y||^2_{L2(Q)}
  double energy = 0.0;    // rho/2 ||u||^2_{L2(Q)}
};

enum class JacobianMode { kFull, kGaussNewton };

CostBreakdown cost_functional(const OptControlProblem& problem,
                              const NodalField& y, const NodalField& u);

// Stationarity in u: rho (u, v) + (p, v) = 0 for all v, hence u = -p/rho.
NodalField recover_control(const NodalField& p, double rho);

// Stacked reduced residual [R_y; R_p] over free state/adjoint dofs:
//   R_p(q) = (dt y, q) + (F(grad y), grad q) + (1/rho)(p, q) - (f, q)
//   R_y(v) = (y - y_d, v) - (dt v, p) - (DF(grad y) grad v, grad p)
std::vector<double> assemble_kkt_residual(const OptControlProblem& problem,
                                          const NodalField& y,
                                          const NodalField& p);

// Block Jacobian over (dy, dp); negating the R_p rows yields a symmetric
// matrix [[M - H, -B^T], [-B, -M/rho]].
SparseMatrix assemble_kkt_jacobian(const OptControlProblem& problem,
                                   const NodalField& y, const NodalField& p,
                                   JacobianMode mode = JacobianMode::kFull);

KKTSolution solve_kkt(const OptControlProblem& problem,
                      const NewtonConfig& ncfg, const LinearSolverConfig& lcfg,
                      const KKTSolution* initial = nullptr);

struct ForwardResult {
  NodalField y;
  bool converged = false;
  int newton_iters = 0;
  double final_residual = 0.0;
  std::vector<double> residual_norms;
  std::string failure;
};

ForwardResult solve_forward(const OptControlProblem& problem,
                            const NodalField& u, const NewtonConfig& ncfg,
                            const LinearSolverConfig& lcfg);

// Linear solve of R_y = 0 for p given y (backward-in-time problem with
// terminal condition p(T) = 0 in strong form).
NodalField solve_adjoint(const OptControlProblem& problem, const NodalField& y,
                         const LinearSolverConfig& lcfg);

// grad j(u) = rho u + p with y = forward(u), p = adjoint(y).
NodalField reduced_gradient(const OptControlProblem& problem,
                            const NodalField& u, const NewtonConfig& ncfg,
                            const LinearSolverConfig& lcfg);

// Pack/unpack between full nodal fields and the stacked free-dof vector.
std::vector<double> pack_state(const OptControlProblem& problem,
                               const NodalField& y, const NodalField& p);
void unpack_state(const OptControlProblem& problem,
                  std::span<const double> x, NodalField& y, NodalField& p);

}  // namespace cst
