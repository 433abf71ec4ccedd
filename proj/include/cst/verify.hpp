// Manufactured solutions, finite-difference gradient checks and convergence
// studies. Everything here is an independent route to the same numbers the
// solver produces.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cst/kkt.hpp"

namespace cst {

struct ConvergenceRow {
  int level = 0;
  double h = 0.0;
  double err_y = 0.0;
  std::optional<double> err_p;
  std::optional<double> rate_y;
  std::optional<double> rate_p;
  int newton_iters = 0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  std::string to_csv() const;  // level,h,err_y,err_p,rate_y,rate_p
};

// Closed-form data for the linear (n=1, c=0) KKT system on (0,1)^d x (0,1):
//   y* = t prod sin(pi x_i),  p* = (1-t) prod sin(pi x_i),  u* = -p*/rho,
//   f  = dt y* - lap y* - u*, y_d = y* + dt p* + lap p*.
struct MmsLinearKkt {
  int d = 1;
  double rho = 1.0;
  double y_exact(std::span<const double> xt) const;
  double p_exact(std::span<const double> xt) const;
  double u_exact(std::span<const double> xt) const;
  double source(std::span<const double> xt) const;
  double desired_state(std::span<const double> xt) const;
};

// Forward-problem data: y* = t prod sin(pi x_i), u = 0,
// f = dt y* - div F(grad y*), the divergence expanded through DF.
struct MmsForward {
  int d = 1;
  CarreauParams params;
  double y_exact(std::span<const double> xt) const;
  double source(std::span<const double> xt) const;
};

// Solves the coupled KKT system on meshes h = 1/4 ... 1/2^(levels+1) and
// reports L2(Q) errors of y and p. d in {1,2}, levels <= 5.
ConvergenceTable mms_linear_kkt(int d, int levels, double rho,
                                const NewtonConfig& ncfg,
                                const LinearSolverConfig& lcfg);

ConvergenceTable mms_forward(const CarreauParams& params, int d, int levels,
                             const NewtonConfig& ncfg,
                             const LinearSolverConfig& lcfg);

// Worst relative error of (grad j(u), du) against central differences of
// j over num_directions pseudo-random directions (deterministic seed).
double fd_gradient_check(const OptControlProblem& problem, const NodalField& u,
                         int num_directions, double eps,
                         const NewtonConfig& ncfg,
                         const LinearSolverConfig& lcfg);

// rate_k = log(e_{k-1}/e_k) / log(h_{k-1}/h_k); infinity marks a zero error.
std::vector<double> convergence_rates(
    const std::vector<std::pair<double, double>>& h_and_error);

}  // namespace cst
