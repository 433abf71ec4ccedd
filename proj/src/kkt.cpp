#include "cst/kkt.hpp"

#include <cmath>

namespace cst {
namespace {

void element_gradient(const SimplexMesh& mesh, int e, const NodalField& field,
                      std::span<double> grad) {
  const int D = mesh.dim();
  for (int k = 0; k < D; ++k) grad[k] = 0.0;
  const auto conn = mesh.element(e);
  for (int i = 0; i <= D; ++i) {
    const double vi = field.values[conn[i]];
    const auto g = mesh.grad_lambda(e, i);
    for (int k = 0; k < D; ++k) grad[k] += vi * g[k];
  }
}

// Concatenate four CSR blocks [[A11, A12], [A21, A22]] into one matrix.
SparseMatrix stack_blocks(const SparseMatrix& a11, const SparseMatrix& a12,
                          const SparseMatrix& a21, const SparseMatrix& a22) {
  const int n1 = a11.rows(), n2 = a21.rows();
  const int c1 = a11.cols(), c2 = a12.cols();
  std::vector<std::int64_t> offsets(n1 + n2 + 1, 0);
  std::vector<std::int32_t> cols;
  std::vector<double> vals;
  cols.reserve(a11.nnz() + a12.nnz() + a21.nnz() + a22.nnz());
  vals.reserve(cols.capacity());
  const auto append_row = [&](const SparseMatrix& left,
                              const SparseMatrix& right, int r, int out_row) {
    for (auto k = left.row_offsets()[r]; k < left.row_offsets()[r + 1]; ++k) {
      cols.push_back(left.col_indices()[k]);
      vals.push_back(left.values()[k]);
    }
    for (auto k = right.row_offsets()[r]; k < right.row_offsets()[r + 1];
         ++k) {
      cols.push_back(right.col_indices()[k] + c1);
      vals.push_back(right.values()[k]);
    }
    offsets[out_row + 1] = static_cast<std::int64_t>(cols.size());
  };
  for (int r = 0; r < n1; ++r) append_row(a11, a12, r, r);
  for (int r = 0; r < n2; ++r) append_row(a21, a22, r, n1 + r);
  return SparseMatrix(n1 + n2, c1 + c2, std::move(offsets), std::move(cols),
                      std::move(vals));
}

}  // namespace

OptControlProblem::OptControlProblem(const DomainSpec& domain,
                                     std::vector<int> divisions,
                                     const CarreauParams& params, double rho,
                                     ScalarFn f, ScalarFn y_d)
    : params_(params), rho_(rho) {
  params_.validate();
  if (!(rho > 0.0)) throw Error("OptControlProblem: rho must be > 0");
  mesh_ = std::make_shared<const SimplexMesh>(
      build_tensor_simplex_mesh(domain, std::move(divisions)));
  state_mask_ = DofMask::from_excluded_tags(*mesh_, kTagLateral | kTagInitial);
  adjoint_mask_ =
      DofMask::from_excluded_tags(*mesh_, kTagLateral | kTagTerminal);
  f_h_ = f ? interpolate(*mesh_, f) : NodalField(*mesh_);
  yd_h_ = y_d ? interpolate(*mesh_, y_d) : NodalField(*mesh_);
}

CostBreakdown cost_functional(const OptControlProblem& problem,
                              const NodalField& y, const NodalField& u) {
  const SimplexMesh& mesh = problem.mesh();
  NodalField diff(mesh);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    diff.values[v] = problem.yd_h().values[v] - y.values[v];
  CostBreakdown cost;
  cost.tracking = 0.5 * l2_inner_Q(mesh, diff, diff);
  cost.energy = 0.5 * problem.rho() * l2_inner_Q(mesh, u, u);
  cost.J = cost.tracking + cost.energy;
  return cost;
}

NodalField recover_control(const NodalField& p, double rho) {
  if (!(rho > 0.0)) throw Error("recover_control: rho must be > 0");
  NodalField u = p;
  for (double& v : u.values) v = -v / rho;
  return u;
}

std::vector<double> assemble_kkt_residual(const OptControlProblem& problem,
                                          const NodalField& y,
                                          const NodalField& p) {
  const SimplexMesh& mesh = problem.mesh();
  const CarreauParams& params = problem.params();
  const int D = mesh.dim();
  const int d = D - 1;
  const int ny = problem.num_state_dofs();
  const int np = problem.num_adjoint_dofs();
  std::vector<double> residual(ny + np, 0.0);

  std::array<double, kMaxDim> gy{}, gp{};
  std::array<double, kMaxDim - 1> fg{}, dfgp{};
  std::array<double, (kMaxDim - 1) * (kMaxDim - 1)> df{};
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto conn = mesh.element(e);
    const double vol = mesh.volume(e);
    element_gradient(mesh, e, y, std::span(gy.data(), D));
    element_gradient(mesh, e, p, std::span(gp.data(), D));
    const auto gyx = std::span<const double>(gy.data(), d);
    flux(params, gyx, std::span(fg.data(), d));
    flux_jacobian(params, gyx, std::span(df.data(), std::size_t(d) * d));
    for (int a = 0; a < d; ++a) {
      dfgp[a] = 0.0;
      for (int b = 0; b < d; ++b) dfgp[a] += df[a * d + b] * gp[b];
    }
    const double dty = gy[d];
    double psum = 0.0, fsum = 0.0, ysum = 0.0, ydsum = 0.0;
    for (int j = 0; j <= D; ++j) {
      psum += p.values[conn[j]];
      fsum += problem.f_h().values[conn[j]];
      ysum += y.values[conn[j]];
      ydsum += problem.yd_h().values[conn[j]];
    }
    const double mscale = vol / ((D + 1) * (D + 2));
    const double int_phi = vol / (D + 1);

    for (int i = 0; i <= D; ++i) {
      const auto gi = mesh.grad_lambda(e, i);
      // R_y rows: test v in the state mask.
      const auto rv = problem.state_mask().eq_of(conn[i]);
      if (rv >= 0) {
        // (y - y_d, phi_i) with the exact mass matrix: row sum + diagonal.
        double val = mscale * ((ysum - ydsum) +
                               (y.values[conn[i]] - problem.yd_h().values[conn[i]]));
        // -(dt phi_i, p): dt phi_i is constant and int_e p = int_phi * psum.
        val -= gi[d] * int_phi * psum;
        // -(DF grad phi_i, grad p)
        for (int a = 0; a < d; ++a) val -= vol * gi[a] * dfgp[a];
        if (!std::isfinite(val))
          throw Error("KKT residual: non-finite R_y entry on element " +
                      std::to_string(e));
        residual[rv] += val;
      }
      // R_p rows: test q in the adjoint mask.
      const auto rq = problem.adjoint_mask().eq_of(conn[i]);
      if (rq >= 0) {
        double val = dty * int_phi;
        for (int a = 0; a < d; ++a) val += vol * fg[a] * gi[a];
        // (1/rho)(p, phi_i) - (f, phi_i), both with the exact mass matrix.
        val += mscale * ((psum + p.values[conn[i]]) / problem.rho() -
                         (fsum + problem.f_h().values[conn[i]]));
        if (!std::isfinite(val))
          throw Error("KKT residual: non-finite R_p entry on element " +
                      std::to_string(e));
        residual[ny + rq] += val;
      }
    }
  }
  return residual;
}

SparseMatrix assemble_kkt_jacobian(const OptControlProblem& problem,
                                   const NodalField& y, const NodalField& p,
                                   JacobianMode mode) {
  const SimplexMesh& mesh = problem.mesh();
  const CarreauParams& params = problem.params();
  const int D = mesh.dim();
  const int d = D - 1;
  const DofMask& ymask = problem.state_mask();
  const DofMask& pmask = problem.adjoint_mask();
  const int threads = problem.assembly_threads();

  // dR_y/dy = M - H, with H(i,j) = vol * D2F(grad y)[grad phi_i, grad phi_j]
  // . grad p (dropped in Gauss-Newton mode).
  const bool with_hessian =
      mode == JacobianMode::kFull && !params.linear();
  const auto a11_kernel = [&](int e, const ElementGeometry& geom,
                              LocalMatrix& local) {
    const double vol = geom.volume;
    const LocalMatrix mass = p1_local_mass(vol, D);
    std::array<double, kMaxDim> gy{}, gp{};
    std::array<double, kMaxDim - 1> hess{};
    if (with_hessian) {
      element_gradient(mesh, e, y, std::span(gy.data(), D));
      element_gradient(mesh, e, p, std::span(gp.data(), D));
    }
    const auto gyx = std::span<const double>(gy.data(), d);
    const auto gpx = std::span<const double>(gp.data(), d);
    for (int i = 0; i <= D; ++i) {
      const auto gi = geom.grad_lambda[i];
      for (int j = 0; j <= D; ++j) {
        double v = mass(i, j);
        if (with_hessian) {
          const auto gj = geom.grad_lambda[j];
          flux_hessian_apply(params, gyx,
                             std::span<const double>(gi.data(), d),
                             std::span<const double>(gj.data(), d),
                             std::span(hess.data(), d));
          for (int a = 0; a < d; ++a) v -= vol * hess[a] * gpx[a];
        }
        local(i, j) = v;
      }
    }
  };
  const SparseMatrix a11 =
      assemble_bilinear(mesh, a11_kernel, ymask, ymask, threads);

  // B(i,j) = (dt phi_j, phi_i) + (DF(grad y) grad phi_j, grad phi_i).
  const SparseMatrix b =
      assemble_state_jacobian(mesh, params, y, ymask, pmask, threads);

  // dR_y/dp = -B^T.
  const auto a12_kernel = [&](int e, const ElementGeometry& geom,
                              LocalMatrix& local) {
    const double vol = geom.volume;
    std::array<double, kMaxDim> gy{};
    std::array<double, (kMaxDim - 1) * (kMaxDim - 1)> df{};
    element_gradient(mesh, e, y, std::span(gy.data(), D));
    flux_jacobian(params, std::span<const double>(gy.data(), d),
                  std::span(df.data(), std::size_t(d) * d));
    for (int i = 0; i <= D; ++i) {
      const auto gi = geom.grad_lambda[i];
      for (int j = 0; j <= D; ++j) {
        const auto gj = geom.grad_lambda[j];
        double v = -gi[d] * vol / (D + 1);
        for (int a = 0; a < d; ++a)
          for (int bb = 0; bb < d; ++bb)
            v -= vol * gi[a] * df[a * d + bb] * gj[bb];
        local(i, j) = v;
      }
    }
  };
  const SparseMatrix a12 =
      assemble_bilinear(mesh, a12_kernel, pmask, ymask, threads);

  // dR_p/dp = (1/rho) M on the adjoint pairing.
  const auto mass_kernel = [&](int, const ElementGeometry& geom,
                               LocalMatrix& local) {
    local = p1_local_mass(geom.volume, D);
  };
  SparseMatrix a22 = assemble_bilinear(mesh, mass_kernel, pmask, pmask,
                                       threads);
  a22.scale(1.0 / problem.rho());

  return stack_blocks(a11, a12, b, a22);
}

std::vector<double> pack_state(const OptControlProblem& problem,
                               const NodalField& y, const NodalField& p) {
  const int ny = problem.num_state_dofs();
  const int np = problem.num_adjoint_dofs();
  std::vector<double> x(ny + np);
  for (int i = 0; i < ny; ++i)
    x[i] = y.values[problem.state_mask().vertex_of(i)];
  for (int i = 0; i < np; ++i)
    x[ny + i] = p.values[problem.adjoint_mask().vertex_of(i)];
  return x;
}

void unpack_state(const OptControlProblem& problem, std::span<const double> x,
                  NodalField& y, NodalField& p) {
  const int ny = problem.num_state_dofs();
  const int np = problem.num_adjoint_dofs();
  y = NodalField(problem.mesh());
  p = NodalField(problem.mesh());
  for (int i = 0; i < ny; ++i)
    y.values[problem.state_mask().vertex_of(i)] = x[i];
  for (int i = 0; i < np; ++i)
    p.values[problem.adjoint_mask().vertex_of(i)] = x[ny + i];
}

KKTSolution solve_kkt(const OptControlProblem& problem,
                      const NewtonConfig& ncfg, const LinearSolverConfig& lcfg,
                      const KKTSolution* initial) {
  LinearSolverConfig lin = lcfg;
  if (lin.preconditioner == Preconditioner::kBlockDiagonal &&
      lin.block_boundary == 0)
    lin.block_boundary = problem.num_state_dofs();

  const ResidualFn residual = [&](std::span<const double> x) {
    NodalField y, p;
    unpack_state(problem, x, y, p);
    return assemble_kkt_residual(problem, y, p);
  };
  const JacobianFn jacobian = [&](std::span<const double> x) {
    NodalField y, p;
    unpack_state(problem, x, y, p);
    return assemble_kkt_jacobian(problem, y, p, JacobianMode::kFull);
  };

  std::vector<double> x0(problem.num_state_dofs() + problem.num_adjoint_dofs(),
                         0.0);
  if (initial) x0 = pack_state(problem, initial->y, initial->p);

  NewtonResult result =
      newton_solve(residual, jacobian, std::move(x0), ncfg, lin);

  KKTSolution sol;
  unpack_state(problem, result.x, sol.y, sol.p);
  sol.u = recover_control(sol.p, problem.rho());
  sol.converged = result.converged;
  sol.newton_iters = result.iterations;
  sol.final_residual = result.final_residual;
  sol.residual_history = std::move(result.residual_norms);
  sol.step_lengths = std::move(result.step_lengths);
  sol.failure = std::move(result.failure);
  return sol;
}

ForwardResult solve_forward(const OptControlProblem& problem,
                            const NodalField& u, const NewtonConfig& ncfg,
                            const LinearSolverConfig& lcfg) {
  const SimplexMesh& mesh = problem.mesh();
  const DofMask& ymask = problem.state_mask();
  const DofMask& qmask = problem.adjoint_mask();
  const int threads = problem.assembly_threads();

  const auto to_field = [&](std::span<const double> x) {
    NodalField y(mesh);
    for (int i = 0; i < ymask.num_free(); ++i)
      y.values[ymask.vertex_of(i)] = x[i];
    return y;
  };
  const ResidualFn residual = [&](std::span<const double> x) {
    return assemble_state_residual(mesh, problem.params(), to_field(x), u,
                                   problem.f_h(), qmask, threads);
  };
  const JacobianFn jacobian = [&](std::span<const double> x) {
    return assemble_state_jacobian(mesh, problem.params(), to_field(x), ymask,
                                   qmask, threads);
  };

  NewtonResult result =
      newton_solve(residual, jacobian,
                   std::vector<double>(ymask.num_free(), 0.0), ncfg, lcfg);
  ForwardResult out;
  out.y = to_field(result.x);
  out.converged = result.converged;
  out.newton_iters = result.iterations;
  out.final_residual = result.final_residual;
  out.residual_norms = std::move(result.residual_norms);
  out.failure = std::move(result.failure);
  return out;
}

NodalField solve_adjoint(const OptControlProblem& problem, const NodalField& y,
                         const LinearSolverConfig& lcfg) {
  const SimplexMesh& mesh = problem.mesh();
  const DofMask& ymask = problem.state_mask();
  const DofMask& pmask = problem.adjoint_mask();
  const int D = mesh.dim();

  // Right-hand side g(v) = (y - y_d, v) over free state dofs.
  std::vector<double> rhs(ymask.num_free(), 0.0);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto conn = mesh.element(e);
    const double mscale = mesh.volume(e) / ((D + 1) * (D + 2));
    double diff_sum = 0.0;
    for (int j = 0; j <= D; ++j)
      diff_sum += y.values[conn[j]] - problem.yd_h().values[conn[j]];
    for (int i = 0; i <= D; ++i) {
      const auto r = ymask.eq_of(conn[i]);
      if (r < 0) continue;
      rhs[r] += mscale * (diff_sum + (y.values[conn[i]] -
                                      problem.yd_h().values[conn[i]]));
    }
  }

  const SparseMatrix b = assemble_state_jacobian(
      mesh, problem.params(), y, ymask, pmask, problem.assembly_threads());
  const std::vector<double> p_free = linear_solve(b.transposed(), rhs, lcfg);

  NodalField p(mesh);
  for (int i = 0; i < pmask.num_free(); ++i)
    p.values[pmask.vertex_of(i)] = p_free[i];
  return p;
}

NodalField reduced_gradient(const OptControlProblem& problem,
                            const NodalField& u, const NewtonConfig& ncfg,
                            const LinearSolverConfig& lcfg) {
  const ForwardResult fwd = solve_forward(problem, u, ncfg, lcfg);
  if (!fwd.converged)
    throw Error("reduced_gradient: forward solve failed: " + fwd.failure);
  const NodalField p = solve_adjoint(problem, fwd.y, lcfg);
  NodalField grad(problem.mesh());
  for (int v = 0; v < problem.mesh().num_vertices(); ++v)
    grad.values[v] = problem.rho() * u.values[v] + p.values[v];
  return grad;
}

}  // namespace cst
