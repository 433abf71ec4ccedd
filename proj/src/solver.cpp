#include "cst/solver.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <memory>

#include "cst/mesh.hpp"  // for cst::Error

namespace cst {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void LinearSolverConfig::validate() const {
  if (!(rel_residual_tol > 0.0))
    throw Error("LinearSolverConfig: tolerance must be > 0");
  if (restart < 1 || max_krylov_iters < 1)
    throw Error("LinearSolverConfig: iteration limits must be >= 1");
}

void NewtonConfig::validate() const {
  if (!(abs_tol > 0.0) || !(rel_tol > 0.0))
    throw Error("NewtonConfig: tolerances must be > 0");
  if (max_iters < 1) throw Error("NewtonConfig: max_iters must be >= 1");
}

namespace {

using EigenSparse = Eigen::SparseMatrix<double>;

EigenSparse to_eigen(const SparseMatrix& A, int row0, int row1, int col0,
                     int col1) {
  std::vector<Eigen::Triplet<double>> trips;
  for (int r = row0; r < row1; ++r)
    for (auto k = A.row_offsets()[r]; k < A.row_offsets()[r + 1]; ++k) {
      const int c = A.col_indices()[k];
      if (c >= col0 && c < col1)
        trips.emplace_back(r - row0, c - col0, A.values()[k]);
    }
  EigenSparse m(row1 - row0, col1 - col0);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

class SparseLUSolver {
 public:
  explicit SparseLUSolver(EigenSparse m) : matrix_(std::move(m)) {
    matrix_.makeCompressed();
    lu_.compute(matrix_);
    ok_ = lu_.info() == Eigen::Success;
  }
  bool ok() const { return ok_; }
  void solve(std::span<const double> b, std::span<double> x) const {
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), b.size());
    Eigen::VectorXd xv = lu_.solve(bv);
    std::copy(xv.data(), xv.data() + xv.size(), x.begin());
  }

 private:
  EigenSparse matrix_;
  Eigen::SparseLU<EigenSparse> lu_;
  bool ok_ = false;
};

// Right preconditioner M^{-1}; GMRES solves A M^{-1} z = b, x = M^{-1} z.
class Precond {
 public:
  Precond(const SparseMatrix& A, const LinearSolverConfig& cfg) {
    const int n = A.rows();
    switch (cfg.preconditioner) {
      case Preconditioner::kNone:
        break;
      case Preconditioner::kJacobi: {
        inv_diag_ = A.diagonal();
        for (double& v : inv_diag_)
          v = std::abs(v) > 1e-300 ? 1.0 / v : 1.0;
        break;
      }
      case Preconditioner::kBlockDiagonal: {
        const int k = cfg.block_boundary > 0 && cfg.block_boundary < n
                          ? cfg.block_boundary
                          : n;
        blocks_.push_back(
            std::make_unique<SparseLUSolver>(to_eigen(A, 0, k, 0, k)));
        if (k < n)
          blocks_.push_back(
              std::make_unique<SparseLUSolver>(to_eigen(A, k, n, k, n)));
        boundary_ = k;
        for (const auto& b : blocks_)
          if (!b->ok())
            throw SolverError("block-diagonal preconditioner factorization "
                              "failed", 0, 0.0);
        break;
      }
    }
  }

  void apply(std::span<const double> v, std::span<double> out) const {
    if (!inv_diag_.empty()) {
      for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * inv_diag_[i];
    } else if (!blocks_.empty()) {
      blocks_[0]->solve(v.subspan(0, boundary_), out.subspan(0, boundary_));
      if (blocks_.size() > 1)
        blocks_[1]->solve(v.subspan(boundary_), out.subspan(boundary_));
    } else {
      std::copy(v.begin(), v.end(), out.begin());
    }
  }

 private:
  std::vector<double> inv_diag_;
  std::vector<std::unique_ptr<SparseLUSolver>> blocks_;
  std::size_t boundary_ = 0;
};

std::vector<double> gmres(const SparseMatrix& A, std::span<const double> b,
                          const LinearSolverConfig& cfg, double target) {
  const int n = A.rows();
  const Precond precond(A, cfg);
  const int m = std::min(cfg.restart, n);

  std::vector<double> x(n, 0.0);
  std::vector<std::vector<double>> V;
  std::vector<double> H;  // (m+1) x m column-major per restart cycle
  std::vector<double> cs(m), sn(m), g(m + 1);
  std::vector<double> tmp(n), tmp2(n);

  int total_iters = 0;
  double res = norm2(b);
  while (total_iters < cfg.max_krylov_iters) {
    // r = b - A x
    A.multiply(x, tmp);
    std::vector<double> r(n);
    for (int i = 0; i < n; ++i) r[i] = b[i] - tmp[i];
    const double beta = norm2(r);
    res = beta;
    if (beta <= target) break;

    V.assign(1, std::vector<double>(n));
    for (int i = 0; i < n; ++i) V[0][i] = r[i] / beta;
    H.assign(std::size_t(m + 1) * m, 0.0);
    std::fill(g.begin(), g.end(), 0.0);
    g[0] = beta;

    int k = 0;
    for (; k < m && total_iters < cfg.max_krylov_iters; ++k, ++total_iters) {
      // w = A M^{-1} v_k
      precond.apply(V[k], tmp2);
      A.multiply(tmp2, tmp);
      // Modified Gram-Schmidt
      for (int i = 0; i <= k; ++i) {
        double hik = 0.0;
        for (int j = 0; j < n; ++j) hik += tmp[j] * V[i][j];
        H[std::size_t(k) * (m + 1) + i] = hik;
        for (int j = 0; j < n; ++j) tmp[j] -= hik * V[i][j];
      }
      const double hnext = norm2(tmp);
      H[std::size_t(k) * (m + 1) + k + 1] = hnext;
      // Apply previous Givens rotations to the new column.
      for (int i = 0; i < k; ++i) {
        const double h0 = H[std::size_t(k) * (m + 1) + i];
        const double h1 = H[std::size_t(k) * (m + 1) + i + 1];
        H[std::size_t(k) * (m + 1) + i] = cs[i] * h0 + sn[i] * h1;
        H[std::size_t(k) * (m + 1) + i + 1] = -sn[i] * h0 + cs[i] * h1;
      }
      const double h0 = H[std::size_t(k) * (m + 1) + k];
      const double h1 = H[std::size_t(k) * (m + 1) + k + 1];
      const double denom = std::hypot(h0, h1);
      if (denom == 0.0)
        throw SolverError("GMRES breakdown (zero Hessenberg column)",
                          total_iters, res);
      cs[k] = h0 / denom;
      sn[k] = h1 / denom;
      H[std::size_t(k) * (m + 1) + k] = denom;
      H[std::size_t(k) * (m + 1) + k + 1] = 0.0;
      g[k + 1] = -sn[k] * g[k];
      g[k] = cs[k] * g[k];
      res = std::abs(g[k + 1]);

      if (hnext > 0.0 && k + 1 < m + 1) {
        V.emplace_back(n);
        for (int j = 0; j < n; ++j) V[k + 1][j] = tmp[j] / hnext;
      }
      if (res <= target || hnext == 0.0) {
        ++k;
        ++total_iters;
        break;
      }
    }

    // Solve the triangular system and update x.
    std::vector<double> yk(k, 0.0);
    for (int i = k - 1; i >= 0; --i) {
      double s = g[i];
      for (int j = i + 1; j < k; ++j)
        s -= H[std::size_t(j) * (m + 1) + i] * yk[j];
      yk[i] = s / H[std::size_t(i) * (m + 1) + i];
    }
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (int j = 0; j < k; ++j)
      for (int i = 0; i < n; ++i) tmp[i] += yk[j] * V[j][i];
    precond.apply(tmp, tmp2);
    for (int i = 0; i < n; ++i) x[i] += tmp2[i];

    if (res <= target) {
      // Recompute the true residual; restart if rounding drifted.
      A.multiply(x, tmp);
      double tr = 0.0;
      for (int i = 0; i < n; ++i) tr += (b[i] - tmp[i]) * (b[i] - tmp[i]);
      res = std::sqrt(tr);
      if (res <= target) break;
    }
  }
  if (res > target)
    throw SolverError("GMRES did not reach the residual tolerance",
                      total_iters, res);
  return x;
}

}  // namespace

std::vector<double> linear_solve(const SparseMatrix& A,
                                 std::span<const double> b,
                                 const LinearSolverConfig& cfg) {
  cfg.validate();
  if (A.rows() != A.cols())
    throw Error("linear_solve: matrix must be square");
  if (static_cast<int>(b.size()) != A.rows())
    throw Error("linear_solve: right-hand side size mismatch");
  const double bnorm = norm2(b);
  if (bnorm == 0.0) return std::vector<double>(A.rows(), 0.0);
  const double target = cfg.rel_residual_tol * bnorm;

  std::vector<double> x;
  if (cfg.method == LinearMethod::kDirect) {
    SparseLUSolver lu(to_eigen(A, 0, A.rows(), 0, A.cols()));
    if (!lu.ok())
      throw SolverError("sparse LU factorization failed (singular matrix?)",
                        0, bnorm);
    x.resize(A.rows());
    lu.solve(b, x);
  } else {
    x = gmres(A, b, cfg, target);
  }

  // A-posteriori residual bound, method-agnostic.
  std::vector<double> r(A.rows());
  A.multiply(x, r);
  for (int i = 0; i < A.rows(); ++i) r[i] = b[i] - r[i];
  const double res = norm2(r);
  if (!(res <= target))
    throw SolverError("linear solve residual " + std::to_string(res) +
                          " exceeds bound " + std::to_string(target),
                      0, res);
  return x;
}

NewtonResult newton_solve(const ResidualFn& residual,
                          const JacobianFn& jacobian, std::vector<double> x0,
                          const NewtonConfig& ncfg,
                          const LinearSolverConfig& lcfg) {
  ncfg.validate();
  NewtonResult out;
  out.x = std::move(x0);

  std::vector<double> r = residual(out.x);
  double rn = norm2(r);
  const double r0 = rn;
  out.residual_norms.push_back(rn);
  out.final_residual = rn;
  if (rn <= ncfg.abs_tol) {
    out.converged = true;
    return out;
  }

  for (int iter = 1; iter <= ncfg.max_iters; ++iter) {
    std::vector<double> step;
    try {
      const SparseMatrix J = jacobian(out.x);
      std::vector<double> rhs(r.size());
      for (std::size_t i = 0; i < r.size(); ++i) rhs[i] = -r[i];
      step = linear_solve(J, rhs, lcfg);
    } catch (const std::exception& err) {
      out.failure = std::string("linear solve failed at iteration ") +
                    std::to_string(iter) + ": " + err.what();
      return out;
    }

    // Backtracking on the residual norm.
    double alpha = 1.0;
    bool accepted = false;
    std::vector<double> xt(out.x.size()), rt;
    double rtn = 0.0;
    for (int halve = 0; halve <= ncfg.max_halvings; ++halve) {
      for (std::size_t i = 0; i < out.x.size(); ++i)
        xt[i] = out.x[i] + alpha * step[i];
      bool finite = true;
      try {
        rt = residual(xt);
      } catch (const std::exception&) {
        finite = false;
      }
      if (finite) {
        rtn = norm2(rt);
        if (std::isfinite(rtn) &&
            rtn <= (1.0 - ncfg.sufficient_decrease * alpha) * rn) {
          accepted = true;
          break;
        }
      }
      alpha *= ncfg.backtrack_factor;
    }
    if (!accepted) {
      out.failure = "line search failed at iteration " + std::to_string(iter);
      return out;
    }

    out.x.swap(xt);
    r.swap(rt);
    rn = rtn;
    out.iterations = iter;
    out.residual_norms.push_back(rn);
    out.step_lengths.push_back(alpha);
    out.final_residual = rn;
    if (rn <= ncfg.abs_tol || rn <= ncfg.rel_tol * r0) {
      out.converged = true;
      return out;
    }
  }
  out.failure = "no convergence within max_iters";
  return out;
}

}  // namespace cst
