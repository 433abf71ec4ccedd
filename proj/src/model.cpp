#include "cst/model.hpp"

#include <cmath>
#include <thread>

namespace cst {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

// Space-time gradient of a P1 field on one element.
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

}  // namespace

void CarreauParams::validate() const {
  if (!(n > 0.0)) throw Error("CarreauParams: n must be > 0");
  if (!(c >= 0.0)) throw Error("CarreauParams: c must be >= 0");
}

double viscosity(const CarreauParams& params, std::span<const double> g) {
  if (params.linear()) return 1.0;
  const double w = 1.0 + params.c * dot(g, g);
  return std::pow(w, 0.5 * (params.n - 1.0));
}

void flux(const CarreauParams& params, std::span<const double> g,
          std::span<double> out) {
  const double nu = viscosity(params, g);
  for (std::size_t k = 0; k < g.size(); ++k) out[k] = nu * g[k];
}

void flux_jacobian(const CarreauParams& params, std::span<const double> g,
                   std::span<double> out) {
  const int d = static_cast<int>(g.size());
  for (int k = 0; k < d * d; ++k) out[k] = 0.0;
  if (params.linear()) {
    for (int k = 0; k < d; ++k) out[k * d + k] = 1.0;
    return;
  }
  const double w = 1.0 + params.c * dot(g, g);
  const double nu = std::pow(w, 0.5 * (params.n - 1.0));
  const double a = params.c * (params.n - 1.0) * std::pow(w, 0.5 * (params.n - 3.0));
  for (int i = 0; i < d; ++i) {
    out[i * d + i] = nu;
    for (int j = 0; j < d; ++j) out[i * d + j] += a * g[i] * g[j];
  }
}

void flux_hessian_apply(const CarreauParams& params, std::span<const double> g,
                        std::span<const double> h, std::span<const double> k,
                        std::span<double> out) {
  const int d = static_cast<int>(g.size());
  for (int i = 0; i < d; ++i) out[i] = 0.0;
  if (params.linear()) return;
  const double w = 1.0 + params.c * dot(g, g);
  const double a =
      params.c * (params.n - 1.0) * std::pow(w, 0.5 * (params.n - 3.0));
  const double b = params.c * params.c * (params.n - 1.0) * (params.n - 3.0) *
                   std::pow(w, 0.5 * (params.n - 5.0));
  const double gk = dot(g, k), gh = dot(g, h), hk = dot(h, k);
  for (int i = 0; i < d; ++i)
    out[i] = a * (gk * h[i] + gh * k[i] + hk * g[i]) + b * gh * gk * g[i];
}

double flux_potential(const CarreauParams& params, std::span<const double> g) {
  if (params.c == 0.0) return 0.5 * dot(g, g);
  const double w = 1.0 + params.c * dot(g, g);
  if (params.n == 1.0) return 0.5 * dot(g, g);
  return (std::pow(w, 0.5 * (params.n + 1.0)) - 1.0) /
         (params.c * (params.n + 1.0));
}

std::vector<double> assemble_state_residual(const SimplexMesh& mesh,
                                            const CarreauParams& params,
                                            const NodalField& y,
                                            const NodalField& u,
                                            const NodalField& f,
                                            const DofMask& test_mask,
                                            int n_threads) {
  params.validate();
  const int D = mesh.dim();
  const int d = D - 1;
  const int E = mesh.num_elements();
  std::vector<double> residual(test_mask.num_free(), 0.0);

  const auto run_range = [&](int e0, int e1, std::vector<double>& out) {
    std::array<double, kMaxDim> grad{};
    std::array<double, kMaxDim - 1> fg{};
    for (int e = e0; e < e1; ++e) {
      const auto conn = mesh.element(e);
      const double vol = mesh.volume(e);
      element_gradient(mesh, e, y, std::span(grad.data(), D));
      const auto gx = std::span<const double>(grad.data(), d);
      const double dty = grad[d];
      flux(params, gx, std::span(fg.data(), d));
      const LocalMatrix mass = p1_local_mass(vol, D);
      for (int i = 0; i <= D; ++i) {
        const auto r = test_mask.eq_of(conn[i]);
        if (r < 0) continue;
        const auto gi = mesh.grad_lambda(e, i);
        double v = dty * vol / (D + 1);
        for (int kk = 0; kk < d; ++kk) v += vol * fg[kk] * gi[kk];
        for (int j = 0; j <= D; ++j)
          v -= mass(i, j) * (f.values[conn[j]] + u.values[conn[j]]);
        if (!std::isfinite(v))
          throw Error("state residual: non-finite entry on element " +
                      std::to_string(e));
        out[r] += v;
      }
    }
  };

  n_threads = std::max(1, std::min(n_threads, E));
  if (n_threads == 1) {
    run_range(0, E, residual);
  } else {
    std::vector<std::vector<double>> partial(
        n_threads, std::vector<double>(residual.size(), 0.0));
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(n_threads);
    const int chunk = (E + n_threads - 1) / n_threads;
    for (int t = 0; t < n_threads; ++t)
      workers.emplace_back([&, t] {
        try {
          run_range(t * chunk, std::min(E, (t + 1) * chunk), partial[t]);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& w : workers) w.join();
    for (auto& err : errors)
      if (err) std::rethrow_exception(err);
    for (int t = 0; t < n_threads; ++t)
      for (std::size_t i = 0; i < residual.size(); ++i)
        residual[i] += partial[t][i];
  }
  return residual;
}

SparseMatrix assemble_state_jacobian(const SimplexMesh& mesh,
                                     const CarreauParams& params,
                                     const NodalField& y,
                                     const DofMask& trial_mask,
                                     const DofMask& test_mask, int n_threads) {
  params.validate();
  const int D = mesh.dim();
  const int d = D - 1;
  const auto kernel = [&](int e, const ElementGeometry& geom,
                          LocalMatrix& local) {
    std::array<double, kMaxDim> grad{};
    std::array<double, (kMaxDim - 1) * (kMaxDim - 1)> df{};
    element_gradient(mesh, e, y, std::span(grad.data(), D));
    flux_jacobian(params, std::span<const double>(grad.data(), d),
                  std::span(df.data(), std::size_t(d) * d));
    const double vol = geom.volume;
    for (int i = 0; i <= D; ++i) {
      const auto gi = geom.grad_lambda[i];
      for (int j = 0; j <= D; ++j) {
        const auto gj = geom.grad_lambda[j];
        double v = gj[d] * vol / (D + 1);  // (dt phi_j, phi_i)
        for (int a = 0; a < d; ++a)
          for (int b = 0; b < d; ++b) v += vol * gi[a] * df[a * d + b] * gj[b];
        local(i, j) = v;
      }
    }
  };
  return assemble_bilinear(mesh, kernel, trial_mask, test_mask, n_threads);
}

}  // namespace cst
