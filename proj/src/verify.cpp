#include "cst/verify.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "cst/util.hpp"

namespace cst {
namespace {

constexpr double kPi = std::numbers::pi;

double sin_prod(std::span<const double> xt, int d) {
  double s = 1.0;
  for (int k = 0; k < d; ++k) s *= std::sin(kPi * xt[k]);
  return s;
}

DomainSpec unit_domain(int d) {
  DomainSpec dom;
  dom.spatial_dim = d;
  for (int k = 0; k < d; ++k) {
    dom.lower[k] = 0.0;
    dom.upper[k] = 1.0;
  }
  dom.final_time = 1.0;
  return dom;
}

}  // namespace

std::string ConvergenceTable::to_csv() const {
  std::ostringstream out;
  out << "level,h,err_y,err_p,rate_y,rate_p\n";
  for (const auto& r : rows) {
    out << r.level << "," << format_double(r.h) << ","
        << format_double(r.err_y) << ",";
    if (r.err_p) out << format_double(*r.err_p);
    out << ",";
    if (r.rate_y) out << format_double(*r.rate_y);
    out << ",";
    if (r.rate_p) out << format_double(*r.rate_p);
    out << "\n";
  }
  return out.str();
}

double MmsLinearKkt::y_exact(std::span<const double> xt) const {
  return xt[d] * sin_prod(xt, d);
}

double MmsLinearKkt::p_exact(std::span<const double> xt) const {
  return (1.0 - xt[d]) * sin_prod(xt, d);
}

double MmsLinearKkt::u_exact(std::span<const double> xt) const {
  return -p_exact(xt) / rho;
}

double MmsLinearKkt::source(std::span<const double> xt) const {
  const double t = xt[d];
  return sin_prod(xt, d) * (1.0 + d * kPi * kPi * t + (1.0 - t) / rho);
}

double MmsLinearKkt::desired_state(std::span<const double> xt) const {
  const double t = xt[d];
  return sin_prod(xt, d) * (t - 1.0 - d * kPi * kPi * (1.0 - t));
}

double MmsForward::y_exact(std::span<const double> xt) const {
  return xt[d] * sin_prod(xt, d);
}

double MmsForward::source(std::span<const double> xt) const {
  const double t = xt[d];
  // Gradient and Hessian of y* = t prod sin(pi x_i).
  std::array<double, 3> grad{};
  std::array<double, 9> hess{};
  for (int a = 0; a < d; ++a) {
    double ga = t * kPi;
    for (int k = 0; k < d; ++k)
      ga *= k == a ? std::cos(kPi * xt[k]) : std::sin(kPi * xt[k]);
    grad[a] = ga;
    for (int b = 0; b < d; ++b) {
      double hab = t * kPi * kPi;
      if (a == b) {
        hab = -kPi * kPi * t * sin_prod(xt, d);
      } else {
        for (int k = 0; k < d; ++k)
          hab *= (k == a || k == b) ? std::cos(kPi * xt[k])
                                    : std::sin(kPi * xt[k]);
      }
      hess[a * d + b] = hab;
    }
  }
  // div F(grad y) = DF(grad y) : Hessian(y), both symmetric.
  std::array<double, 9> df{};
  flux_jacobian(params, std::span<const double>(grad.data(), d),
                std::span(df.data(), std::size_t(d) * d));
  double div = 0.0;
  for (int a = 0; a < d; ++a)
    for (int b = 0; b < d; ++b) div += df[a * d + b] * hess[a * d + b];
  return sin_prod(xt, d) - div;
}

ConvergenceTable mms_linear_kkt(int d, int levels, double rho,
                                const NewtonConfig& ncfg,
                                const LinearSolverConfig& lcfg) {
  if (d < 1 || d > 2) throw Error("mms_linear_kkt: d must be 1 or 2");
  if (levels < 1 || levels > 5) throw Error("mms_linear_kkt: levels in 1..5");
  const MmsLinearKkt mms{d, rho};
  ConvergenceTable table;
  std::vector<std::pair<double, double>> hy, hp;
  for (int level = 0; level < levels; ++level) {
    const int m = 4 << level;
    OptControlProblem problem(
        unit_domain(d), std::vector<int>(d + 1, m), CarreauParams{1.0, 0.0},
        rho, [&](std::span<const double> xt) { return mms.source(xt); },
        [&](std::span<const double> xt) { return mms.desired_state(xt); });
    const KKTSolution sol = solve_kkt(problem, ncfg, lcfg);
    if (!sol.converged)
      throw Error("mms_linear_kkt: solve failed at level " +
                  std::to_string(level) + ": " + sol.failure);
    ConvergenceRow row;
    row.level = level;
    row.h = 1.0 / m;
    row.err_y = l2_error(problem.mesh(), sol.y,
                         [&](std::span<const double> xt) {
                           return mms.y_exact(xt);
                         });
    row.err_p = l2_error(problem.mesh(), sol.p,
                         [&](std::span<const double> xt) {
                           return mms.p_exact(xt);
                         });
    row.newton_iters = sol.newton_iters;
    hy.emplace_back(row.h, row.err_y);
    hp.emplace_back(row.h, *row.err_p);
    if (level > 0) {
      row.rate_y = convergence_rates(hy).back();
      row.rate_p = convergence_rates(hp).back();
    }
    table.rows.push_back(row);
  }
  return table;
}

ConvergenceTable mms_forward(const CarreauParams& params, int d, int levels,
                             const NewtonConfig& ncfg,
                             const LinearSolverConfig& lcfg) {
  if (d < 1 || d > 2) throw Error("mms_forward: d must be 1 or 2");
  if (levels < 1 || levels > 5) throw Error("mms_forward: levels in 1..5");
  const MmsForward mms{d, params};
  ConvergenceTable table;
  std::vector<std::pair<double, double>> hy;
  for (int level = 0; level < levels; ++level) {
    const int m = 4 << level;
    OptControlProblem problem(
        unit_domain(d), std::vector<int>(d + 1, m), params, 1.0,
        [&](std::span<const double> xt) { return mms.source(xt); },
        nullptr);
    const ForwardResult fwd =
        solve_forward(problem, NodalField(problem.mesh()), ncfg, lcfg);
    if (!fwd.converged)
      throw Error("mms_forward: solve failed at level " +
                  std::to_string(level) + ": " + fwd.failure);
    ConvergenceRow row;
    row.level = level;
    row.h = 1.0 / m;
    row.err_y = l2_error(problem.mesh(), fwd.y,
                         [&](std::span<const double> xt) {
                           return mms.y_exact(xt);
                         });
    row.newton_iters = fwd.newton_iters;
    hy.emplace_back(row.h, row.err_y);
    if (level > 0) row.rate_y = convergence_rates(hy).back();
    table.rows.push_back(row);
  }
  return table;
}

double fd_gradient_check(const OptControlProblem& problem, const NodalField& u,
                         int num_directions, double eps,
                         const NewtonConfig& ncfg,
                         const LinearSolverConfig& lcfg) {
  if (!(eps >= 1e-7 && eps <= 1e-3))
    throw Error("fd_gradient_check: eps must be in [1e-7, 1e-3]");
  const auto cost_of = [&](const NodalField& control) {
    const ForwardResult fwd = solve_forward(problem, control, ncfg, lcfg);
    if (!fwd.converged)
      throw Error("fd_gradient_check: forward solve failed: " + fwd.failure);
    return cost_functional(problem, fwd.y, control).J;
  };
  const NodalField grad = reduced_gradient(problem, u, ncfg, lcfg);

  std::mt19937_64 rng(20240517);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < num_directions; ++k) {
    NodalField du(problem.mesh());
    for (double& v : du.values) v = uniform(rng);
    const double directional = l2_inner_Q(problem.mesh(), grad, du);
    NodalField up = u, um = u;
    for (int v = 0; v < du.size(); ++v) {
      up.values[v] += eps * du.values[v];
      um.values[v] -= eps * du.values[v];
    }
    const double fd = (cost_of(up) - cost_of(um)) / (2.0 * eps);
    const double scale =
        std::max({std::abs(directional), std::abs(fd), 1e-30});
    worst = std::max(worst, std::abs(fd - directional) / scale);
  }
  return worst;
}

std::vector<double> convergence_rates(
    const std::vector<std::pair<double, double>>& h_and_error) {
  if (h_and_error.size() < 2)
    throw Error("convergence_rates: need at least 2 rows");
  std::vector<double> rates;
  for (std::size_t k = 1; k < h_and_error.size(); ++k) {
    const auto [h0, e0] = h_and_error[k - 1];
    const auto [h1, e1] = h_and_error[k];
    if (!(h1 < h0)) throw Error("convergence_rates: h must decrease");
    if (e1 == 0.0) {
      rates.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    rates.push_back(std::log(e0 / e1) / std::log(h0 / h1));
  }
  return rates;
}

}  // namespace cst
