#include "cst/fem.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace cst {

double NodalField::max_abs() const {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

DofMask DofMask::all_free(const SimplexMesh& mesh) {
  DofMask mask;
  const int n = mesh.num_vertices();
  mask.eq_of_.resize(n);
  mask.vertex_of_.resize(n);
  for (int v = 0; v < n; ++v) {
    mask.eq_of_[v] = v;
    mask.vertex_of_[v] = v;
  }
  mask.num_free_ = n;
  return mask;
}

DofMask DofMask::from_excluded_tags(const SimplexMesh& mesh,
                                    std::uint8_t excluded_bits) {
  DofMask mask;
  const int n = mesh.num_vertices();
  mask.eq_of_.assign(n, -1);
  for (int v = 0; v < n; ++v)
    if ((mesh.node_tag(v) & excluded_bits) == 0) {
      mask.eq_of_[v] = mask.num_free_;
      mask.vertex_of_.push_back(v);
      ++mask.num_free_;
    }
  return mask;
}

LocalMatrix p1_local_mass(double volume, int D) {
  if (!(volume > 0.0)) throw Error("p1_local_mass: volume must be positive");
  LocalMatrix m;
  m.n = D + 1;
  const double base = volume / ((D + 1) * (D + 2));
  for (int i = 0; i <= D; ++i)
    for (int j = 0; j <= D; ++j) m(i, j) = base * (i == j ? 2.0 : 1.0);
  return m;
}

namespace {

struct Pattern {
  std::vector<std::int64_t> row_offsets;
  std::vector<std::int32_t> col_indices;
};

Pattern build_pattern(const SimplexMesh& mesh, const DofMask& trial_mask,
                      const DofMask& test_mask) {
  const int D = mesh.dim();
  const int E = mesh.num_elements();
  const int nrows = test_mask.num_free();

  // Gather all (row, col) pairs, then sort and unique per row.
  std::vector<std::int64_t> counts(nrows + 1, 0);
  for (int e = 0; e < E; ++e) {
    const auto conn = mesh.element(e);
    int ntrial = 0;
    for (int j = 0; j <= D; ++j)
      if (trial_mask.is_free(conn[j])) ++ntrial;
    for (int i = 0; i <= D; ++i) {
      const auto r = test_mask.eq_of(conn[i]);
      if (r >= 0) counts[r + 1] += ntrial;
    }
  }
  for (int r = 0; r < nrows; ++r) counts[r + 1] += counts[r];

  std::vector<std::int32_t> cols(counts[nrows]);
  std::vector<std::int64_t> cursor(counts.begin(), counts.end() - 1);
  for (int e = 0; e < E; ++e) {
    const auto conn = mesh.element(e);
    for (int i = 0; i <= D; ++i) {
      const auto r = test_mask.eq_of(conn[i]);
      if (r < 0) continue;
      for (int j = 0; j <= D; ++j) {
        const auto c = trial_mask.eq_of(conn[j]);
        if (c >= 0) cols[cursor[r]++] = c;
      }
    }
  }

  Pattern p;
  p.row_offsets.assign(nrows + 1, 0);
  std::int64_t w = 0;
  for (int r = 0; r < nrows; ++r) {
    const auto b = counts[r], e2 = counts[r + 1];
    std::sort(cols.begin() + b, cols.begin() + e2);
    for (auto k = b; k < e2; ++k)
      if (k == b || cols[k] != cols[k - 1]) cols[w++] = cols[k];
    p.row_offsets[r + 1] = w;
  }
  cols.resize(w);
  p.col_indices = std::move(cols);
  return p;
}

void scatter_add(const Pattern& pat, int row, int col, double v,
                 std::vector<double>& values) {
  const auto b = pat.row_offsets[row];
  const auto e = pat.row_offsets[row + 1];
  const auto it = std::lower_bound(pat.col_indices.begin() + b,
                                   pat.col_indices.begin() + e, col);
  values[it - pat.col_indices.begin()] += v;
}

}  // namespace

SparseMatrix assemble_bilinear(const SimplexMesh& mesh,
                               const ElementKernel& kernel,
                               const DofMask& trial_mask,
                               const DofMask& test_mask, int n_threads) {
  const int D = mesh.dim();
  const int E = mesh.num_elements();
  Pattern pat = build_pattern(mesh, trial_mask, test_mask);

  const auto run_range = [&](int e0, int e1, std::vector<double>& values) {
    LocalMatrix local;
    for (int e = e0; e < e1; ++e) {
      local = LocalMatrix{};
      local.n = D + 1;
      kernel(e, element_geometry(mesh, e), local);
      const auto conn = mesh.element(e);
      for (int i = 0; i <= D; ++i) {
        const auto r = test_mask.eq_of(conn[i]);
        if (r < 0) continue;
        for (int j = 0; j <= D; ++j) {
          const double v = local(i, j);
          if (!std::isfinite(v))
            throw Error("assemble_bilinear: non-finite local matrix on "
                        "element " +
                        std::to_string(e));
          const auto c = trial_mask.eq_of(conn[j]);
          if (c >= 0) scatter_add(pat, r, c, v, values);
        }
      }
    }
  };

  std::vector<double> values(pat.col_indices.size(), 0.0);
  n_threads = std::max(1, std::min(n_threads, E));
  if (n_threads == 1) {
    run_range(0, E, values);
  } else {
    std::vector<std::vector<double>> partial(
        n_threads, std::vector<double>(pat.col_indices.size(), 0.0));
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
      for (std::size_t k = 0; k < values.size(); ++k)
        values[k] += partial[t][k];
  }

  return SparseMatrix(test_mask.num_free(), trial_mask.num_free(),
                      std::move(pat.row_offsets), std::move(pat.col_indices),
                      std::move(values));
}

NodalField interpolate(
    const SimplexMesh& mesh,
    const std::function<double(std::span<const double>)>& g) {
  NodalField field(mesh);
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double val = g(mesh.vertex(v));
    if (!std::isfinite(val))
      throw Error("interpolate: non-finite value at vertex " +
                  std::to_string(v));
    field.values[v] = val;
  }
  return field;
}

double evaluate(const SimplexMesh& mesh, const NodalField& field,
                std::span<const double> point) {
  const auto loc = locate_point(mesh, point);
  if (!loc) throw Error("evaluate: point outside the space-time cylinder");
  const auto conn = mesh.element(loc->element);
  double s = 0.0;
  for (int i = 0; i <= mesh.dim(); ++i)
    s += loc->barycentric[i] * field.values[conn[i]];
  return s;
}

QuadratureRule simplex_quadrature(int D, int degree) {
  if (D < 1 || D > kMaxDim) throw Error("simplex_quadrature: bad dimension");
  QuadratureRule rule;
  rule.nbary = D + 1;
  if (degree == 2) {
    // D+1 points (a,b,...,b), equal weights; exact for quadratics.
    const double b = (1.0 - 1.0 / std::sqrt(double(D + 2))) / (D + 1);
    const double a = 1.0 - D * b;
    rule.npoints = D + 1;
    rule.barycentric.assign(std::size_t(rule.npoints) * (D + 1), b);
    rule.weights.assign(rule.npoints, 1.0 / (D + 1));
    for (int q = 0; q <= D; ++q) rule.barycentric[q * (D + 1) + q] = a;
  } else if (degree == 3) {
    // Centroid plus the (3,1,...,1)/(D+3) orbit; weights from the moment
    // conditions on 1 and lambda_1^2.
    const double a = 3.0 / (D + 3);
    const double b = 1.0 / (D + 3);
    const double m2 = 2.0 / double((D + 1) * (D + 2));
    const double s2 = a * a + D * b * b;
    const double w1 =
        (m2 - 1.0 / double((D + 1) * (D + 1))) / (s2 - 1.0 / (D + 1));
    const double wc = 1.0 - (D + 1) * w1;
    rule.npoints = D + 2;
    rule.barycentric.assign(std::size_t(rule.npoints) * (D + 1),
                            1.0 / (D + 1));
    rule.weights.assign(rule.npoints, w1);
    rule.weights[0] = wc;
    for (int q = 0; q <= D; ++q) {
      double* bary = rule.barycentric.data() + std::size_t(q + 1) * (D + 1);
      for (int i = 0; i <= D; ++i) bary[i] = i == q ? a : b;
    }
  } else {
    throw Error("simplex_quadrature: degree must be 2 or 3");
  }
  return rule;
}

double l2_norm_Q(const SimplexMesh& mesh, const NodalField& field) {
  return std::sqrt(std::max(0.0, l2_inner_Q(mesh, field, field)));
}

double l2_inner_Q(const SimplexMesh& mesh, const NodalField& a,
                  const NodalField& b) {
  const int D = mesh.dim();
  double total = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto conn = mesh.element(e);
    const double scale = mesh.volume(e) / ((D + 1) * (D + 2));
    double sa = 0.0, sb = 0.0, sab = 0.0;
    for (int i = 0; i <= D; ++i) {
      sa += a.values[conn[i]];
      sb += b.values[conn[i]];
      sab += a.values[conn[i]] * b.values[conn[i]];
    }
    // v^T M w with M = scale * (ones + I).
    total += scale * (sa * sb + sab);
  }
  return total;
}

double l2_error(const SimplexMesh& mesh, const NodalField& field,
                const std::function<double(std::span<const double>)>& exact,
                int quad_degree) {
  const int D = mesh.dim();
  const QuadratureRule rule = simplex_quadrature(D, quad_degree);
  double total = 0.0;
  std::array<double, kMaxDim> x{};
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const auto conn = mesh.element(e);
    double acc = 0.0;
    for (int q = 0; q < rule.npoints; ++q) {
      const auto bary = rule.point(q);
      double fh = 0.0;
      x.fill(0.0);
      for (int i = 0; i <= D; ++i) {
        fh += bary[i] * field.values[conn[i]];
        const auto v = mesh.vertex(conn[i]);
        for (int k = 0; k < D; ++k) x[k] += bary[i] * v[k];
      }
      const double diff = fh - exact(std::span<const double>(x.data(), D));
      acc += rule.weights[q] * diff * diff;
    }
    total += mesh.volume(e) * acc;
  }
  return std::sqrt(std::max(0.0, total));
}

}  // namespace cst
