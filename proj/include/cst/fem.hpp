// P1 continuous finite elements on space-time simplices: exact local
// integrals, masked sparse assembly, interpolation, evaluation and L2 norms
// over Q.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cst/mesh.hpp"
#include "cst/sparse.hpp"

namespace cst {

struct NodalField {
  const SimplexMesh* mesh = nullptr;
  std::vector<double> values;

  NodalField() = default;
  explicit NodalField(const SimplexMesh& m)
      : mesh(&m), values(m.num_vertices(), 0.0) {}
  NodalField(const SimplexMesh& m, std::vector<double> v)
      : mesh(&m), values(std::move(v)) {}
  int size() const { return static_cast<int>(values.size()); }
  double max_abs() const;
};

// Free/constrained flags plus the vertex <-> equation numbering of the free
// set. Constrained vertices carry value 0 in every solve (homogeneous data).
class DofMask {
 public:
  static DofMask all_free(const SimplexMesh& mesh);
  // Constrains every vertex whose tag intersects excluded_bits.
  static DofMask from_excluded_tags(const SimplexMesh& mesh,
                                    std::uint8_t excluded_bits);

  int num_vertices() const { return static_cast<int>(eq_of_.size()); }
  int num_free() const { return num_free_; }
  bool is_free(int v) const { return eq_of_[v] >= 0; }
  std::int32_t eq_of(int v) const { return eq_of_[v]; }  // -1 if constrained
  std::int32_t vertex_of(int eq) const { return vertex_of_[eq]; }

 private:
  std::vector<std::int32_t> eq_of_;
  std::vector<std::int32_t> vertex_of_;
  int num_free_ = 0;
};

// Dense (D+1)x(D+1) element matrix in row-major order.
struct LocalMatrix {
  std::array<double, (kMaxDim + 1) * (kMaxDim + 1)> a{};
  int n = 0;
  double& operator()(int i, int j) { return a[i * n + j]; }
  double operator()(int i, int j) const { return a[i * n + j]; }
};

// Exact P1 mass on a simplex: volume * (1 + delta_ij) / ((D+1)(D+2)).
LocalMatrix p1_local_mass(double volume, int D);

using ElementKernel =
    std::function<void(int elem, const ElementGeometry&, LocalMatrix&)>;

// Rows are free test dofs, columns free trial dofs; constrained trial dofs
// contribute nothing. With n_threads > 1 elements are partitioned into
// contiguous chunks whose partial sums are merged in chunk order, so results
// match serial assembly to summation-order accuracy.
SparseMatrix assemble_bilinear(const SimplexMesh& mesh,
                               const ElementKernel& kernel,
                               const DofMask& trial_mask,
                               const DofMask& test_mask, int n_threads = 1);

NodalField interpolate(const SimplexMesh& mesh,
                       const std::function<double(std::span<const double>)>& g);

double evaluate(const SimplexMesh& mesh, const NodalField& field,
                std::span<const double> point);

// Symmetric quadrature on the reference simplex in barycentric coordinates;
// weights sum to 1 (integral = volume * sum w_q f(x_q)).
struct QuadratureRule {
  int npoints = 0;
  int nbary = 0;
  std::vector<double> barycentric;  // npoints x (D+1)
  std::vector<double> weights;
  std::span<const double> point(int q) const {
    return {barycentric.data() + std::size_t(q) * nbary, std::size_t(nbary)};
  }
};

QuadratureRule simplex_quadrature(int D, int degree);  // degree in {2,3}

// L2(Q) norm via the exact P1 mass matrix.
double l2_norm_Q(const SimplexMesh& mesh, const NodalField& field);

// L2(Q) inner product of two P1 fields (exact).
double l2_inner_Q(const SimplexMesh& mesh, const NodalField& a,
                  const NodalField& b);

// || field - exact ||_{L2(Q)} by simplex quadrature of the given degree.
double l2_error(const SimplexMesh& mesh, const NodalField& field,
                const std::function<double(std::span<const double>)>& exact,
                int quad_degree = 3);

}  // namespace cst
