#include "cst/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "cst/util.hpp"

namespace cst {
namespace {

double factorial(int n) {
  double f = 1.0;
  for (int k = 2; k <= n; ++k) f *= k;
  return f;
}

// Invert the DxD matrix a (row-major) in place via Gauss-Jordan with
// partial pivoting; returns the determinant (0 signals singularity).
double invert_small(double* a, int D) {
  double inv[kMaxDim * kMaxDim];
  for (int i = 0; i < D * D; ++i) inv[i] = 0.0;
  for (int i = 0; i < D; ++i) inv[i * D + i] = 1.0;
  double det = 1.0;
  for (int col = 0; col < D; ++col) {
    int piv = col;
    for (int r = col + 1; r < D; ++r)
      if (std::abs(a[r * D + col]) > std::abs(a[piv * D + col])) piv = r;
    if (a[piv * D + col] == 0.0) return 0.0;
    if (piv != col) {
      for (int k = 0; k < D; ++k) {
        std::swap(a[piv * D + k], a[col * D + k]);
        std::swap(inv[piv * D + k], inv[col * D + k]);
      }
      det = -det;
    }
    const double p = a[col * D + col];
    det *= p;
    const double ip = 1.0 / p;
    for (int k = 0; k < D; ++k) {
      a[col * D + k] *= ip;
      inv[col * D + k] *= ip;
    }
    for (int r = 0; r < D; ++r) {
      if (r == col) continue;
      const double f = a[r * D + col];
      if (f == 0.0) continue;
      for (int k = 0; k < D; ++k) {
        a[r * D + k] -= f * a[col * D + k];
        inv[r * D + k] -= f * inv[col * D + k];
      }
    }
  }
  std::copy(inv, inv + D * D, a);
  return det;
}

// Edge matrix (columns v_i - v_0) of an element, row-major DxD.
void edge_matrix(const SimplexMesh& mesh, std::span<const std::int32_t> conn,
                 double* E) {
  const int D = mesh.dim();
  const auto v0 = mesh.vertex(conn[0]);
  for (int j = 1; j <= D; ++j) {
    const auto vj = mesh.vertex(conn[j]);
    for (int r = 0; r < D; ++r) E[r * D + (j - 1)] = vj[r] - v0[r];
  }
}

double signed_volume(const SimplexMesh& mesh,
                     std::span<const std::int32_t> conn) {
  const int D = mesh.dim();
  double E[kMaxDim * kMaxDim];
  edge_matrix(mesh, conn, E);
  // Determinant by elimination (no inverse needed); reuse invert_small on a
  // scratch copy would also work but this keeps the singular case exact.
  double det = 1.0;
  for (int col = 0; col < D; ++col) {
    int piv = col;
    for (int r = col + 1; r < D; ++r)
      if (std::abs(E[r * D + col]) > std::abs(E[piv * D + col])) piv = r;
    if (E[piv * D + col] == 0.0) return 0.0;
    if (piv != col) {
      for (int k = 0; k < D; ++k) std::swap(E[piv * D + k], E[col * D + k]);
      det = -det;
    }
    det *= E[col * D + col];
    for (int r = col + 1; r < D; ++r) {
      const double f = E[r * D + col] / E[col * D + col];
      for (int k = col; k < D; ++k) E[r * D + k] -= f * E[col * D + k];
    }
  }
  return det / factorial(D);
}

struct FacetKey {
  std::array<std::int32_t, kMaxDim> v{-1, -1, -1, -1};
  bool operator==(const FacetKey&) const = default;
};

struct FacetHash {
  std::size_t operator()(const FacetKey& f) const {
    std::size_t h = 1469598103934665603ull;
    for (auto x : f.v) {
      h ^= static_cast<std::size_t>(x) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return h;
  }
};

}  // namespace

double DomainSpec::measure() const {
  double m = final_time;
  for (int k = 0; k < spatial_dim; ++k) m *= upper[k] - lower[k];
  return m;
}

void DomainSpec::validate() const {
  if (spatial_dim < 1 || spatial_dim > 3)
    throw Error("DomainSpec: spatial_dim must be 1, 2 or 3, got " +
                std::to_string(spatial_dim));
  for (int k = 0; k < spatial_dim; ++k)
    if (!(lower[k] < upper[k]))
      throw Error("DomainSpec: lower[" + std::to_string(k) +
                  "] must be < upper[" + std::to_string(k) + "]");
  if (!(final_time > 0.0)) throw Error("DomainSpec: final time must be > 0");
}

double SimplexMesh::total_volume() const {
  double s = 0.0;
  for (double v : volumes_) s += v;
  return s;
}

SimplexMesh build_tensor_simplex_mesh(const DomainSpec& domain,
                                      std::vector<int> divisions) {
  domain.validate();
  const int D = domain.mesh_dim();
  if (divisions.size() == 1) divisions.assign(D, divisions[0]);
  if (static_cast<int>(divisions.size()) != D)
    throw Error("divisions must have one entry per axis (" +
                std::to_string(D) + "), got " +
                std::to_string(divisions.size()));
  for (int m : divisions)
    if (m < 1) throw Error("divisions must be positive");

  std::array<int, kMaxDim> npts{};
  std::array<std::int64_t, kMaxDim> stride{};
  std::int64_t num_vertices = 1;
  for (int k = 0; k < D; ++k) {
    npts[k] = divisions[k] + 1;
    stride[k] = num_vertices;
    num_vertices *= npts[k];
  }

  std::vector<double> vertices(num_vertices * D);
  std::array<int, kMaxDim> idx{};
  for (std::int64_t v = 0; v < num_vertices; ++v) {
    for (int k = 0; k < D; ++k) {
      const double lo = domain.axis_lower(k);
      const double hi = domain.axis_upper(k);
      vertices[v * D + k] =
          idx[k] == divisions[k]
              ? hi
              : lo + (hi - lo) * (double(idx[k]) / divisions[k]);
    }
    for (int k = 0; k < D; ++k) {
      if (++idx[k] < npts[k]) break;
      idx[k] = 0;
    }
  }

  // One simplex per axis permutation sigma: vertex path from the cell's
  // low corner adding one lattice step per axis, in sigma order.
  std::vector<std::array<int, kMaxDim>> perms;
  std::array<int, kMaxDim> perm{};
  std::iota(perm.begin(), perm.begin() + D, 0);
  do {
    perms.push_back(perm);
  } while (std::next_permutation(perm.begin(), perm.begin() + D));

  std::int64_t num_cells = 1;
  for (int k = 0; k < D; ++k) num_cells *= divisions[k];
  std::vector<std::int32_t> elements;
  elements.reserve(num_cells * perms.size() * (D + 1));

  std::array<int, kMaxDim> cell{};
  for (std::int64_t c = 0; c < num_cells; ++c) {
    std::int64_t origin = 0;
    for (int k = 0; k < D; ++k) origin += cell[k] * stride[k];
    for (const auto& p : perms) {
      std::int64_t v = origin;
      elements.push_back(static_cast<std::int32_t>(v));
      for (int s = 0; s < D; ++s) {
        v += stride[p[s]];
        elements.push_back(static_cast<std::int32_t>(v));
      }
    }
    for (int k = 0; k < D; ++k) {
      if (++cell[k] < divisions[k]) break;
      cell[k] = 0;
    }
  }

  return make_simplex_mesh(domain, std::move(divisions), std::move(vertices),
                           std::move(elements));
}

SimplexMesh make_simplex_mesh(const DomainSpec& domain,
                              std::vector<int> divisions,
                              std::vector<double> vertices,
                              std::vector<std::int32_t> elements) {
  domain.validate();
  const int D = domain.mesh_dim();
  if (static_cast<int>(divisions.size()) != D)
    throw Error("make_simplex_mesh: divisions size mismatch");

  SimplexMesh mesh;
  mesh.domain_ = domain;
  mesh.divisions_ = std::move(divisions);
  mesh.D_ = D;
  mesh.vertices_ = std::move(vertices);
  mesh.elements_ = std::move(elements);
  if (mesh.vertices_.size() % D != 0 ||
      mesh.elements_.size() % (D + 1) != 0)
    throw Error("make_simplex_mesh: array sizes inconsistent with dimension");

  const int N = mesh.num_vertices();
  const int E = mesh.num_elements();

  // Classify nodes against the axis-aligned faces of Q.
  mesh.node_tags_.assign(N, kTagInterior);
  for (int v = 0; v < N; ++v) {
    const auto x = mesh.vertex(v);
    std::uint8_t tag = kTagInterior;
    for (int k = 0; k < D; ++k) {
      const double lo = domain.axis_lower(k);
      const double hi = domain.axis_upper(k);
      const double tol = 1e-12 * std::max(1.0, hi - lo);
      const bool on_lo = std::abs(x[k] - lo) <= tol;
      const bool on_hi = std::abs(x[k] - hi) <= tol;
      if (k < domain.spatial_dim) {
        if (on_lo || on_hi) tag |= kTagLateral;
      } else {
        if (on_lo) tag |= kTagInitial;
        if (on_hi) tag |= kTagTerminal;
      }
    }
    mesh.node_tags_[v] = tag;
  }

  // Orientation normalization: swap the last two vertices where the signed
  // volume is negative, so every stored element is positively oriented.
  for (int e = 0; e < E; ++e) {
    auto conn = std::span<std::int32_t>(
        mesh.elements_.data() + std::size_t(e) * (D + 1), std::size_t(D + 1));
    for (auto v : conn)
      if (v < 0 || v >= N) throw Error("element references invalid vertex");
    if (signed_volume(mesh, conn) < 0.0) std::swap(conn[D - 1], conn[D]);
  }

  // Global mesh size: max pairwise vertex distance over elements.
  double h = 0.0;
  for (int e = 0; e < E; ++e) {
    const auto conn = mesh.element(e);
    for (int i = 0; i <= D; ++i)
      for (int j = i + 1; j <= D; ++j) {
        const auto a = mesh.vertex(conn[i]);
        const auto b = mesh.vertex(conn[j]);
        double s = 0.0;
        for (int k = 0; k < D; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        h = std::max(h, s);
      }
  }
  mesh.h_ = std::sqrt(h);

  // Geometry cache: volume and barycentric gradients per element.
  mesh.volumes_.resize(E);
  mesh.grad_lambda_.assign(std::size_t(E) * (D + 1) * D, 0.0);
  const double dfact = factorial(D);
  const double degenerate = 1e-14 * std::pow(mesh.h_, D);
  for (int e = 0; e < E; ++e) {
    double Emat[kMaxDim * kMaxDim];
    edge_matrix(mesh, mesh.element(e), Emat);
    const double det = invert_small(Emat, D);
    const double vol = det / dfact;  // positive after normalization
    if (!(vol > degenerate))
      throw Error("degenerate element " + std::to_string(e) + " (volume " +
                  format_double(vol) + ")");
    mesh.volumes_[e] = vol;
    double* g = mesh.grad_lambda_.data() + std::size_t(e) * (D + 1) * D;
    // grad lambda_i = row i-1 of E^{-1}; grad lambda_0 closes the partition
    // of unity.
    for (int i = 1; i <= D; ++i)
      for (int k = 0; k < D; ++k) {
        g[i * D + k] = Emat[(i - 1) * D + k];
        g[0 * D + k] -= Emat[(i - 1) * D + k];
      }
  }

  // Cell -> element lookup for point location (cell of the barycenter).
  std::int64_t num_cells = 1;
  std::array<std::int64_t, kMaxDim> cstride{};
  for (int k = 0; k < D; ++k) {
    cstride[k] = num_cells;
    num_cells *= mesh.divisions_[k];
  }
  std::vector<std::int32_t> cell_of(E);
  std::vector<std::int32_t> counts(num_cells, 0);
  for (int e = 0; e < E; ++e) {
    const auto conn = mesh.element(e);
    std::int64_t cid = 0;
    for (int k = 0; k < D; ++k) {
      double bk = 0.0;
      for (int i = 0; i <= D; ++i) bk += mesh.vertex(conn[i])[k];
      bk /= D + 1;
      const double lo = domain.axis_lower(k);
      const double hi = domain.axis_upper(k);
      const double step = (hi - lo) / mesh.divisions_[k];
      int ck = static_cast<int>(std::floor((bk - lo) / step));
      ck = std::clamp(ck, 0, mesh.divisions_[k] - 1);
      cid += ck * cstride[k];
    }
    cell_of[e] = static_cast<std::int32_t>(cid);
    ++counts[cid];
  }
  mesh.cell_elem_offsets_.assign(num_cells + 1, 0);
  for (std::int64_t c = 0; c < num_cells; ++c)
    mesh.cell_elem_offsets_[c + 1] = mesh.cell_elem_offsets_[c] + counts[c];
  mesh.cell_elems_.resize(E);
  std::vector<std::int32_t> cursor(mesh.cell_elem_offsets_.begin(),
                                   mesh.cell_elem_offsets_.end() - 1);
  for (int e = 0; e < E; ++e) mesh.cell_elems_[cursor[cell_of[e]]++] = e;

  return mesh;
}

ElementGeometry element_geometry(const SimplexMesh& mesh, int elem) {
  if (elem < 0 || elem >= mesh.num_elements())
    throw Error("element index out of range");
  const int D = mesh.dim();
  ElementGeometry g;
  g.volume = mesh.volume(elem);
  g.num_vertices = D + 1;
  for (int i = 0; i <= D; ++i) g.grad_lambda[i] = mesh.grad_lambda(elem, i);
  return g;
}

std::optional<PointLocation> locate_point(const SimplexMesh& mesh,
                                          std::span<const double> point) {
  const int D = mesh.dim();
  if (static_cast<int>(point.size()) != D)
    throw Error("locate_point: point dimension mismatch");
  const auto& dom = mesh.domain();
  std::array<int, kMaxDim> cell{};
  for (int k = 0; k < D; ++k) {
    const double lo = dom.axis_lower(k);
    const double hi = dom.axis_upper(k);
    const double tol = 1e-12 * std::max(1.0, hi - lo);
    if (point[k] < lo - tol || point[k] > hi + tol) return std::nullopt;
    const double step = (hi - lo) / mesh.divisions()[k];
    cell[k] = std::clamp(static_cast<int>(std::floor((point[k] - lo) / step)),
                         0, mesh.divisions()[k] - 1);
  }

  std::array<std::int64_t, kMaxDim> cstride{};
  std::int64_t num_cells = 1;
  for (int k = 0; k < D; ++k) {
    cstride[k] = num_cells;
    num_cells *= mesh.divisions()[k];
  }

  const auto try_cell = [&](const std::array<int, kMaxDim>& c)
      -> std::optional<PointLocation> {
    std::int64_t cid = 0;
    for (int k = 0; k < D; ++k) cid += c[k] * cstride[k];
    for (std::int32_t idx = mesh.cell_elem_offsets_[cid];
         idx < mesh.cell_elem_offsets_[cid + 1]; ++idx) {
      const int e = mesh.cell_elems_[idx];
      const auto conn = mesh.element(e);
      const auto v0 = mesh.vertex(conn[0]);
      PointLocation loc;
      loc.element = e;
      double lmin = 1.0;
      for (int i = 0; i <= D; ++i) {
        const auto g = mesh.grad_lambda(e, i);
        double lam = i == 0 ? 1.0 : 0.0;
        for (int k = 0; k < D; ++k) lam += g[k] * (point[k] - v0[k]);
        loc.barycentric[i] = lam;
        lmin = std::min(lmin, lam);
      }
      if (lmin >= -1e-12) return loc;
    }
    return std::nullopt;
  };

  if (auto loc = try_cell(cell)) return loc;
  // Points on cell faces can land in a neighboring cell after rounding.
  std::array<int, kMaxDim> nb{};
  std::array<int, kMaxDim> off{};
  off.fill(-1);
  while (true) {
    bool valid = true, all_zero = true;
    for (int k = 0; k < D; ++k) {
      nb[k] = cell[k] + off[k];
      if (off[k] != 0) all_zero = false;
      if (nb[k] < 0 || nb[k] >= mesh.divisions()[k]) valid = false;
    }
    if (valid && !all_zero)
      if (auto loc = try_cell(nb)) return loc;
    int k = 0;
    for (; k < D; ++k) {
      if (++off[k] <= 1) break;
      off[k] = -1;
    }
    if (k == D) break;
  }
  return std::nullopt;
}

MeshValidation validate_mesh(const SimplexMesh& mesh) {
  MeshValidation report;
  const int D = mesh.dim();
  const int E = mesh.num_elements();

  std::int64_t expect_vertices = 1;
  for (int m : mesh.divisions()) expect_vertices *= m + 1;
  if (expect_vertices != mesh.num_vertices())
    report.violations.push_back(
        "vertex count " + std::to_string(mesh.num_vertices()) +
        " does not match lattice size " + std::to_string(expect_vertices));

  for (int e = 0; e < E; ++e)
    if (!(signed_volume(mesh, mesh.element(e)) > 0.0)) {
      report.violations.push_back("element " + std::to_string(e) +
                                  " has non-positive volume");
      break;
    }

  const double total = mesh.total_volume();
  const double measure = mesh.domain().measure();
  if (std::abs(total - measure) > 1e-12 * measure)
    report.violations.push_back("element volumes sum to " +
                                format_double(total) + ", expected " +
                                format_double(measure));

  // Conformity: interior facets shared by exactly 2 elements, boundary by 1.
  std::unordered_map<FacetKey, int, FacetHash> facets;
  facets.reserve(std::size_t(E) * (D + 1));
  for (int e = 0; e < E; ++e) {
    const auto conn = mesh.element(e);
    for (int skip = 0; skip <= D; ++skip) {
      FacetKey f;
      int w = 0;
      for (int i = 0; i <= D; ++i)
        if (i != skip) f.v[w++] = conn[i];
      std::sort(f.v.begin(), f.v.begin() + D);
      ++facets[f];
    }
  }
  for (const auto& [f, count] : facets) {
    if (count == 1 || count == 2) continue;
    report.violations.push_back("facet shared by " + std::to_string(count) +
                                " elements");
    break;
  }
  // Every facet seen once must lie on the boundary of Q.
  for (const auto& [f, count] : facets) {
    if (count != 1) continue;
    bool on_boundary = false;
    for (int k = 0; k < D && !on_boundary; ++k) {
      const double lo = mesh.domain().axis_lower(k);
      const double hi = mesh.domain().axis_upper(k);
      const double tol = 1e-12 * std::max(1.0, hi - lo);
      bool all_lo = true, all_hi = true;
      for (int i = 0; i < D; ++i) {
        const auto x = mesh.vertex(f.v[i]);
        all_lo = all_lo && std::abs(x[k] - lo) <= tol;
        all_hi = all_hi && std::abs(x[k] - hi) <= tol;
      }
      on_boundary = all_lo || all_hi;
    }
    if (!on_boundary) {
      report.violations.push_back(
          "single-element facet not on the domain boundary");
      break;
    }
  }
  return report;
}

void write_vtk_unstructured(
    const SimplexMesh& mesh, const std::string& path,
    const std::vector<std::pair<std::string, std::span<const double>>>&
        point_fields) {
  const int D = mesh.dim();
  if (D > 3)
    throw Error("VTK unstructured export supports D <= 3; use time slices");
  const int N = mesh.num_vertices();
  const int E = mesh.num_elements();
  std::ostringstream out;
  out << "# vtk DataFile Version 3.0\n";
  out << "cstopt space-time mesh\n";
  out << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << N << " double\n";
  for (int v = 0; v < N; ++v) {
    const auto x = mesh.vertex(v);
    for (int k = 0; k < 3; ++k)
      out << (k ? " " : "") << format_double(k < D ? x[k] : 0.0);
    out << "\n";
  }
  out << "CELLS " << E << " " << std::int64_t(E) * (D + 2) << "\n";
  for (int e = 0; e < E; ++e) {
    out << D + 1;
    for (auto v : mesh.element(e)) out << " " << v;
    out << "\n";
  }
  out << "CELL_TYPES " << E << "\n";
  const int cell_type = D == 3 ? 10 : (D == 2 ? 5 : 3);
  for (int e = 0; e < E; ++e) out << cell_type << "\n";
  out << "POINT_DATA " << N << "\n";
  out << "SCALARS node_tag int 1\nLOOKUP_TABLE default\n";
  for (int v = 0; v < N; ++v) out << int(mesh.node_tag(v)) << "\n";
  for (const auto& [name, values] : point_fields) {
    if (static_cast<int>(values.size()) != N)
      throw Error("point field '" + name + "' has wrong length");
    out << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (double x : values) out << format_double(x) << "\n";
  }
  write_file_atomic(path, out.str());
}

}  // namespace cst
