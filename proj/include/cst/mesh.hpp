// Simplicial meshes of the space-time cylinder Q = Omega x (0,T).
//
// Spatial dimension d in {1,2,3}; mesh dimension D = d+1 with time as the
// last coordinate axis. Tensor grids of D-boxes are split into D! simplices
// per cell by the Kuhn (permutation) triangulation, which is conforming
// across cells and works uniformly up to pentatopes (D = 4).

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cst {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr int kMaxDim = 4;  // largest mesh dimension (pentatopes)

// Node classification bits; a node may combine lateral with initial/terminal.
inline constexpr std::uint8_t kTagInterior = 0;
inline constexpr std::uint8_t kTagLateral = 1;   // on dOmega x [0,T]
inline constexpr std::uint8_t kTagInitial = 2;   // t = 0
inline constexpr std::uint8_t kTagTerminal = 4;  // t = T

struct DomainSpec {
  int spatial_dim = 1;                  // d in {1,2,3}
  std::array<double, 3> lower{0, 0, 0};
  std::array<double, 3> upper{1, 1, 1};
  double final_time = 1.0;              // T > 0; time interval (0,T)

  int mesh_dim() const { return spatial_dim + 1; }
  // Bounds of coordinate axis k (k = d is the time axis).
  double axis_lower(int k) const { return k < spatial_dim ? lower[k] : 0.0; }
  double axis_upper(int k) const {
    return k < spatial_dim ? upper[k] : final_time;
  }
  double measure() const;
  void validate() const;  // throws Error on violated invariants
};

struct MeshValidation {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Immutable after construction; all queries safe for concurrent readers.
class SimplexMesh {
 public:
  int dim() const { return D_; }
  int num_vertices() const { return static_cast<int>(node_tags_.size()); }
  int num_elements() const {
    return static_cast<int>(elements_.size() / (D_ + 1));
  }
  std::span<const double> vertex(int v) const {
    return {vertices_.data() + std::size_t(v) * D_, std::size_t(D_)};
  }
  std::span<const std::int32_t> element(int e) const {
    return {elements_.data() + std::size_t(e) * (D_ + 1), std::size_t(D_ + 1)};
  }
  std::uint8_t node_tag(int v) const { return node_tags_[v]; }
  const std::vector<std::uint8_t>& node_tags() const { return node_tags_; }
  const std::vector<int>& divisions() const { return divisions_; }
  const DomainSpec& domain() const { return domain_; }
  double mesh_size() const { return h_; }

  double volume(int e) const { return volumes_[e]; }
  double total_volume() const;
  // Constant gradient of barycentric coordinate i on element e (D-vector).
  std::span<const double> grad_lambda(int e, int i) const {
    return {grad_lambda_.data() + (std::size_t(e) * (D_ + 1) + i) * D_,
            std::size_t(D_)};
  }

 private:
  friend SimplexMesh make_simplex_mesh(const DomainSpec&, std::vector<int>,
                                       std::vector<double>,
                                       std::vector<std::int32_t>);
  friend std::optional<struct PointLocation> locate_point(
      const SimplexMesh&, std::span<const double>);

  DomainSpec domain_;
  std::vector<int> divisions_;        // per-axis cell counts, size D
  int D_ = 0;
  std::vector<double> vertices_;      // N x D
  std::vector<std::int32_t> elements_;  // E x (D+1), positively oriented
  std::vector<std::uint8_t> node_tags_;
  double h_ = 0.0;                    // max element diameter
  std::vector<double> volumes_;       // E
  std::vector<double> grad_lambda_;   // E x (D+1) x D
  std::vector<std::int32_t> cell_elem_offsets_;  // CSR cell -> element ids
  std::vector<std::int32_t> cell_elems_;
};

struct ElementGeometry {
  double volume = 0.0;
  // grad_lambda[i] is the D-vector gradient of barycentric coordinate i.
  std::array<std::span<const double>, kMaxDim + 1> grad_lambda;
  int num_vertices = 0;
};

struct PointLocation {
  int element = -1;
  std::array<double, kMaxDim + 1> barycentric{};  // first D+1 entries used
};

// Kuhn-triangulated tensor grid of Q; divisions has one entry per axis
// (spatial axes first, time last) or a single entry applied to every axis.
SimplexMesh build_tensor_simplex_mesh(const DomainSpec& domain,
                                      std::vector<int> divisions);

// Low-level constructor from raw arrays (orientation is normalized, node
// tags are classified from coordinates, geometry caches are built). The
// vertex lattice must cover the same tensor grid so that point location
// by cell lookup stays valid; element order is arbitrary.
SimplexMesh make_simplex_mesh(const DomainSpec& domain,
                              std::vector<int> divisions,
                              std::vector<double> vertices,
                              std::vector<std::int32_t> elements);

ElementGeometry element_geometry(const SimplexMesh& mesh, int elem);

std::optional<PointLocation> locate_point(const SimplexMesh& mesh,
                                          std::span<const double> point);

MeshValidation validate_mesh(const SimplexMesh& mesh);

// Legacy ASCII VTK unstructured grid (cell types 5/10); D <= 3 only.
void write_vtk_unstructured(
    const SimplexMesh& mesh, const std::string& path,
    const std::vector<std::pair<std::string, std::span<const double>>>&
        point_fields = {});

}  // namespace cst
