#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace cst {

// Compressed sparse row matrix; column indices sorted and unique per row.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(int rows, int cols, std::vector<std::int64_t> row_offsets,
               std::vector<std::int32_t> col_indices,
               std::vector<double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::int64_t nnz() const { return static_cast<std::int64_t>(values_.size()); }

  const std::vector<std::int64_t>& row_offsets() const { return row_offsets_; }
  const std::vector<std::int32_t>& col_indices() const { return col_indices_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  // y = A x
  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> apply(std::span<const double> x) const;

  SparseMatrix transposed() const;
  void scale(double s);
  double coeff(int row, int col) const;  // 0 where no entry is stored
  std::vector<double> diagonal() const;

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<std::int64_t> row_offsets_;
  std::vector<std::int32_t> col_indices_;
  std::vector<double> values_;
};

}  // namespace cst
