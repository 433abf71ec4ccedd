#include "cst/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cst {

SparseMatrix::SparseMatrix(int rows, int cols,
                           std::vector<std::int64_t> row_offsets,
                           std::vector<std::int32_t> col_indices,
                           std::vector<double> values)
    : rows_(rows),
      cols_(cols),
      row_offsets_(std::move(row_offsets)),
      col_indices_(std::move(col_indices)),
      values_(std::move(values)) {
  if (static_cast<int>(row_offsets_.size()) != rows_ + 1)
    throw std::invalid_argument("SparseMatrix: bad row_offsets size");
  if (col_indices_.size() != values_.size())
    throw std::invalid_argument("SparseMatrix: cols/values size mismatch");
  for (int r = 0; r < rows_; ++r) {
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      if (col_indices_[k] < 0 || col_indices_[k] >= cols_)
        throw std::invalid_argument("SparseMatrix: column index out of range");
      if (k > row_offsets_[r] && col_indices_[k] <= col_indices_[k - 1])
        throw std::invalid_argument("SparseMatrix: columns not sorted/unique");
      if (std::isnan(values_[k]))
        throw std::invalid_argument("SparseMatrix: NaN entry");
    }
  }
}

void SparseMatrix::multiply(std::span<const double> x,
                            std::span<double> y) const {
  for (int r = 0; r < rows_; ++r) {
    double s = 0.0;
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k)
      s += values_[k] * x[col_indices_[k]];
    y[r] = s;
  }
}

std::vector<double> SparseMatrix::apply(std::span<const double> x) const {
  std::vector<double> y(rows_);
  multiply(x, y);
  return y;
}

SparseMatrix SparseMatrix::transposed() const {
  std::vector<std::int64_t> offsets(cols_ + 1, 0);
  for (auto c : col_indices_) ++offsets[c + 1];
  for (int c = 0; c < cols_; ++c) offsets[c + 1] += offsets[c];
  std::vector<std::int32_t> cols(values_.size());
  std::vector<double> vals(values_.size());
  std::vector<std::int64_t> cursor(offsets.begin(), offsets.end() - 1);
  for (int r = 0; r < rows_; ++r)
    for (auto k = row_offsets_[r]; k < row_offsets_[r + 1]; ++k) {
      const auto pos = cursor[col_indices_[k]]++;
      cols[pos] = r;
      vals[pos] = values_[k];
    }
  SparseMatrix t;
  t.rows_ = cols_;
  t.cols_ = rows_;
  t.row_offsets_ = std::move(offsets);
  t.col_indices_ = std::move(cols);
  t.values_ = std::move(vals);
  return t;
}

void SparseMatrix::scale(double s) {
  for (double& v : values_) v *= s;
}

double SparseMatrix::coeff(int row, int col) const {
  const auto begin = col_indices_.begin() + row_offsets_[row];
  const auto end = col_indices_.begin() + row_offsets_[row + 1];
  const auto it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) return 0.0;
  return values_[it - col_indices_.begin()];
}

std::vector<double> SparseMatrix::diagonal() const {
  std::vector<double> d(rows_, 0.0);
  for (int r = 0; r < rows_ && r < cols_; ++r) d[r] = coeff(r, r);
  return d;
}

}  // namespace cst
