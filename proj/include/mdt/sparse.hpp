#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mdt {

using Vector = std::vector<double>;

/// Compressed sparse row matrix. The column pattern of every row is sorted.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<std::size_t> row_ptr,
               std::vector<int> col_idx, std::vector<double> values);

  static SparseMatrix identity(std::size_t n);

  std::size_t n_rows() const { return n_rows_; }
  std::size_t n_cols() const { return n_cols_; }
  std::size_t nnz() const { return values_.size(); }

  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<int>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  /// Position of (i,j) in values(), or -1 when not in the pattern.
  std::ptrdiff_t find(std::size_t i, std::size_t j) const;
  double at(std::size_t i, std::size_t j) const;

  void multiply(std::span<const double> x, std::span<double> y) const;
  Vector operator*(std::span<const double> x) const;
  Vector diagonal() const;
  SparseMatrix transpose() const;

  /// Drops stored zeros.
  void finalize();
  /// True when the pattern and the values are symmetric to `tol` (relative to
  /// the largest absolute entry).
  bool is_symmetric(double tol = 0.0) const;
  bool has_symmetric_pattern() const;

  /// Rows [r0,r1) x columns [c0,c1) as a new matrix.
  SparseMatrix block(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) const;

 private:
  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<int> col_idx_;
  std::vector<double> values_;
};

/// Accumulates (i, j, value) triplets; duplicates are summed in insertion
/// order, so the result does not depend on how callers batch their entries.
class TripletBuilder {
 public:
  TripletBuilder(std::size_t n_rows, std::size_t n_cols) : n_rows_(n_rows), n_cols_(n_cols) {}
  void add(std::size_t i, std::size_t j, double v);
  SparseMatrix build(bool drop_zeros = false) const;

 private:
  struct Entry {
    std::size_t i, j;
    double v;
  };
  std::size_t n_rows_, n_cols_;
  std::vector<Entry> entries_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace mdt
