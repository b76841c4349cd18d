#include "mdt/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mdt {

SparseMatrix::SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<std::size_t> row_ptr,
                           std::vector<int> col_idx, std::vector<double> values)
    : n_rows_(n_rows),
      n_cols_(n_cols),
      row_ptr_(std::move(row_ptr)),
      col_idx_(std::move(col_idx)),
      values_(std::move(values)) {
  if (row_ptr_.size() != n_rows_ + 1 || row_ptr_.back() != col_idx_.size() ||
      col_idx_.size() != values_.size())
    throw std::invalid_argument("inconsistent CSR arrays");
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
  std::vector<std::size_t> rp(n + 1);
  std::iota(rp.begin(), rp.end(), std::size_t{0});
  std::vector<int> ci(n);
  std::iota(ci.begin(), ci.end(), 0);
  return SparseMatrix(n, n, std::move(rp), std::move(ci), std::vector<double>(n, 1.0));
}

std::ptrdiff_t SparseMatrix::find(std::size_t i, std::size_t j) const {
  const auto begin = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
  const auto end = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
  const auto it = std::lower_bound(begin, end, static_cast<int>(j));
  if (it == end || *it != static_cast<int>(j)) return -1;
  return it - col_idx_.begin();
}

double SparseMatrix::at(std::size_t i, std::size_t j) const {
  const auto k = find(i, j);
  return k < 0 ? 0.0 : values_[k];
}

void SparseMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  if (x.size() != n_cols_ || y.size() != n_rows_)
    throw std::invalid_argument("matrix-vector dimension mismatch");
  for (std::size_t i = 0; i < n_rows_; ++i) {
    double s = 0.0;
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += values_[k] * x[col_idx_[k]];
    y[i] = s;
  }
}

Vector SparseMatrix::operator*(std::span<const double> x) const {
  Vector y(n_rows_);
  multiply(x, y);
  return y;
}

Vector SparseMatrix::diagonal() const {
  Vector d(std::min(n_rows_, n_cols_), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
  return d;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<std::size_t> rp(n_cols_ + 1, 0);
  for (int c : col_idx_) ++rp[c + 1];
  for (std::size_t j = 0; j < n_cols_; ++j) rp[j + 1] += rp[j];
  std::vector<int> ci(nnz());
  std::vector<double> v(nnz());
  std::vector<std::size_t> next(rp.begin(), rp.end() - 1);
  for (std::size_t i = 0; i < n_rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const std::size_t pos = next[col_idx_[k]]++;
      ci[pos] = static_cast<int>(i);
      v[pos] = values_[k];
    }
  return SparseMatrix(n_cols_, n_rows_, std::move(rp), std::move(ci), std::move(v));
}

void SparseMatrix::finalize() {
  std::size_t out = 0;
  std::vector<std::size_t> rp(n_rows_ + 1, 0);
  for (std::size_t i = 0; i < n_rows_; ++i) {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      if (values_[k] == 0.0) continue;
      col_idx_[out] = col_idx_[k];
      values_[out] = values_[k];
      ++out;
    }
    rp[i + 1] = out;
  }
  col_idx_.resize(out);
  values_.resize(out);
  row_ptr_ = std::move(rp);
}

bool SparseMatrix::has_symmetric_pattern() const {
  if (n_rows_ != n_cols_) return false;
  for (std::size_t i = 0; i < n_rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
      if (find(col_idx_[k], i) < 0) return false;
  return true;
}

bool SparseMatrix::is_symmetric(double tol) const {
  if (n_rows_ != n_cols_) return false;
  double scale = 0.0;
  for (double v : values_) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < n_rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const double other = at(col_idx_[k], i);
      if (std::abs(values_[k] - other) > tol * scale) return false;
    }
  return true;
}

SparseMatrix SparseMatrix::block(std::size_t r0, std::size_t r1, std::size_t c0,
                                 std::size_t c1) const {
  if (r1 < r0 || c1 < c0 || r1 > n_rows_ || c1 > n_cols_)
    throw std::invalid_argument("block out of range");
  std::vector<std::size_t> rp(r1 - r0 + 1, 0);
  std::vector<int> ci;
  std::vector<double> v;
  for (std::size_t i = r0; i < r1; ++i) {
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const auto c = static_cast<std::size_t>(col_idx_[k]);
      if (c >= c0 && c < c1) {
        ci.push_back(static_cast<int>(c - c0));
        v.push_back(values_[k]);
      }
    }
    rp[i - r0 + 1] = ci.size();
  }
  return SparseMatrix(r1 - r0, c1 - c0, std::move(rp), std::move(ci), std::move(v));
}

void TripletBuilder::add(std::size_t i, std::size_t j, double v) {
  if (i >= n_rows_ || j >= n_cols_) throw std::out_of_range("triplet index out of range");
  entries_.push_back({i, j, v});
}

SparseMatrix TripletBuilder::build(bool drop_zeros) const {
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = entries_[a];
    const auto& eb = entries_[b];
    return ea.i != eb.i ? ea.i < eb.i : ea.j < eb.j;
  });
  std::vector<std::size_t> rp(n_rows_ + 1, 0);
  std::vector<int> ci;
  std::vector<double> v;
  for (std::size_t k = 0; k < order.size();) {
    const auto& e = entries_[order[k]];
    double s = 0.0;
    std::size_t m = k;
    while (m < order.size() && entries_[order[m]].i == e.i && entries_[order[m]].j == e.j)
      s += entries_[order[m++]].v;
    ci.push_back(static_cast<int>(e.j));
    v.push_back(s);
    ++rp[e.i + 1];
    k = m;
  }
  for (std::size_t i = 0; i < n_rows_; ++i) rp[i + 1] += rp[i];
  SparseMatrix m(n_rows_, n_cols_, std::move(rp), std::move(ci), std::move(v));
  if (drop_zeros) m.finalize();
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace mdt
