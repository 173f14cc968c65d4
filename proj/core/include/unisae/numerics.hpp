#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace unisae {

using Vector = std::vector<double>;

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double value);
  Matrix transposed() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);
double squared_distance(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// out = A * x (A is rows x cols, x has cols entries).
void matvec(const Matrix& a, std::span<const double> x, std::span<double> out);

// Mean of the rows of `m`.
Vector column_mean(const Matrix& m);

// Rectify then keep the k largest strictly positive entries. Ties go to the
// lower index. Fewer than k positives keeps all positives.
Vector top_k(std::span<const double> v, std::size_t k);

// Indices kept by top_k, in ascending index order.
std::vector<std::size_t> top_k_support(std::span<const double> v, std::size_t k);

// Cosine similarity; 0 when either norm is below 1e-12.
double cosine(std::span<const double> u, std::span<const double> v);

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct AdamState {
  Vector m;
  Vector v;
  std::uint64_t t = 0;

  static AdamState zeros(std::size_t n) { return {Vector(n, 0.0), Vector(n, 0.0), 0}; }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One AdamW step with bias correction and decoupled weight decay, in place.
// Throws NumericalError on a non-finite gradient.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamHyper& hyper);

}  // namespace unisae
