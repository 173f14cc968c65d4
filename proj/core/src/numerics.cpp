#include "unisae/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unisae/error.hpp"

namespace unisae {

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Matrix Matrix::transposed() const {
  Matrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot operands differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("distance operands differ in length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy operands differ in length");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void matvec(const Matrix& a, std::span<const double> x, std::span<double> out) {
  if (x.size() != a.cols() || out.size() != a.rows())
    throw DimensionError("matvec shapes");
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double* row = a.data() + r * a.cols();
    double s = 0.0;
    for (std::size_t c = 0; c < a.cols(); ++c) s += row[c] * x[c];
    out[r] = s;
  }
}

Vector column_mean(const Matrix& m) {
  Vector mean(m.cols(), 0.0);
  if (m.rows() == 0) return mean;
  for (std::size_t r = 0; r < m.rows(); ++r) axpy(1.0, m.row(r), mean);
  for (double& x : mean) x /= static_cast<double>(m.rows());
  return mean;
}

std::vector<std::size_t> top_k_support(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> positive;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] > 0.0) positive.push_back(i);
  if (positive.size() > k) {
    std::partial_sort(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(k),
                      positive.end(), [&](std::size_t a, std::size_t b) {
                        return v[a] > v[b] || (v[a] == v[b] && a < b);
                      });
    positive.resize(k);
    std::sort(positive.begin(), positive.end());
  }
  return positive;
}

Vector top_k(std::span<const double> v, std::size_t k) {
  Vector out(v.size(), 0.0);
  for (std::size_t i : top_k_support(v, k)) out[i] = v[i];
  return out;
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw DimensionError("cosine operands differ in length");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  const double nu = std::sqrt(uu), nv = std::sqrt(vv);
  if (nu < 1e-12 || nv < 1e-12) return 0.0;
  return std::clamp(uv / (nu * nv), -1.0, 1.0);
}

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state,
               const AdamHyper& hyper) {
  if (param.size() != grad.size() || state.m.size() != param.size() ||
      state.v.size() != param.size())
    throw DimensionError("adam_step shapes");
  for (double g : grad)
    if (!std::isfinite(g)) throw NumericalError("non-finite gradient in optimizer step");

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    state.m[i] = hyper.beta1 * state.m[i] + (1.0 - hyper.beta1) * grad[i];
    state.v[i] = hyper.beta2 * state.v[i] + (1.0 - hyper.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    param[i] -= hyper.lr * (m_hat / (std::sqrt(v_hat) + hyper.eps) + hyper.weight_decay * param[i]);
  }
}

}  // namespace unisae
