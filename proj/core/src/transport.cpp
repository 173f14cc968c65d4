#include "unisae/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unisae/error.hpp"

namespace unisae {

namespace {

void check_simplex(std::span<const double> p, const char* name) {
  double s = 0.0;
  for (double x : p) {
    if (!(x > 0.0) || !std::isfinite(x))
      throw InvalidArgument(std::string("sinkhorn: marginal ") + name + " must be strictly positive");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw InvalidArgument(std::string("sinkhorn: marginal ") + name + " must sum to 1");
}

double log_sum_exp(const double* x, std::size_t n, std::size_t stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, x[i * stride]);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i * stride] - mx);
  return mx + std::log(s);
}

struct MarginalError {
  double rows = 0.0;
  double cols = 0.0;
};

MarginalError marginal_error(const Matrix& plan, std::span<const double> r,
                             std::span<const double> c) {
  MarginalError err;
  Vector col_sums(plan.cols(), 0.0);
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plan.cols(); ++j) {
      s += plan(i, j);
      col_sums[j] += plan(i, j);
    }
    err.rows += std::abs(s - r[i]);
  }
  for (std::size_t j = 0; j < plan.cols(); ++j) err.cols += std::abs(col_sums[j] - c[j]);
  return err;
}

// Plain-domain kernel usable when no row or column underflows entirely.
bool kernel_is_safe(const Matrix& kernel) {
  Vector col_max(kernel.cols(), 0.0);
  for (std::size_t i = 0; i < kernel.rows(); ++i) {
    double row_max = 0.0;
    for (std::size_t j = 0; j < kernel.cols(); ++j) {
      row_max = std::max(row_max, kernel(i, j));
      col_max[j] = std::max(col_max[j], kernel(i, j));
    }
    if (row_max < 1e-200) return false;
  }
  return std::all_of(col_max.begin(), col_max.end(), [](double x) { return x >= 1e-200; });
}

TransportPlan sinkhorn_plain(const Matrix& kernel, std::span<const double> r,
                             std::span<const double> c, const SinkhornOptions& options) {
  const std::size_t ta = kernel.rows(), tb = kernel.cols();
  TransportPlan out;
  out.epsilon = options.epsilon;
  Vector u(ta, 1.0), v(tb, 1.0), kv(ta), ktu(tb);
  if (options.record_history) out.log_v_history.push_back(Vector(tb, 0.0));

  auto build_plan = [&] {
    out.plan = Matrix(ta, tb);
    for (std::size_t i = 0; i < ta; ++i)
      for (std::size_t j = 0; j < tb; ++j) out.plan(i, j) = u[i] * kernel(i, j) * v[j];
  };

  matvec(kernel, v, kv);
  for (int it = 0; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < ta; ++i) u[i] = r[i] / kv[i];
    std::fill(ktu.begin(), ktu.end(), 0.0);
    for (std::size_t i = 0; i < ta; ++i) axpy(u[i], kernel.row(i), ktu);
    for (std::size_t j = 0; j < tb; ++j) v[j] = c[j] / ktu[j];
    out.iterations = it + 1;
    if (options.record_history) {
      Vector lv(tb);
      for (std::size_t j = 0; j < tb; ++j) lv[j] = std::log(v[j]);
      out.log_v_history.push_back(std::move(lv));
    }
    // Column sums are exact after the v update; the row error is
    // u_i (K v)_i - r_i, and K v carries over to the next u update.
    matvec(kernel, v, kv);
    double row_err = 0.0;
    for (std::size_t i = 0; i < ta; ++i) row_err += std::abs(u[i] * kv[i] - r[i]);
    if (!std::isfinite(row_err)) throw NumericalError("sinkhorn: non-finite scaling");
    if (row_err <= options.tol) {
      out.converged = true;
      break;
    }
  }
  build_plan();
  out.log_u.resize(ta);
  out.log_v.resize(tb);
  for (std::size_t i = 0; i < ta; ++i) out.log_u[i] = std::log(u[i]);
  for (std::size_t j = 0; j < tb; ++j) out.log_v[j] = std::log(v[j]);
  return out;
}

TransportPlan sinkhorn_log(const Matrix& cost, std::span<const double> r,
                           std::span<const double> c, const SinkhornOptions& options) {
  const std::size_t ta = cost.rows(), tb = cost.cols();
  TransportPlan out;
  out.epsilon = options.epsilon;
  out.log_domain = true;
  Matrix log_k(ta, tb);
  for (std::size_t i = 0; i < log_k.size(); ++i) log_k.data()[i] = -cost.data()[i] / options.epsilon;
  Vector log_r(ta), log_c(tb), lu(ta, 0.0), lv(tb, 0.0), buf(std::max(ta, tb));
  for (std::size_t i = 0; i < ta; ++i) log_r[i] = std::log(r[i]);
  for (std::size_t j = 0; j < tb; ++j) log_c[j] = std::log(c[j]);
  if (options.record_history) out.log_v_history.push_back(lv);

  for (int it = 0; it < options.max_iters; ++it) {
    for (std::size_t i = 0; i < ta; ++i) {
      for (std::size_t j = 0; j < tb; ++j) buf[j] = log_k(i, j) + lv[j];
      lu[i] = log_r[i] - log_sum_exp(buf.data(), tb, 1);
    }
    for (std::size_t j = 0; j < tb; ++j) {
      for (std::size_t i = 0; i < ta; ++i) buf[i] = log_k(i, j) + lu[i];
      lv[j] = log_c[j] - log_sum_exp(buf.data(), ta, 1);
    }
    out.iterations = it + 1;
    if (options.record_history) out.log_v_history.push_back(lv);
    double row_err = 0.0;
    for (std::size_t i = 0; i < ta; ++i) {
      for (std::size_t j = 0; j < tb; ++j) buf[j] = log_k(i, j) + lv[j];
      row_err += std::abs(std::exp(lu[i] + log_sum_exp(buf.data(), tb, 1)) - r[i]);
    }
    if (!std::isfinite(row_err)) throw NumericalError("sinkhorn: non-finite log scaling");
    if (row_err <= options.tol) {
      out.converged = true;
      break;
    }
  }
  out.plan = Matrix(ta, tb);
  for (std::size_t i = 0; i < ta; ++i)
    for (std::size_t j = 0; j < tb; ++j) out.plan(i, j) = std::exp(lu[i] + log_k(i, j) + lv[j]);
  out.log_u = std::move(lu);
  out.log_v = std::move(lv);
  return out;
}

}  // namespace

Vector TransportPlan::u() const {
  Vector out(log_u.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(log_u[i]);
  return out;
}

Vector TransportPlan::v() const {
  Vector out(log_v.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::exp(log_v[j]);
  return out;
}

Matrix cost_matrix(const Matrix& za, const Matrix& zb) {
  if (za.cols() != zb.cols()) throw DimensionError("cost_matrix: code widths differ");
  Matrix cost(za.rows(), zb.rows());
  Vector na(za.rows()), nb(zb.rows());
  for (std::size_t i = 0; i < za.rows(); ++i) na[i] = norm(za.row(i));
  for (std::size_t j = 0; j < zb.rows(); ++j) nb[j] = norm(zb.row(j));
  for (std::size_t i = 0; i < za.rows(); ++i) {
    for (std::size_t j = 0; j < zb.rows(); ++j) {
      double cosv = 0.0;
      if (na[i] >= 1e-12 && nb[j] >= 1e-12)
        cosv = std::clamp(dot(za.row(i), zb.row(j)) / (na[i] * nb[j]), -1.0, 1.0);
      cost(i, j) = 1.0 - cosv;
    }
  }
  return cost;
}

Matrix gibbs_kernel(const Matrix& cost, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  Matrix k(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < k.size(); ++i) k.data()[i] = std::exp(-cost.data()[i] / epsilon);
  return k;
}

TransportPlan sinkhorn(const Matrix& cost, std::span<const double> r, std::span<const double> c,
                       const SinkhornOptions& options) {
  if (r.size() != cost.rows() || c.size() != cost.cols())
    throw DimensionError("sinkhorn: marginals do not match cost shape");
  if (!(options.epsilon > 0.0)) throw InvalidArgument("sinkhorn: epsilon must be positive");
  if (options.max_iters < 1) throw InvalidArgument("sinkhorn: max_iters must be positive");
  if (!cost.all_finite()) throw NumericalError("sinkhorn: non-finite cost");
  check_simplex(r, "r");
  check_simplex(c, "c");

  TransportPlan plan;
  if (options.epsilon < options.log_domain_below) {
    plan = sinkhorn_log(cost, r, c, options);
  } else {
    const Matrix kernel = gibbs_kernel(cost, options.epsilon);
    plan = kernel_is_safe(kernel) ? sinkhorn_plain(kernel, r, c, options)
                                  : sinkhorn_log(cost, r, c, options);
  }
  const auto err = marginal_error(plan.plan, r, c);
  plan.marginal_err = std::max(err.rows, err.cols);
  return plan;
}

double entropic_objective(const Matrix& cost, const Matrix& plan, double epsilon) {
  if (cost.rows() != plan.rows() || cost.cols() != plan.cols())
    throw DimensionError("entropic_objective shapes");
  double s = 0.0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const double p = plan.data()[i];
    s += cost.data()[i] * p;
    if (p > 0.0) s += epsilon * p * std::log(p);
  }
  return s;
}

double hilbert_metric(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.empty()) throw DimensionError("hilbert_metric lengths");
  Vector lx(x.size()), ly(y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      throw InvalidArgument("hilbert_metric: entries must be strictly positive");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  return hilbert_metric_log(lx, ly);
}

double hilbert_metric_log(std::span<const double> log_x, std::span<const double> log_y) {
  if (log_x.size() != log_y.size() || log_x.empty())
    throw DimensionError("hilbert_metric lengths");
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_x.size(); ++i) {
    const double d = log_x[i] - log_y[i];
    hi = std::max(hi, d);
    lo = std::min(lo, d);
  }
  return hi - lo;
}

namespace {

double diameter_of_log(const Matrix& log_k) {
  double best = 0.0;
  for (std::size_t i = 0; i < log_k.rows(); ++i) {
    for (std::size_t j = i + 1; j < log_k.rows(); ++j) {
      double hi = -std::numeric_limits<double>::infinity();
      double lo = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < log_k.cols(); ++k) {
        const double diff = log_k(i, k) - log_k(j, k);
        hi = std::max(hi, diff);
        lo = std::min(lo, diff);
      }
      best = std::max(best, hi - lo);
    }
  }
  return best;
}

}  // namespace

double projective_diameter(const Matrix& kernel) {
  Matrix log_k(kernel.rows(), kernel.cols());
  for (std::size_t i = 0; i < kernel.size(); ++i) {
    const double x = kernel.data()[i];
    if (!(x > 0.0) || !std::isfinite(x))
      throw InvalidArgument("birkhoff: kernel entries must be strictly positive");
    log_k.data()[i] = std::log(x);
  }
  return diameter_of_log(log_k);
}

double projective_diameter_from_cost(const Matrix& cost, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  Matrix log_k(cost.rows(), cost.cols());
  for (std::size_t i = 0; i < cost.size(); ++i) log_k.data()[i] = -cost.data()[i] / epsilon;
  return diameter_of_log(log_k);
}

double birkhoff_coefficient(const Matrix& kernel) {
  return std::tanh(projective_diameter(kernel) / 4.0);
}

double birkhoff_coefficient_from_cost(const Matrix& cost, double epsilon) {
  return std::tanh(projective_diameter_from_cost(cost, epsilon) / 4.0);
}

std::vector<double> contraction_ratios(const std::vector<Vector>& log_v_history,
                                       std::span<const double> log_v_star, double floor) {
  std::vector<double> ratios;
  for (std::size_t t = 0; t + 1 < log_v_history.size(); ++t) {
    const double now = hilbert_metric_log(log_v_history[t], log_v_star);
    const double next = hilbert_metric_log(log_v_history[t + 1], log_v_star);
    if (now <= floor || next <= floor) continue;
    ratios.push_back(next / now);
  }
  return ratios;
}

const char* to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::kNone: return "none";
    case GuidanceMode::kMarginalReweight: return "marginal_reweight";
    case GuidanceMode::kCostModulate: return "cost_modulate";
    case GuidanceMode::kBoth: return "both";
  }
  return "none";
}

GuidanceMode parse_guidance_mode(const std::string& text) {
  if (text == "none") return GuidanceMode::kNone;
  if (text == "marginal_reweight") return GuidanceMode::kMarginalReweight;
  if (text == "cost_modulate") return GuidanceMode::kCostModulate;
  if (text == "both") return GuidanceMode::kBoth;
  throw InvalidArgument("unknown guidance_mode: " + text);
}

GroundingWeights grounding_weights(const Matrix& za_shared, const Matrix& zb_shared,
                                   std::span<const std::uint8_t> text_valid_mask) {
  if (za_shared.cols() != zb_shared.cols()) throw DimensionError("grounding_weights: code widths");
  if (text_valid_mask.size() != zb_shared.rows())
    throw DimensionError("grounding_weights: mask length");
  if (za_shared.rows() == 0) throw InvalidArgument("grounding_weights: no vision tokens");
  if (std::none_of(text_valid_mask.begin(), text_valid_mask.end(), [](auto m) { return m != 0; }))
    throw InvalidArgument("grounding_weights: all text tokens are padding");
  GroundingWeights out;
  out.context = column_mean(za_shared);
  out.weights.assign(zb_shared.rows(), 0.0);
  for (std::size_t j = 0; j < zb_shared.rows(); ++j)
    if (text_valid_mask[j]) out.weights[j] = std::max(0.0, cosine(out.context, zb_shared.row(j)));
  return out;
}

Marginals guided_marginals(std::span<const double> w, std::size_t ta) {
  if (ta == 0 || w.empty()) throw InvalidArgument("guided_marginals: empty sides");
  Marginals m;
  m.r.assign(ta, 1.0 / static_cast<double>(ta));
  m.c.resize(w.size());
  double total = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    m.c[j] = std::max(w[j], kMarginalFloor);
    total += m.c[j];
  }
  for (double& x : m.c) x /= total;
  return m;
}

Matrix apply_guidance(const Matrix& cost, const GuidanceConfig& guidance,
                      std::span<const double> w) {
  Matrix out = cost;
  if (guidance.mode == GuidanceMode::kNone) return out;
  if (guidance.mask) {
    const Matrix& mask = *guidance.mask;
    if (mask.rows() != cost.rows() || mask.cols() != cost.cols())
      throw DimensionError("apply_guidance: mask shape");
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double m = mask.data()[i];
      if (!(m >= 0.0 && m <= 1.0)) throw InvalidArgument("apply_guidance: mask entries in [0,1]");
      out.data()[i] += guidance.mask_penalty * (1.0 - m);
    }
  }
  if (guidance.mode == GuidanceMode::kCostModulate || guidance.mode == GuidanceMode::kBoth) {
    if (w.size() != cost.cols()) throw DimensionError("apply_guidance: weight length");
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j)
        out(i, j) += guidance.lambda_global * (1.0 - w[j]);
  }
  return out;
}

TransportPlan gcmt_plan(const Matrix& za_shared, const Matrix& zb_shared,
                        std::span<const std::uint8_t> text_valid_mask,
                        const GuidanceConfig& guidance, const SinkhornOptions& options) {
  const Matrix cost = cost_matrix(za_shared, zb_shared);
  const GroundingWeights gw = grounding_weights(za_shared, zb_shared, text_valid_mask);
  const Matrix guided = apply_guidance(cost, guidance, gw.weights);
  Marginals marginals;
  if (guidance.mode == GuidanceMode::kMarginalReweight || guidance.mode == GuidanceMode::kBoth) {
    marginals = guided_marginals(gw.weights, za_shared.rows());
  } else {
    Vector indicator(text_valid_mask.size());
    for (std::size_t j = 0; j < indicator.size(); ++j) indicator[j] = text_valid_mask[j] ? 1.0 : 0.0;
    marginals = guided_marginals(indicator, za_shared.rows());
  }
  return sinkhorn(guided, marginals.r, marginals.c, options);
}

Matrix barycentric_weights(const Matrix& plan, BarycentricDirection direction) {
  const bool a_to_b = direction == BarycentricDirection::kAToB;
  const std::size_t out_rows = a_to_b ? plan.rows() : plan.cols();
  const std::size_t src_rows = a_to_b ? plan.cols() : plan.rows();
  Matrix weights(out_rows, src_rows);
  for (std::size_t o = 0; o < out_rows; ++o) {
    double total = 0.0;
    for (std::size_t s = 0; s < src_rows; ++s) {
      const double p = a_to_b ? plan(o, s) : plan(s, o);
      weights(o, s) = p;
      total += p;
    }
    if (total > 0.0) {
      for (std::size_t s = 0; s < src_rows; ++s) weights(o, s) /= total;
    } else {
      for (std::size_t s = 0; s < src_rows; ++s) weights(o, s) = 1.0 / static_cast<double>(src_rows);
    }
  }
  return weights;
}

Matrix barycentric_targets(const Matrix& plan, const Matrix& decoded_source,
                           BarycentricDirection direction) {
  const std::size_t src_rows =
      direction == BarycentricDirection::kAToB ? plan.cols() : plan.rows();
  if (decoded_source.rows() != src_rows)
    throw DimensionError("barycentric_targets: source rows do not match plan");
  const Matrix weights = barycentric_weights(plan, direction);
  Matrix out(weights.rows(), decoded_source.cols());
  for (std::size_t o = 0; o < weights.rows(); ++o)
    for (std::size_t s = 0; s < weights.cols(); ++s)
      if (weights(o, s) != 0.0) axpy(weights(o, s), decoded_source.row(s), out.row(o));
  return out;
}

}  // namespace unisae
