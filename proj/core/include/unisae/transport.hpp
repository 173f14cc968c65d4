#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unisae/numerics.hpp"

namespace unisae {

// Coupling Pi = diag(u) K diag(v) with K = exp(-C / epsilon).
// Scalings are kept in log form so log-domain solves never overflow.
struct TransportPlan {
  Matrix plan;
  Vector log_u;
  Vector log_v;
  double epsilon = 0.0;
  int iterations = 0;
  // max of the L1 deviations of row sums from r and column sums from c.
  double marginal_err = 0.0;
  bool converged = false;
  bool log_domain = false;
  // log v after each full iteration (index 0 is the initial v = 1), only
  // when SinkhornOptions::record_history is set.
  std::vector<Vector> log_v_history;

  Vector u() const;
  Vector v() const;
};

struct SinkhornOptions {
  double epsilon = 0.1;
  int max_iters = 500;
  double tol = 1e-6;
  // Below this epsilon the iteration runs on log-scalings.
  double log_domain_below = 0.05;
  bool record_history = false;
};

// C_ij = 1 - cosine(row_i(za), row_j(zb)); zero rows cost 1.
Matrix cost_matrix(const Matrix& za, const Matrix& zb);

Matrix gibbs_kernel(const Matrix& cost, double epsilon);

// Alternating u = r / (K v), v = c / (K^T u) from v = 1 until the marginal
// error is within tol or max_iters full iterations ran.
TransportPlan sinkhorn(const Matrix& cost, std::span<const double> r, std::span<const double> c,
                       const SinkhornOptions& options);

// <C, Pi> - epsilon * H(Pi), H(Pi) = -sum Pi log Pi with 0 log 0 = 0.
double entropic_objective(const Matrix& cost, const Matrix& plan, double epsilon);

// Hilbert projective metric log(max x/y) - log(min x/y) for positive vectors.
double hilbert_metric(std::span<const double> x, std::span<const double> y);
// Same metric from log-vectors.
double hilbert_metric_log(std::span<const double> log_x, std::span<const double> log_y);

// Projective diameter max_{i,j,k,l} log(K_ik K_jl / (K_il K_jk)).
double projective_diameter(const Matrix& kernel);
// Same from log K = -C / epsilon; safe when K underflows.
double projective_diameter_from_cost(const Matrix& cost, double epsilon);
// tanh(diameter / 4). Saturates to 1.0 in double precision once the
// diameter exceeds ~150.
double birkhoff_coefficient(const Matrix& kernel);
double birkhoff_coefficient_from_cost(const Matrix& cost, double epsilon);

// d_H(v_{t+1}, v*) / d_H(v_t, v*) along a recorded history, skipping steps
// whose distance to v* is below `floor` (numerical noise).
std::vector<double> contraction_ratios(const std::vector<Vector>& log_v_history,
                                       std::span<const double> log_v_star, double floor = 1e-9);

enum class GuidanceMode { kNone, kMarginalReweight, kCostModulate, kBoth };

const char* to_string(GuidanceMode mode);
GuidanceMode parse_guidance_mode(const std::string& text);

struct GuidanceConfig {
  // Admissibility mask in [0,1], T_a x T_b; absent means all ones.
  std::optional<Matrix> mask;
  double mask_penalty = 10.0;
  double lambda_global = 0.5;
  GuidanceMode mode = GuidanceMode::kBoth;
};

struct GroundingWeights {
  Vector context;  // g: mean of the vision shared codes
  Vector weights;  // w_j = max(0, cos(g, z_j)), 0 for invalid tokens
};

GroundingWeights grounding_weights(const Matrix& za_shared, const Matrix& zb_shared,
                                   std::span<const std::uint8_t> text_valid_mask);

struct Marginals {
  Vector r;
  Vector c;
};

inline constexpr double kMarginalFloor = 1e-6;

// r uniform over T_a; c = floor(w, 1e-6) normalized.
Marginals guided_marginals(std::span<const double> w, std::size_t ta);

// Adds mask_penalty * (1 - M) when a mask is present and
// lambda_global * (1 - w_j) per column in the cost-modulating modes.
// Mode kNone returns the cost unchanged.
Matrix apply_guidance(const Matrix& cost, const GuidanceConfig& guidance,
                      std::span<const double> w);

// cost_matrix -> grounding_weights -> apply_guidance -> marginals -> sinkhorn.
// Marginal reweighting modes use guided_marginals; the others use r uniform
// and c uniform over valid text tokens (floored for padding).
TransportPlan gcmt_plan(const Matrix& za_shared, const Matrix& zb_shared,
                        std::span<const std::uint8_t> text_valid_mask,
                        const GuidanceConfig& guidance, const SinkhornOptions& options);

// kAToB: output row i (T_a rows) = sum_j Pi_ij / sum_j' Pi_ij' * source_j,
//        source has T_b rows.
// kBToA: output row j (T_b rows) = sum_i Pi_ij / sum_i' Pi_i'j * source_i,
//        source has T_a rows.
// Rows or columns with no plan mass fall back to uniform weights.
enum class BarycentricDirection { kAToB, kBToA };

Matrix barycentric_weights(const Matrix& plan, BarycentricDirection direction);
Matrix barycentric_targets(const Matrix& plan, const Matrix& decoded_source,
                           BarycentricDirection direction);

}  // namespace unisae
