#pragma once

#include <vector>

#include "unisae/numerics.hpp"
#include "unisae/sae.hpp"
#include "unisae/store.hpp"
#include "unisae/transport.hpp"

namespace unisae {

// Vision and text SAEs share K_s (the comparable dictionary) and K_p.
struct ModelConfig {
  SaeConfig vision;
  SaeConfig text;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ModelParams {
  SaeParams vision;
  SaeParams text;

  static ModelParams zeros(const ModelConfig& cfg);
  void for_each(const std::function<void(std::string_view, std::span<double>)>& fn);
  void for_each(const std::function<void(std::string_view, std::span<const double>)>& fn) const;
  std::size_t num_values() const { return vision.num_values() + text.num_values(); }
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct LossWeights {
  double alpha = 1.0;
  double beta_align = 0.5;
  double gamma_cross = 0.3;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double self_v = 0.0;
  double self_t = 0.0;
  double align = 0.0;
  double cross = 0.0;
  double total = 0.0;
};

// Valid tokens of one paired sample.
struct SampleView {
  Matrix vision;  // T_a x d_v
  Matrix text;    // T_b x d_t

  static SampleView from(const PairedSample& sample);
};

// Encoder outputs cached for one sample.
struct SampleForward {
  std::vector<SparseCode> vision;
  std::vector<SparseCode> text;
  Matrix vision_shared;  // T_a x K_s
  Matrix text_shared;    // T_b x K_s
};

SampleForward forward(const SampleView& sample, const ModelParams& params, const ModelConfig& cfg);

// Transport plan over the sample's shared codes (valid tokens only). The
// plan is a constant for every loss that consumes it.
TransportPlan sample_plan(const SampleForward& fwd, const GuidanceConfig& guidance,
                          const SinkhornOptions& options);

// Each loss returns its value and, when `grads` is non-null, accumulates
// scale * d(loss)/d(params) into it.

// Mean squared reconstruction error per valid token, per modality.
struct SelfLoss {
  double vision = 0.0;
  double text = 0.0;
};
SelfLoss self_loss(const SampleView& sample, const SampleForward& fwd, const ModelParams& params,
                   ModelParams* grads = nullptr, double scale = 1.0);

// Pooled shared code of one modality decoded (shared block + bias) through
// the other modality's decoder, regressed onto that modality's pooled
// activations, summed over both directions. Pooled targets are constants.
double align_loss(const SampleView& sample, const SampleForward& fwd, const ModelParams& params,
                  ModelParams* grads = nullptr, double scale = 1.0);

// Vision tokens reconstructed from plan-weighted text shared codes through
// the vision decoder (and the converse), per-token mean squared error.
double cross_loss(const SampleView& sample, const SampleForward& fwd, const Matrix& plan,
                  const ModelParams& params, ModelParams* grads = nullptr, double scale = 1.0);

LossBreakdown total_loss(const SampleView& sample, const SampleForward& fwd, const Matrix& plan,
                         const ModelParams& params, const LossWeights& weights,
                         ModelParams* grads = nullptr, double scale = 1.0);

}  // namespace unisae
