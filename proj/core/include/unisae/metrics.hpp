#pragma once

#include <optional>
#include <span>
#include <vector>

#include "unisae/numerics.hpp"
#include "unisae/objective.hpp"
#include "unisae/store.hpp"
#include "unisae/trainer.hpp"
#include "unisae/transport.hpp"

namespace unisae {

// 1 - SS_res / SS_tot, SS_tot about the mean token. Zero when SS_tot = 0.
double r_squared(const Matrix& h, const Matrix& h_hat);

struct SelfR2 {
  double shared = 0.0;
  double priv = 0.0;
  double joint = 0.0;
  // Only defined for the shared-only ablation (K_p = 0), where it equals
  // joint and shared.
  std::optional<double> global;
};

struct CrossR2 {
  double shared = 0.0;
  double joint = 0.0;
};

// Cross directions are named by source -> target: t_to_v reconstructs
// vision tokens through the vision decoder from plan-weighted text codes.
// delta_leak_v = t_to_v.joint - t_to_v.shared (same plan), likewise for t.
struct R2Report {
  SelfR2 vision;
  SelfR2 text;
  CrossR2 t_to_v;
  CrossR2 v_to_t;
  double delta_leak_v = 0.0;
  double delta_leak_t = 0.0;
};

// Every R2 pools the valid tokens of all samples. Plans are built from the
// shared codes with `guidance` and `options` and reused for the shared and
// joint cross decodes.
R2Report r2_report(const ModelConfig& cfg, const ModelParams& params,
                   const std::vector<PairedSample>& dataset, const GuidanceConfig& guidance,
                   const SinkhornOptions& options, int threads = 1);

struct Heatmap {
  GridShape shape;
  Matrix grid;  // height x width, sums to 1
};

// Patch i (row-major over the grid) scores sum_j plan_ij, then normalized.
Heatmap heatmap_from_plan(const Matrix& plan, std::size_t grid_h, std::size_t grid_w);

struct GroundingScores {
  double mass_at_obj = 0.0;
  double point_at_1 = 0.0;
  double iou_at_10 = 0.0;
};

// A patch is inside when its center lies in any box. IoU@10 compares the
// top ceil(0.1 P) patches by mass (ties to lower index) with the inside set.
GroundingScores grounding_scores(const Heatmap& heatmap, const std::vector<Box>& boxes);

// Max over dimensions of the fraction of rows with a positive entry.
double clustering_maxfreq(const Matrix& shared_codes);

// Heatmap of one sample under a trained model: shared codes of the valid
// tokens, guided plan, row sums scattered back to the full patch grid
// (padding patches get zero mass).
Heatmap sample_heatmap(const ModelConfig& cfg, const ModelParams& params,
                       const PairedSample& sample, GridShape grid,
                       const GuidanceConfig& guidance, const SinkhornOptions& options);

struct GroundingSummary {
  GroundingScores mean;
  std::size_t n_samples = 0;  // samples with at least one box
};

GroundingSummary grounding_report(const ModelConfig& cfg, const ModelParams& params,
                                  const std::vector<PairedSample>& dataset, GridShape grid,
                                  const GuidanceConfig& guidance, const SinkhornOptions& options,
                                  int threads = 1);

// Shared codes of all valid tokens of one modality, stacked in dataset order.
Matrix stacked_shared_codes(const ModelConfig& cfg, const ModelParams& params,
                            const std::vector<PairedSample>& dataset, Modality modality,
                            int threads = 1);

// Everything `eval` reports, with the training config's transport settings.
struct EvalReport {
  R2Report r2;
  GroundingSummary grounding;
  double maxfreq_t2i = 0.0;  // over text-token shared codes
  double maxfreq_i2t = 0.0;  // over image-patch shared codes
};

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<PairedSample>& dataset,
                    GridShape grid, int threads = 1);

// Throws DimensionError when the dataset does not fit the model.
void check_dataset_dims(const ModelConfig& cfg, const std::vector<PairedSample>& dataset);

}  // namespace unisae
