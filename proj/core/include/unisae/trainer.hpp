#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "unisae/numerics.hpp"
#include "unisae/objective.hpp"
#include "unisae/store.hpp"
#include "unisae/transport.hpp"

namespace unisae {

enum class LrSchedule { kConstant, kCosine };

struct TrainConfig {
  ModelConfig model;
  LossWeights weights;
  double epsilon = 0.1;
  int sinkhorn_iters = 10;
  double sinkhorn_tol = 1e-6;
  GuidanceConfig guidance;
  std::size_t batch_size = 256;
  std::size_t steps = 1000;
  double lr = 3e-4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  LrSchedule lr_schedule = LrSchedule::kConstant;

  void validate() const;
  double shared_ratio() const { return model.vision.shared_ratio(); }
  SinkhornOptions sinkhorn_options() const;
};

struct Checkpoint {
  TrainConfig config;
  ModelParams params;
  // One optimizer state per tensor, in ModelParams::for_each order.
  std::vector<AdamState> adam;
  std::uint64_t step = 0;
  // Mean batch loss per completed step.
  std::vector<LossBreakdown> history;
};

// Fresh checkpoint at step 0. Shared decoder blocks of both modalities start
// from the same seed stream so equal-width modalities begin with identical
// shared dictionaries.
Checkpoint init_checkpoint(const TrainConfig& cfg, const std::vector<PairedSample>& dataset);

// Dataset indices of the batch for a step: consecutive positions of a
// per-epoch seeded permutation. Stateless in (seed, step).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t step,
                                       std::size_t batch_size, std::size_t dataset_size);

using StepCallback = std::function<void(const Checkpoint&)>;

// Advances `ckpt` by `n_steps` optimizer steps. Results are bitwise
// independent of `threads`.
void train_steps(Checkpoint& ckpt, const std::vector<PairedSample>& dataset, std::size_t n_steps,
                 int threads = 1, const StepCallback& on_step = {});

// init_checkpoint followed by cfg.steps steps.
Checkpoint train(const TrainConfig& cfg, const std::vector<PairedSample>& dataset,
                 int threads = 1, const StepCallback& on_step = {});

inline constexpr std::uint16_t kCheckpointVersion = 1;

// "LCKP": magic, version, config, step, seed, both LSAE blocks, optimizer
// moments and loss history; all little-endian, doubles as f64.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace unisae
