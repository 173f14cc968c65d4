#include "unisae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "unisae/error.hpp"
#include "unisae/parallel.hpp"

namespace unisae {

namespace {

// Samples per gradient-accumulation chunk. Fixed so the reduction order is
// the same for every thread count.
constexpr std::size_t kChunk = 8;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::uint64_t epoch,
                                           std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(epoch + 1)));
  std::shuffle(perm.begin(), perm.end(), rng);
  return perm;
}

Matrix stacked_valid_tokens(const std::vector<PairedSample>& dataset, bool vision,
                            std::size_t limit) {
  std::size_t rows = 0;
  for (const auto& s : dataset) rows += (vision ? s.vision : s.text).num_valid();
  rows = std::min(rows, limit);
  const std::size_t d = (vision ? dataset.front().vision : dataset.front().text).dim();
  Matrix out(rows, d);
  std::size_t r = 0;
  for (const auto& s : dataset) {
    const ActivationSet& set = vision ? s.vision : s.text;
    for (std::size_t t = 0; t < set.num_tokens() && r < rows; ++t) {
      if (!set.valid_mask[t]) continue;
      auto src = set.tokens.row(t);
      std::copy(src.begin(), src.end(), out.row(r++).begin());
    }
    if (r == rows) break;
  }
  return out;
}

void add_into(ModelParams& dst, const ModelParams& src) {
  std::vector<std::span<const double>> parts;
  src.for_each([&](std::string_view, std::span<const double> s) { parts.push_back(s); });
  std::size_t k = 0;
  dst.for_each([&](std::string_view, std::span<double> s) {
    const auto part = parts[k++];
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += part[i];
  });
}

void zero(ModelParams& p) {
  p.for_each([](std::string_view, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
}

void check_dataset(const TrainConfig& cfg, const std::vector<PairedSample>& dataset) {
  if (dataset.empty()) throw InvalidArgument("training dataset is empty");
  for (const auto& s : dataset) {
    if (s.vision.dim() != cfg.model.vision.d || s.text.dim() != cfg.model.text.d)
      throw DimensionError("sample " + s.id + " width differs from config d");
  }
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  weights.validate();
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (sinkhorn_iters < 1) throw InvalidArgument("sinkhorn_iters must be positive");
  if (!(sinkhorn_tol > 0.0)) throw InvalidArgument("sinkhorn_tol must be positive");
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (steps < 1) throw InvalidArgument("steps must be at least 1");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be nonnegative");
  if (!(guidance.lambda_global >= 0.0) || !(guidance.mask_penalty >= 0.0))
    throw InvalidArgument("guidance strengths must be nonnegative");
}

SinkhornOptions TrainConfig::sinkhorn_options() const {
  SinkhornOptions o;
  o.epsilon = epsilon;
  o.max_iters = sinkhorn_iters;
  o.tol = sinkhorn_tol;
  return o;
}

Checkpoint init_checkpoint(const TrainConfig& cfg, const std::vector<PairedSample>& dataset) {
  cfg.validate();
  check_dataset(cfg, dataset);
  constexpr std::size_t kInitTokens = 16384;
  const std::uint64_t shared_seed = splitmix64(cfg.seed ^ 0x5348415245ULL);
  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.params.vision = init_params(cfg.model.vision, stacked_valid_tokens(dataset, true, kInitTokens),
                                   shared_seed, splitmix64(cfg.seed ^ 0x56495349ULL));
  ckpt.params.text = init_params(cfg.model.text, stacked_valid_tokens(dataset, false, kInitTokens),
                                 shared_seed, splitmix64(cfg.seed ^ 0x54455854ULL));
  ckpt.params.for_each([&](std::string_view, std::span<const double> s) {
    ckpt.adam.push_back(AdamState::zeros(s.size()));
  });
  return ckpt;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t step,
                                       std::size_t batch_size, std::size_t dataset_size) {
  std::vector<std::size_t> out(batch_size);
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> perm;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::uint64_t pos = step * batch_size + b;
    const std::uint64_t epoch = pos / dataset_size;
    if (epoch != cached_epoch) {
      perm = epoch_permutation(seed, epoch, dataset_size);
      cached_epoch = epoch;
    }
    out[b] = perm[pos % dataset_size];
  }
  return out;
}

void train_steps(Checkpoint& ckpt, const std::vector<PairedSample>& dataset, std::size_t n_steps,
                 int threads, const StepCallback& on_step) {
  const TrainConfig& cfg = ckpt.config;
  cfg.validate();
  check_dataset(cfg, dataset);

  std::vector<SampleView> views;
  views.reserve(dataset.size());
  for (const auto& s : dataset) views.push_back(SampleView::from(s));

  const SinkhornOptions sinkhorn_opts = cfg.sinkhorn_options();
  const std::size_t batch = cfg.batch_size;
  const std::size_t chunks = (batch + kChunk - 1) / kChunk;
  std::vector<ModelParams> chunk_grads(chunks, ModelParams::zeros(cfg.model));
  std::vector<LossBreakdown> losses(batch);
  ModelParams grads = ModelParams::zeros(cfg.model);

  for (std::size_t local = 0; local < n_steps; ++local) {
    const auto idx = batch_indices(cfg.seed, ckpt.step, batch, dataset.size());
    const double scale = 1.0 / static_cast<double>(batch);

    parallel_for(chunks, threads, [&](std::size_t c) {
      ModelParams& g = chunk_grads[c];
      zero(g);
      const std::size_t end = std::min(batch, (c + 1) * kChunk);
      for (std::size_t b = c * kChunk; b < end; ++b) {
        const SampleView& view = views[idx[b]];
        const SampleForward fwd = forward(view, ckpt.params, cfg.model);
        Matrix plan;
        if (cfg.weights.gamma_cross != 0.0)
          plan = sample_plan(fwd, cfg.guidance, sinkhorn_opts).plan;
        else
          plan = Matrix(view.vision.rows(), view.text.rows(),
                        1.0 / static_cast<double>(view.vision.rows() * view.text.rows()));
        losses[b] = total_loss(view, fwd, plan, ckpt.params, cfg.weights, &g, scale);
      }
    });

    LossBreakdown mean;
    for (const auto& l : losses) {
      mean.self_v += l.self_v * scale;
      mean.self_t += l.self_t * scale;
      mean.align += l.align * scale;
      mean.cross += l.cross * scale;
      mean.total += l.total * scale;
    }
    if (!std::isfinite(mean.total)) {
      std::ostringstream msg;
      msg << "non-finite training loss at step " << ckpt.step << " (self_v=" << mean.self_v
          << ", self_t=" << mean.self_t << ", align=" << mean.align << ", cross=" << mean.cross
          << ")";
      throw NumericalError(msg.str());
    }

    zero(grads);
    for (const auto& g : chunk_grads) add_into(grads, g);

    AdamHyper hyper;
    hyper.lr = cfg.lr;
    hyper.weight_decay = cfg.weight_decay;
    if (cfg.lr_schedule == LrSchedule::kCosine)
      hyper.lr = cfg.lr * 0.5 *
                 (1.0 + std::cos(std::numbers::pi * static_cast<double>(ckpt.step) /
                                 static_cast<double>(cfg.steps)));

    std::vector<std::span<const double>> grad_parts;
    grads.for_each([&](std::string_view, std::span<const double> s) { grad_parts.push_back(s); });
    std::size_t k = 0;
    ckpt.params.for_each([&](std::string_view, std::span<double> s) {
      adam_step(s, grad_parts[k], ckpt.adam[k], hyper);
      ++k;
    });
    ckpt.params.vision.renormalize_decoder();
    ckpt.params.text.renormalize_decoder();

    ckpt.step += 1;
    ckpt.history.push_back(mean);
    if (on_step) on_step(ckpt);
  }
}

Checkpoint train(const TrainConfig& cfg, const std::vector<PairedSample>& dataset, int threads,
                 const StepCallback& on_step) {
  Checkpoint ckpt = init_checkpoint(cfg, dataset);
  train_steps(ckpt, dataset, cfg.steps, threads, on_step);
  return ckpt;
}

}  // namespace unisae
