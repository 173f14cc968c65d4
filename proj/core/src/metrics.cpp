#include "unisae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unisae/error.hpp"
#include "unisae/parallel.hpp"

namespace unisae {

double r_squared(const Matrix& h, const Matrix& h_hat) {
  if (h.rows() != h_hat.rows() || h.cols() != h_hat.cols())
    throw DimensionError("r_squared: " + std::to_string(h.rows()) + "x" + std::to_string(h.cols()) +
                         " vs " + std::to_string(h_hat.rows()) + "x" + std::to_string(h_hat.cols()));
  if (h.rows() < 2) throw InvalidArgument("r_squared needs at least 2 tokens");
  const Vector mean = column_mean(h);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t t = 0; t < h.rows(); ++t) {
    ss_res += squared_distance(h.row(t), h_hat.row(t));
    ss_tot += squared_distance(h.row(t), mean);
  }
  if (ss_tot == 0.0) return 0.0;
  return 1.0 - ss_res / ss_tot;
}

void check_dataset_dims(const ModelConfig& cfg, const std::vector<PairedSample>& dataset) {
  if (dataset.empty()) throw InvalidArgument("empty dataset");
  for (const auto& s : dataset) {
    if (s.vision.dim() != cfg.vision.d)
      throw DimensionError("sample " + s.id + ": vision activations have d=" +
                           std::to_string(s.vision.dim()) + ", model expects " +
                           std::to_string(cfg.vision.d));
    if (s.text.dim() != cfg.text.d)
      throw DimensionError("sample " + s.id + ": text activations have d=" +
                           std::to_string(s.text.dim()) + ", model expects " +
                           std::to_string(cfg.text.d));
  }
}

namespace {

Matrix stack(const std::vector<Matrix>& parts) {
  std::size_t rows = 0;
  for (const auto& p : parts) rows += p.rows();
  const std::size_t cols = parts.empty() ? 0 : parts.front().cols();
  Matrix out(rows, cols);
  std::size_t r = 0;
  for (const auto& p : parts) {
    std::copy(p.flat().begin(), p.flat().end(), out.row(r).begin());
    r += p.rows();
  }
  return out;
}

// Decodes `codes` (whose private block may come from the other modality)
// through `decoder` along `which`.
Matrix decode_all(const std::vector<SparseCode>& codes, const SaeParams& decoder, DecodePath which) {
  Matrix out(codes.size(), decoder.dec_bias.size());
  for (std::size_t t = 0; t < codes.size(); ++t) {
    const Vector h = decode_partial(codes[t], decoder, which);
    std::copy(h.begin(), h.end(), out.row(t).begin());
  }
  return out;
}

struct SampleR2Parts {
  Matrix vision, text;
  Matrix v_shared, v_priv, v_joint;
  Matrix t_shared, t_priv, t_joint;
  Matrix t2v_shared, t2v_joint, v2t_shared, v2t_joint;
};

SampleR2Parts sample_parts(const ModelConfig& cfg, const ModelParams& params,
                           const PairedSample& sample, const GuidanceConfig& guidance,
                           const SinkhornOptions& options) {
  const SampleView view = SampleView::from(sample);
  const SampleForward fwd = forward(view, params, cfg);
  SampleR2Parts p;
  p.v_shared = decode_all(fwd.vision, params.vision, DecodePath::kSharedOnly);
  p.v_priv = decode_all(fwd.vision, params.vision, DecodePath::kPrivateOnly);
  p.v_joint = decode_all(fwd.vision, params.vision, DecodePath::kJoint);
  p.t_shared = decode_all(fwd.text, params.text, DecodePath::kSharedOnly);
  p.t_priv = decode_all(fwd.text, params.text, DecodePath::kPrivateOnly);
  p.t_joint = decode_all(fwd.text, params.text, DecodePath::kJoint);

  const TransportPlan plan = sample_plan(fwd, guidance, options);
  using enum BarycentricDirection;
  // Text codes through the vision decoder, moved onto vision positions.
  p.t2v_shared = barycentric_targets(plan.plan, decode_all(fwd.text, params.vision, DecodePath::kSharedOnly), kAToB);
  p.t2v_joint = barycentric_targets(plan.plan, decode_all(fwd.text, params.vision, DecodePath::kJoint), kAToB);
  p.v2t_shared = barycentric_targets(plan.plan, decode_all(fwd.vision, params.text, DecodePath::kSharedOnly), kBToA);
  p.v2t_joint = barycentric_targets(plan.plan, decode_all(fwd.vision, params.text, DecodePath::kJoint), kBToA);
  p.vision = view.vision;
  p.text = view.text;
  return p;
}

}  // namespace

R2Report r2_report(const ModelConfig& cfg, const ModelParams& params,
                   const std::vector<PairedSample>& dataset, const GuidanceConfig& guidance,
                   const SinkhornOptions& options, int threads) {
  check_dataset_dims(cfg, dataset);
  std::vector<SampleR2Parts> parts(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t n) {
    parts[n] = sample_parts(cfg, params, dataset[n], guidance, options);
  });
  auto gather = [&](Matrix SampleR2Parts::*member) {
    std::vector<Matrix> ms;
    ms.reserve(parts.size());
    for (auto& p : parts) ms.push_back(std::move(p.*member));
    return stack(ms);
  };
  const Matrix hv = gather(&SampleR2Parts::vision);
  const Matrix ht = gather(&SampleR2Parts::text);

  R2Report rep;
  rep.vision.shared = r_squared(hv, gather(&SampleR2Parts::v_shared));
  rep.vision.priv = r_squared(hv, gather(&SampleR2Parts::v_priv));
  rep.vision.joint = r_squared(hv, gather(&SampleR2Parts::v_joint));
  rep.text.shared = r_squared(ht, gather(&SampleR2Parts::t_shared));
  rep.text.priv = r_squared(ht, gather(&SampleR2Parts::t_priv));
  rep.text.joint = r_squared(ht, gather(&SampleR2Parts::t_joint));
  if (cfg.vision.n_private == 0) {
    rep.vision.global = rep.vision.joint;
    rep.text.global = rep.text.joint;
  }
  rep.t_to_v.shared = r_squared(hv, gather(&SampleR2Parts::t2v_shared));
  rep.t_to_v.joint = r_squared(hv, gather(&SampleR2Parts::t2v_joint));
  rep.v_to_t.shared = r_squared(ht, gather(&SampleR2Parts::v2t_shared));
  rep.v_to_t.joint = r_squared(ht, gather(&SampleR2Parts::v2t_joint));
  rep.delta_leak_v = rep.t_to_v.joint - rep.t_to_v.shared;
  rep.delta_leak_t = rep.v_to_t.joint - rep.v_to_t.shared;
  return rep;
}

Heatmap heatmap_from_plan(const Matrix& plan, std::size_t grid_h, std::size_t grid_w) {
  if (plan.rows() != grid_h * grid_w)
    throw DimensionError("plan has " + std::to_string(plan.rows()) + " patch rows, grid is " +
                         std::to_string(grid_h) + "x" + std::to_string(grid_w));
  Heatmap hm{{grid_h, grid_w}, Matrix(grid_h, grid_w)};
  double total = 0.0;
  for (std::size_t i = 0; i < plan.rows(); ++i) {
    double s = 0.0;
    for (double x : plan.row(i)) s += x;
    hm.grid.flat()[i] = s;
    total += s;
  }
  if (!(total > 0.0)) throw InvalidArgument("heatmap: plan has no mass");
  for (double& x : hm.grid.flat()) x /= total;
  return hm;
}

GroundingScores grounding_scores(const Heatmap& heatmap, const std::vector<Box>& boxes) {
  if (boxes.empty()) throw InvalidArgument("grounding_scores needs at least one box");
  const std::size_t h = heatmap.shape.height, w = heatmap.shape.width, p_count = h * w;
  if (heatmap.grid.rows() != h || heatmap.grid.cols() != w || p_count == 0)
    throw DimensionError("heatmap grid does not match its shape");
  const auto mass = heatmap.grid.flat();

  std::vector<std::uint8_t> inside(p_count, 0);
  std::size_t n_inside = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(w);
      const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(h);
      for (const Box& b : boxes)
        if (b.contains(x, y)) {
          inside[r * w + c] = 1;
          ++n_inside;
          break;
        }
    }

  GroundingScores s;
  for (std::size_t i = 0; i < p_count; ++i)
    if (inside[i]) s.mass_at_obj += mass[i];
  const std::size_t peak = static_cast<std::size_t>(
      std::max_element(mass.begin(), mass.end()) - mass.begin());
  s.point_at_1 = inside[peak] ? 1.0 : 0.0;

  const auto n_top = static_cast<std::size_t>(std::ceil(0.1 * static_cast<double>(p_count)));
  std::vector<std::size_t> order(p_count);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mass[a] > mass[b]; });
  std::size_t both = 0;
  for (std::size_t k = 0; k < n_top; ++k) both += inside[order[k]];
  const std::size_t uni = n_top + n_inside - both;
  s.iou_at_10 = uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
  return s;
}

double clustering_maxfreq(const Matrix& codes) {
  if (codes.rows() == 0) throw InvalidArgument("clustering_maxfreq needs at least one row");
  std::vector<std::size_t> counts(codes.cols(), 0);
  for (std::size_t r = 0; r < codes.rows(); ++r)
    for (std::size_t m = 0; m < codes.cols(); ++m)
      if (codes(r, m) > 0.0) ++counts[m];
  std::size_t best = 0;
  for (std::size_t c : counts) best = std::max(best, c);
  return static_cast<double>(best) / static_cast<double>(codes.rows());
}

Heatmap sample_heatmap(const ModelConfig& cfg, const ModelParams& params,
                       const PairedSample& sample, GridShape grid,
                       const GuidanceConfig& guidance, const SinkhornOptions& options) {
  if (sample.vision.num_tokens() != grid.cells())
    throw DimensionError("sample " + sample.id + " has " + std::to_string(sample.vision.num_tokens()) +
                         " patches, grid is " + std::to_string(grid.height) + "x" +
                         std::to_string(grid.width));
  const SampleView view = SampleView::from(sample);
  const SampleForward fwd = forward(view, params, cfg);
  const TransportPlan plan = sample_plan(fwd, guidance, options);
  Matrix full(grid.cells(), 1);
  std::size_t v = 0;
  for (std::size_t i = 0; i < grid.cells(); ++i) {
    if (!sample.vision.valid_mask[i]) continue;
    double s = 0.0;
    for (double x : plan.plan.row(v)) s += x;
    full(i, 0) = s;
    ++v;
  }
  return heatmap_from_plan(full, grid.height, grid.width);
}

GroundingSummary grounding_report(const ModelConfig& cfg, const ModelParams& params,
                                  const std::vector<PairedSample>& dataset, GridShape grid,
                                  const GuidanceConfig& guidance, const SinkhornOptions& options,
                                  int threads) {
  check_dataset_dims(cfg, dataset);
  std::vector<std::optional<GroundingScores>> per(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t n) {
    if (dataset[n].boxes.empty()) return;
    per[n] = grounding_scores(sample_heatmap(cfg, params, dataset[n], grid, guidance, options),
                              dataset[n].boxes);
  });
  GroundingSummary out;
  for (const auto& s : per) {
    if (!s) continue;
    out.mean.mass_at_obj += s->mass_at_obj;
    out.mean.point_at_1 += s->point_at_1;
    out.mean.iou_at_10 += s->iou_at_10;
    ++out.n_samples;
  }
  if (out.n_samples > 0) {
    const double inv = 1.0 / static_cast<double>(out.n_samples);
    out.mean.mass_at_obj *= inv;
    out.mean.point_at_1 *= inv;
    out.mean.iou_at_10 *= inv;
  }
  return out;
}

Matrix stacked_shared_codes(const ModelConfig& cfg, const ModelParams& params,
                            const std::vector<PairedSample>& dataset, Modality modality,
                            int threads) {
  check_dataset_dims(cfg, dataset);
  const bool vision = modality == Modality::kVision;
  std::vector<Matrix> parts(dataset.size());
  parallel_for(dataset.size(), threads, [&](std::size_t n) {
    const ActivationSet& set = vision ? dataset[n].vision : dataset[n].text;
    parts[n] = encode_rows(set.valid_tokens(), vision ? params.vision : params.text,
                           vision ? cfg.vision : cfg.text)
                   .shared;
  });
  return stack(parts);
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<PairedSample>& dataset,
                    GridShape grid, int threads) {
  const TrainConfig& c = ckpt.config;
  const SinkhornOptions opts = c.sinkhorn_options();
  EvalReport rep;
  rep.r2 = r2_report(c.model, ckpt.params, dataset, c.guidance, opts, threads);
  rep.grounding = grounding_report(c.model, ckpt.params, dataset, grid, c.guidance, opts, threads);
  rep.maxfreq_t2i =
      clustering_maxfreq(stacked_shared_codes(c.model, ckpt.params, dataset, Modality::kText, threads));
  rep.maxfreq_i2t =
      clustering_maxfreq(stacked_shared_codes(c.model, ckpt.params, dataset, Modality::kVision, threads));
  return rep;
}

}  // namespace unisae
