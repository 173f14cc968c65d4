#include "unisae/objective.hpp"

#include <cmath>

#include "unisae/error.hpp"

namespace unisae {

void ModelConfig::validate() const {
  vision.validate();
  text.validate();
  if (vision.n_shared != text.n_shared)
    throw InvalidArgument("vision and text must share n_shared");
  if (vision.n_private != text.n_private)
    throw InvalidArgument("vision and text must use the same n_private");
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  return {SaeParams::zeros(cfg.vision), SaeParams::zeros(cfg.text)};
}

void ModelParams::for_each(const std::function<void(std::string_view, std::span<double>)>& fn) {
  vision.for_each(fn);
  text.for_each(fn);
}

void ModelParams::for_each(
    const std::function<void(std::string_view, std::span<const double>)>& fn) const {
  vision.for_each(fn);
  text.for_each(fn);
}

void LossWeights::validate() const {
  for (double w : {alpha, beta_align, gamma_cross})
    if (!(w >= 0.0) || !std::isfinite(w))
      throw InvalidArgument("loss weights must be nonnegative and finite");
}

SampleView SampleView::from(const PairedSample& sample) {
  return {sample.vision.valid_tokens(), sample.text.valid_tokens()};
}

SampleForward forward(const SampleView& sample, const ModelParams& params, const ModelConfig& cfg) {
  if (sample.vision.cols() != cfg.vision.d || sample.text.cols() != cfg.text.d)
    throw DimensionError("sample width differs from model d");
  SampleForward fwd;
  fwd.vision_shared = Matrix(sample.vision.rows(), cfg.vision.n_shared);
  fwd.text_shared = Matrix(sample.text.rows(), cfg.text.n_shared);
  fwd.vision.reserve(sample.vision.rows());
  fwd.text.reserve(sample.text.rows());
  for (std::size_t i = 0; i < sample.vision.rows(); ++i) {
    fwd.vision.push_back(encode(sample.vision.row(i), params.vision, cfg.vision));
    std::copy(fwd.vision.back().shared.begin(), fwd.vision.back().shared.end(),
              fwd.vision_shared.row(i).begin());
  }
  for (std::size_t j = 0; j < sample.text.rows(); ++j) {
    fwd.text.push_back(encode(sample.text.row(j), params.text, cfg.text));
    std::copy(fwd.text.back().shared.begin(), fwd.text.back().shared.end(),
              fwd.text_shared.row(j).begin());
  }
  return fwd;
}

TransportPlan sample_plan(const SampleForward& fwd, const GuidanceConfig& guidance,
                          const SinkhornOptions& options) {
  const std::vector<std::uint8_t> valid(fwd.text_shared.rows(), 1);
  return gcmt_plan(fwd.vision_shared, fwd.text_shared, valid, guidance, options);
}

namespace {

double self_term(const Matrix& tokens, const std::vector<SparseCode>& codes,
                 const SaeParams& params, SaeParams* grads, double scale) {
  const std::size_t t_count = tokens.rows();
  const double inv_t = 1.0 / static_cast<double>(t_count);
  double loss = 0.0;
  Vector grad_out(tokens.cols());
  Vector gs(params.dec_shared.cols()), gp(params.dec_private.cols());
  for (std::size_t t = 0; t < t_count; ++t) {
    const Vector recon = decode(codes[t], params);
    const auto h = tokens.row(t);
    double err = 0.0;
    for (std::size_t r = 0; r < h.size(); ++r) {
      const double e = recon[r] - h[r];
      err += e * e;
      grad_out[r] = 2.0 * e * inv_t * scale;
    }
    loss += err * inv_t;
    if (grads) {
      decode_backward(codes[t], params, DecodePath::kJoint, grad_out, *grads, gs, gp);
      encode_backward(h, codes[t], params, gs, gp, *grads);
    }
  }
  return loss;
}

// Pushes a gradient on shared codes back through the encoder of every token
// whose shared code it belongs to.
void shared_code_backward(const Matrix& tokens, const std::vector<SparseCode>& codes,
                          const SaeParams& params, const Matrix& grad_shared, SaeParams& grads) {
  const Vector zero_private(params.enc_private.rows(), 0.0);
  for (std::size_t t = 0; t < tokens.rows(); ++t)
    encode_backward(tokens.row(t), codes[t], params, grad_shared.row(t), zero_private, grads);
}

// || dec(z) - target ||^2 with dec = shared block + bias of `decoder`.
// Accumulates decoder grads and returns d/dz (scaled).
double pooled_decode_term(std::span<const double> z, std::span<const double> target,
                          const SaeParams& decoder, SaeParams* grads, double scale,
                          Vector& grad_z) {
  const Vector recon = decode_shared(z, decoder);
  const std::size_t d = recon.size();
  const std::size_t k = z.size();
  Vector g(d);
  double loss = 0.0;
  for (std::size_t r = 0; r < d; ++r) {
    const double e = recon[r] - target[r];
    loss += e * e;
    g[r] = 2.0 * e * scale;
  }
  grad_z.assign(k, 0.0);
  if (grads) {
    for (std::size_t r = 0; r < d; ++r) {
      const double* w = decoder.dec_shared.data() + r * k;
      double* gw = grads->dec_shared.data() + r * k;
      for (std::size_t m = 0; m < k; ++m) {
        gw[m] += g[r] * z[m];
        grad_z[m] += w[m] * g[r];
      }
    }
    axpy(1.0, g, grads->dec_bias);
  }
  return loss;
}

}  // namespace

SelfLoss self_loss(const SampleView& sample, const SampleForward& fwd, const ModelParams& params,
                   ModelParams* grads, double scale) {
  SelfLoss out;
  out.vision = self_term(sample.vision, fwd.vision, params.vision,
                         grads ? &grads->vision : nullptr, scale);
  out.text =
      self_term(sample.text, fwd.text, params.text, grads ? &grads->text : nullptr, scale);
  return out;
}

double align_loss(const SampleView& sample, const SampleForward& fwd, const ModelParams& params,
                  ModelParams* grads, double scale) {
  const Vector za_bar = column_mean(fwd.vision_shared);
  const Vector zb_bar = column_mean(fwd.text_shared);
  const Vector ha_bar = column_mean(sample.vision);
  const Vector hb_bar = column_mean(sample.text);

  Vector grad_zb_bar, grad_za_bar;
  double loss = pooled_decode_term(zb_bar, ha_bar, params.vision,
                                   grads ? &grads->vision : nullptr, scale, grad_zb_bar);
  loss += pooled_decode_term(za_bar, hb_bar, params.text, grads ? &grads->text : nullptr, scale,
                             grad_za_bar);
  if (grads) {
    const std::size_t ta = sample.vision.rows(), tb = sample.text.rows();
    Matrix ga(ta, za_bar.size()), gb(tb, zb_bar.size());
    for (std::size_t i = 0; i < ta; ++i)
      axpy(1.0 / static_cast<double>(ta), grad_za_bar, ga.row(i));
    for (std::size_t j = 0; j < tb; ++j)
      axpy(1.0 / static_cast<double>(tb), grad_zb_bar, gb.row(j));
    shared_code_backward(sample.vision, fwd.vision, params.vision, ga, grads->vision);
    shared_code_backward(sample.text, fwd.text, params.text, gb, grads->text);
  }
  return loss;
}

namespace {

// Mean over target tokens of || dec(W z_src) - h ||^2 where W are
// barycentric weights (rows sum to 1) and dec is the shared decode of
// `decoder`. Returns the loss and accumulates the source-code gradient.
double transported_term(const Matrix& weights, const Matrix& source_codes, const Matrix& targets,
                        const SaeParams& decoder, SaeParams* grads, double scale,
                        Matrix* grad_source) {
  const std::size_t t_out = weights.rows();
  const std::size_t k = source_codes.cols();
  const double inv_t = 1.0 / static_cast<double>(t_out);
  double loss = 0.0;
  Vector z(k), grad_z;
  for (std::size_t o = 0; o < t_out; ++o) {
    std::fill(z.begin(), z.end(), 0.0);
    for (std::size_t s = 0; s < weights.cols(); ++s)
      if (weights(o, s) != 0.0) axpy(weights(o, s), source_codes.row(s), z);
    loss += inv_t * pooled_decode_term(z, targets.row(o), decoder, grads, scale * inv_t, grad_z);
    if (grad_source)
      for (std::size_t s = 0; s < weights.cols(); ++s)
        if (weights(o, s) != 0.0) axpy(weights(o, s), grad_z, grad_source->row(s));
  }
  return loss;
}

}  // namespace

double cross_loss(const SampleView& sample, const SampleForward& fwd, const Matrix& plan,
                  const ModelParams& params, ModelParams* grads, double scale) {
  const std::size_t ta = sample.vision.rows(), tb = sample.text.rows();
  if (plan.rows() != ta || plan.cols() != tb)
    throw DimensionError("cross_loss: plan does not match token counts");
  const Matrix to_vision = barycentric_weights(plan, BarycentricDirection::kAToB);
  const Matrix to_text = barycentric_weights(plan, BarycentricDirection::kBToA);

  Matrix grad_text_codes(tb, fwd.text_shared.cols());
  Matrix grad_vision_codes(ta, fwd.vision_shared.cols());
  double loss = transported_term(to_vision, fwd.text_shared, sample.vision, params.vision,
                                 grads ? &grads->vision : nullptr, scale,
                                 grads ? &grad_text_codes : nullptr);
  loss += transported_term(to_text, fwd.vision_shared, sample.text, params.text,
                           grads ? &grads->text : nullptr, scale,
                           grads ? &grad_vision_codes : nullptr);
  if (grads) {
    shared_code_backward(sample.text, fwd.text, params.text, grad_text_codes, grads->text);
    shared_code_backward(sample.vision, fwd.vision, params.vision, grad_vision_codes,
                         grads->vision);
  }
  return loss;
}

LossBreakdown total_loss(const SampleView& sample, const SampleForward& fwd, const Matrix& plan,
                         const ModelParams& params, const LossWeights& weights,
                         ModelParams* grads, double scale) {
  LossBreakdown out;
  auto active = [&](double w) { return w != 0.0 ? grads : nullptr; };
  const SelfLoss self = self_loss(sample, fwd, params, active(weights.alpha), scale * weights.alpha);
  out.self_v = self.vision;
  out.self_t = self.text;
  out.align =
      align_loss(sample, fwd, params, active(weights.beta_align), scale * weights.beta_align);
  out.cross = cross_loss(sample, fwd, plan, params, active(weights.gamma_cross),
                         scale * weights.gamma_cross);
  out.total = weights.alpha * (out.self_v + out.self_t) + weights.beta_align * out.align +
              weights.gamma_cross * out.cross;
  return out;
}

}  // namespace unisae
