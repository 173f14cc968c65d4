#include "unisae/sae.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "unisae/error.hpp"

namespace unisae {

void SaeConfig::validate() const {
  if (d == 0) throw InvalidArgument("sae: d must be positive");
  if (n_shared == 0 || k_shared == 0) throw InvalidArgument("sae: shared sizes must be positive");
  if (k_shared > n_shared) throw InvalidArgument("sae: k_shared exceeds n_shared");
  if (k_private > n_private) throw InvalidArgument("sae: k_private exceeds n_private");
  if (n_private > 0 && k_private == 0)
    throw InvalidArgument("sae: k_private must be positive when n_private > 0");
}

SaeParams SaeParams::zeros(const SaeConfig& cfg) {
  SaeParams p;
  p.enc_shared = Matrix(cfg.n_shared, cfg.d);
  p.enc_private = Matrix(cfg.n_private, cfg.d);
  p.enc_bias_shared.assign(cfg.n_shared, 0.0);
  p.enc_bias_private.assign(cfg.n_private, 0.0);
  p.dec_shared = Matrix(cfg.d, cfg.n_shared);
  p.dec_private = Matrix(cfg.d, cfg.n_private);
  p.dec_bias.assign(cfg.d, 0.0);
  return p;
}

void SaeParams::for_each(const std::function<void(std::string_view, std::span<double>)>& fn) {
  fn("enc_shared", enc_shared.flat());
  fn("enc_private", enc_private.flat());
  fn("enc_bias_shared", enc_bias_shared);
  fn("enc_bias_private", enc_bias_private);
  fn("dec_shared", dec_shared.flat());
  fn("dec_private", dec_private.flat());
  fn("dec_bias", dec_bias);
}

void SaeParams::for_each(
    const std::function<void(std::string_view, std::span<const double>)>& fn) const {
  fn("enc_shared", enc_shared.flat());
  fn("enc_private", enc_private.flat());
  fn("enc_bias_shared", enc_bias_shared);
  fn("enc_bias_private", enc_bias_private);
  fn("dec_shared", dec_shared.flat());
  fn("dec_private", dec_private.flat());
  fn("dec_bias", dec_bias);
}

std::size_t SaeParams::num_values() const {
  std::size_t n = 0;
  for_each([&](std::string_view, std::span<const double> s) { n += s.size(); });
  return n;
}

bool SaeParams::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, std::span<const double> s) {
    for (double x : s) ok = ok && std::isfinite(x);
  });
  return ok;
}

void SaeParams::check_shapes(const SaeConfig& cfg) const {
  const bool ok = enc_shared.rows() == cfg.n_shared && enc_shared.cols() == cfg.d &&
                  enc_private.rows() == cfg.n_private && enc_private.cols() == cfg.d &&
                  enc_bias_shared.size() == cfg.n_shared &&
                  enc_bias_private.size() == cfg.n_private && dec_shared.rows() == cfg.d &&
                  dec_shared.cols() == cfg.n_shared && dec_private.rows() == cfg.d &&
                  dec_private.cols() == cfg.n_private && dec_bias.size() == cfg.d;
  if (!ok) throw DimensionError("sae parameters do not match config");
}

namespace {

void normalize_columns(Matrix& m) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c) * m(r, c);
    s = std::sqrt(s);
    if (s < 1e-300) continue;
    for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) /= s;
  }
}

void gaussian_fill(Matrix& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : m.flat()) x = normal(rng);
}

void check_input(std::span<const double> h, const SaeParams& params) {
  if (h.size() != params.dec_bias.size()) throw DimensionError("token length differs from d");
}

}  // namespace

void SaeParams::renormalize_decoder() {
  normalize_columns(dec_shared);
  normalize_columns(dec_private);
}

SaeParams init_params(const SaeConfig& cfg, const Matrix& data_sample, std::uint64_t shared_seed,
                      std::uint64_t private_seed) {
  cfg.validate();
  if (data_sample.rows() == 0) throw InvalidArgument("init_params: empty data sample");
  if (data_sample.cols() != cfg.d) throw DimensionError("init_params: sample width differs from d");
  SaeParams p = SaeParams::zeros(cfg);
  gaussian_fill(p.dec_shared, shared_seed);
  gaussian_fill(p.dec_private, private_seed);
  p.renormalize_decoder();
  p.enc_shared = p.dec_shared.transposed();
  p.enc_private = p.dec_private.transposed();
  p.dec_bias = column_mean(data_sample);
  return p;
}

SaeParams init_params(const SaeConfig& cfg, const Matrix& data_sample, std::uint64_t seed) {
  return init_params(cfg, data_sample, seed, seed ^ 0x9e3779b97f4a7c15ULL);
}

void encoder_preactivations(std::span<const double> h, const SaeParams& params,
                            std::span<double> pre_shared, std::span<double> pre_private) {
  check_input(h, params);
  Vector centered(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) centered[i] = h[i] - params.dec_bias[i];
  matvec(params.enc_shared, centered, pre_shared);
  for (std::size_t m = 0; m < pre_shared.size(); ++m) pre_shared[m] += params.enc_bias_shared[m];
  matvec(params.enc_private, centered, pre_private);
  for (std::size_t m = 0; m < pre_private.size(); ++m)
    pre_private[m] += params.enc_bias_private[m];
}

SparseCode encode(std::span<const double> h, const SaeParams& params, const SaeConfig& cfg) {
  Vector pre_s(cfg.n_shared), pre_p(cfg.n_private);
  if (params.enc_shared.rows() != cfg.n_shared || params.enc_private.rows() != cfg.n_private)
    throw DimensionError("encode: params do not match config");
  encoder_preactivations(h, params, pre_s, pre_p);
  return {top_k(pre_s, cfg.k_shared), top_k(pre_p, cfg.k_private)};
}

namespace {

void add_decoded(const Matrix& dec, std::span<const double> code, std::span<double> out) {
  if (code.size() != dec.cols()) throw DimensionError("decode: code length");
  const std::size_t k = dec.cols();
  for (std::size_t m = 0; m < k; ++m) {
    const double z = code[m];
    if (z == 0.0) continue;
    const double* col = dec.data() + m;
    for (std::size_t r = 0; r < out.size(); ++r) out[r] += z * col[r * k];
  }
}

}  // namespace

Vector decode_partial(const SparseCode& code, const SaeParams& params, DecodePath which) {
  Vector out = params.dec_bias;
  if (which != DecodePath::kPrivateOnly) add_decoded(params.dec_shared, code.shared, out);
  if (which != DecodePath::kSharedOnly) add_decoded(params.dec_private, code.priv, out);
  return out;
}

Vector decode(const SparseCode& code, const SaeParams& params) {
  return decode_partial(code, params, DecodePath::kJoint);
}

Vector decode_shared(std::span<const double> shared, const SaeParams& params) {
  Vector out = params.dec_bias;
  add_decoded(params.dec_shared, shared, out);
  return out;
}

CodeMatrix encode_rows(const Matrix& tokens, const SaeParams& params, const SaeConfig& cfg) {
  if (tokens.cols() != cfg.d) throw DimensionError("encode_rows: token width differs from d");
  CodeMatrix out{Matrix(tokens.rows(), cfg.n_shared), Matrix(tokens.rows(), cfg.n_private)};
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    SparseCode c = encode(tokens.row(t), params, cfg);
    std::copy(c.shared.begin(), c.shared.end(), out.shared.row(t).begin());
    std::copy(c.priv.begin(), c.priv.end(), out.priv.row(t).begin());
  }
  return out;
}

Matrix decode_rows(const CodeMatrix& codes, const SaeParams& params, DecodePath which) {
  const std::size_t d = params.dec_bias.size();
  Matrix out(codes.shared.rows(), d);
  for (std::size_t t = 0; t < codes.shared.rows(); ++t) {
    auto row = out.row(t);
    std::copy(params.dec_bias.begin(), params.dec_bias.end(), row.begin());
    if (which != DecodePath::kPrivateOnly) add_decoded(params.dec_shared, codes.shared.row(t), row);
    if (which != DecodePath::kSharedOnly && codes.priv.cols() > 0)
      add_decoded(params.dec_private, codes.priv.row(t), row);
  }
  return out;
}

namespace {

void encoder_block_backward(std::span<const double> code, std::span<const double> grad,
                            const Matrix& enc, std::span<const double> centered, Matrix& grad_enc,
                            Vector& grad_enc_bias, std::span<double> grad_h) {
  const std::size_t d = centered.size();
  for (std::size_t m = 0; m < code.size(); ++m) {
    if (code[m] <= 0.0) continue;
    const double g = grad[m];
    if (g == 0.0) continue;
    double* ge = grad_enc.data() + m * d;
    const double* w = enc.data() + m * d;
    for (std::size_t i = 0; i < d; ++i) {
      ge[i] += g * centered[i];
      grad_h[i] += g * w[i];
    }
    grad_enc_bias[m] += g;
  }
}

}  // namespace

Vector encode_backward(std::span<const double> h, const SparseCode& code, const SaeParams& params,
                       std::span<const double> grad_shared, std::span<const double> grad_private,
                       SaeParams& grads) {
  check_input(h, params);
  if (grad_shared.size() != code.shared.size() || grad_private.size() != code.priv.size())
    throw DimensionError("encode_backward: gradient length");
  const std::size_t d = h.size();
  Vector centered(d);
  for (std::size_t i = 0; i < d; ++i) centered[i] = h[i] - params.dec_bias[i];
  Vector grad_h(d, 0.0);
  encoder_block_backward(code.shared, grad_shared, params.enc_shared, centered, grads.enc_shared,
                         grads.enc_bias_shared, grad_h);
  encoder_block_backward(code.priv, grad_private, params.enc_private, centered,
                         grads.enc_private, grads.enc_bias_private, grad_h);
  // Centering subtracts dec_bias, so its encoder-path gradient is -d/dh.
  for (std::size_t i = 0; i < d; ++i) grads.dec_bias[i] -= grad_h[i];
  return grad_h;
}

namespace {

void decoder_block_backward(std::span<const double> code, const Matrix& dec,
                            std::span<const double> grad_out, Matrix& grad_dec,
                            std::span<double> grad_code) {
  const std::size_t k = dec.cols();
  const std::size_t d = dec.rows();
  for (std::size_t m = 0; m < k; ++m) {
    const double z = code[m];
    if (z == 0.0) {
      grad_code[m] = 0.0;
      continue;
    }
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      s += dec.data()[r * k + m] * grad_out[r];
      grad_dec.data()[r * k + m] += z * grad_out[r];
    }
    grad_code[m] = s;
  }
}

}  // namespace

void decode_backward(const SparseCode& code, const SaeParams& params, DecodePath which,
                     std::span<const double> grad_out, SaeParams& grads,
                     std::span<double> grad_shared, std::span<double> grad_private) {
  if (grad_out.size() != params.dec_bias.size()) throw DimensionError("decode_backward: grad");
  std::fill(grad_shared.begin(), grad_shared.end(), 0.0);
  std::fill(grad_private.begin(), grad_private.end(), 0.0);
  if (which != DecodePath::kPrivateOnly)
    decoder_block_backward(code.shared, params.dec_shared, grad_out, grads.dec_shared,
                           grad_shared);
  if (which != DecodePath::kSharedOnly)
    decoder_block_backward(code.priv, params.dec_private, grad_out, grads.dec_private,
                           grad_private);
  axpy(1.0, grad_out, grads.dec_bias);
}

}  // namespace unisae
