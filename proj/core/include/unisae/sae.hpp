#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "unisae/numerics.hpp"

namespace unisae {

// Dictionary sizes and per-token active counts for one modality.
// n_private = k_private = 0 is the shared-only ablation.
struct SaeConfig {
  std::size_t d = 0;
  std::size_t n_shared = 0;
  std::size_t n_private = 0;
  std::size_t k_shared = 0;
  std::size_t k_private = 0;

  void validate() const;
  double shared_ratio() const {
    return static_cast<double>(n_shared) / static_cast<double>(n_shared + n_private);
  }
  friend bool operator==(const SaeConfig&, const SaeConfig&) = default;
};

// Encoder: affine map of the centered input followed by top_k.
// Decoder: h_hat = dec_shared * z_s + dec_private * z_p + dec_bias.
struct SaeParams {
  Matrix enc_shared;   // K_s x d
  Matrix enc_private;  // K_p x d
  Vector enc_bias_shared;
  Vector enc_bias_private;
  Matrix dec_shared;   // d x K_s
  Matrix dec_private;  // d x K_p
  Vector dec_bias;     // d

  static SaeParams zeros(const SaeConfig& cfg);

  // Visits every tensor in declared order; used by the optimizer,
  // checkpoints and gradient checks.
  void for_each(const std::function<void(std::string_view, std::span<double>)>& fn);
  void for_each(const std::function<void(std::string_view, std::span<const double>)>& fn) const;
  std::size_t num_values() const;
  bool all_finite() const;
  void check_shapes(const SaeConfig& cfg) const;
  void renormalize_decoder();

  friend bool operator==(const SaeParams&, const SaeParams&) = default;
};

struct SparseCode {
  Vector shared;
  Vector priv;
};

enum class DecodePath { kSharedOnly, kPrivateOnly, kJoint };

// Decoder columns ~ normalized spherical Gaussian, encoder = decoder
// transpose, dec_bias = data mean, encoder biases zero.
// `shared_seed` drives the shared block and `private_seed` the private one,
// so two modalities can start from a common shared dictionary.
SaeParams init_params(const SaeConfig& cfg, const Matrix& data_sample, std::uint64_t shared_seed,
                      std::uint64_t private_seed);
SaeParams init_params(const SaeConfig& cfg, const Matrix& data_sample, std::uint64_t seed);

// Pre-activations W_enc (h - b) + b_enc for the shared and private blocks.
void encoder_preactivations(std::span<const double> h, const SaeParams& params,
                            std::span<double> pre_shared, std::span<double> pre_private);

SparseCode encode(std::span<const double> h, const SaeParams& params, const SaeConfig& cfg);
Vector decode(const SparseCode& code, const SaeParams& params);
Vector decode_partial(const SparseCode& code, const SaeParams& params, DecodePath which);
// dec_shared * z_s + dec_bias.
Vector decode_shared(std::span<const double> shared, const SaeParams& params);

// Row-wise encode of a token matrix.
struct CodeMatrix {
  Matrix shared;  // T x K_s
  Matrix priv;    // T x K_p
};
CodeMatrix encode_rows(const Matrix& tokens, const SaeParams& params, const SaeConfig& cfg);
Matrix decode_rows(const CodeMatrix& codes, const SaeParams& params, DecodePath which);

// Straight-through backward of encode: the Top-K support of the forward
// code is a constant mask, so only kept coordinates pass gradient. The
// gradient reaches enc_*, enc_bias_*, dec_bias (through the centering) and
// the input h. Accumulates into `grads` and returns d/dh.
Vector encode_backward(std::span<const double> h, const SparseCode& code, const SaeParams& params,
                       std::span<const double> grad_shared, std::span<const double> grad_private,
                       SaeParams& grads);

// Backward of decode for the given path. Accumulates dec_* and dec_bias
// grads and writes d/dz into grad_shared / grad_private (only entries on
// the code's support are meaningful to encode_backward).
void decode_backward(const SparseCode& code, const SaeParams& params, DecodePath which,
                     std::span<const double> grad_out, SaeParams& grads,
                     std::span<double> grad_shared, std::span<double> grad_private);

}  // namespace unisae
