#pragma once

#include <string>

#include "unisae/synthetic.hpp"
#include "unisae/trainer.hpp"

namespace unisae {

// Flat `key = value` text files. Blank lines and lines starting with '#'
// are ignored; unknown or repeated keys are rejected. Keys not present keep
// their defaults.
//
// Train keys: d, d_text, n_shared, n_private, k_shared, k_private, alpha,
// beta_align, gamma_cross, epsilon, sinkhorn_iters, sinkhorn_tol,
// guidance_mode, lambda_global, mask_penalty, batch_size, steps, lr,
// weight_decay, seed, lr_schedule. d_text defaults to d.
//
// Synthetic keys: the SyntheticConfig field names.
TrainConfig parse_train_config(const std::string& text);
SyntheticConfig parse_synthetic_config(const std::string& text);

TrainConfig load_train_config(const std::string& path);
SyntheticConfig load_synthetic_config(const std::string& path);

// Inverse of the parsers; every key written, doubles at 17 significant
// digits.
std::string format_train_config(const TrainConfig& cfg);
std::string format_synthetic_config(const SyntheticConfig& cfg);

// Locale-independent shortest-roundtrip-safe formatting used by every
// text output.
std::string format_double(double x);

}  // namespace unisae
