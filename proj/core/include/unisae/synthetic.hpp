#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "unisae/numerics.hpp"
#include "unisae/store.hpp"

namespace unisae {

// Planted-dictionary dataset generator.
//
// Each sample draws `k_active` distinct shared atoms; the first is the
// "object". Every valid token carries exactly one of the sample's shared
// atoms plus `private_active` atoms of its own modality's private dictionary
// and Gaussian noise. With `plant_boxes`, vision patches inside a random
// rectangle carry the object atom and the rest carry the remaining atoms;
// the rectangle is recorded as the sample's box. Text tokens cycle through
// the sample atoms starting with the object, and a random tail of the text
// sequence is padding.
struct SyntheticConfig {
  std::size_t n_samples = 200;
  std::size_t grid_h = 4;
  std::size_t grid_w = 4;
  std::size_t text_tokens = 6;
  std::size_t d = 32;
  std::size_t n_shared = 16;
  std::size_t n_private = 8;
  std::size_t k_active = 3;
  std::size_t private_active = 1;
  double noise_sigma = 0.0;
  std::uint64_t seed = 1;
  bool plant_boxes = true;
  // Shared and each modality's private atoms form an orthonormal set
  // (needs d >= n_shared + n_private).
  bool orthogonal = false;

  std::size_t vision_tokens() const { return grid_h * grid_w; }
  void validate() const;
};

struct PlantedCodes {
  Matrix vision_shared;   // T_a x K_s
  Matrix vision_private;  // T_a x K_p
  Matrix text_shared;     // T_b x K_s (zero rows for padding)
  Matrix text_private;    // T_b x K_p
  std::vector<std::size_t> atoms;  // sample atoms, object first
};

struct SyntheticGroundTruth {
  Matrix shared_dictionary;         // d x K_s, unit columns
  Matrix vision_private_dictionary;  // d x K_p
  Matrix text_private_dictionary;    // d x K_p
  std::vector<PlantedCodes> planted_codes;
  double noise_sigma = 0.0;
};

std::pair<std::vector<PairedSample>, SyntheticGroundTruth> generate_synthetic(
    const SyntheticConfig& cfg);

// Ground truth as JSON (dictionaries base64 f64, per-sample atom lists).
void write_ground_truth(const std::string& path, const SyntheticConfig& cfg,
                        const SyntheticGroundTruth& truth);

}  // namespace unisae

namespace unisae {

// One concept family per planted shared atom: `terms_per_family` terms
// named "atom<j>_<t>", each a single text token equal to the atom (plus
// noise_sigma Gaussian noise). Embeddings of a family sit within a small
// angle of a family direction; family directions are mutually orthogonal.
ConceptLibrary make_concept_library(const SyntheticConfig& cfg, const SyntheticGroundTruth& truth,
                                    std::size_t terms_per_family = 3);

}  // namespace unisae
