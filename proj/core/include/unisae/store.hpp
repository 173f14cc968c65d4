#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unisae/numerics.hpp"

namespace unisae {

enum class Modality : std::uint8_t { kVision = 0, kText = 1 };

const char* to_string(Modality m);

// T x d token activations for one sample in one modality. Padding rows are
// carried with valid_mask = false and skipped by every loss and pooling.
struct ActivationSet {
  Modality modality = Modality::kVision;
  Matrix tokens;
  std::vector<std::uint8_t> valid_mask;

  std::size_t num_tokens() const noexcept { return tokens.rows(); }
  std::size_t dim() const noexcept { return tokens.cols(); }
  std::size_t num_valid() const;
  // Valid rows only, in original order.
  Matrix valid_tokens() const;
  // Throws InvalidArgument when an invariant is broken.
  void validate() const;

  static ActivationSet all_valid(Modality m, Matrix tokens);

  friend bool operator==(const ActivationSet&, const ActivationSet&) = default;
};

// Normalized box in the unit square.
struct Box {
  double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

  bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  void validate() const;
  friend bool operator==(const Box&, const Box&) = default;
};

struct PairedSample {
  std::string id;
  ActivationSet vision;
  ActivationSet text;
  std::vector<Box> boxes;

  void validate() const;
  friend bool operator==(const PairedSample&, const PairedSample&) = default;
};

struct GridShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t cells() const noexcept { return height * width; }
};

struct DatasetManifest {
  std::uint16_t version = 1;
  std::size_t n_samples = 0;
  std::size_t d = 0;
  std::size_t d_text = 0;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

inline constexpr std::uint16_t kActivationFileVersion = 1;

// Writes the "LACT" binary plus a sidecar manifest at `path + ".json"`.
// A zero grid is inferred as square when the vision token count allows it,
// else 1 x T.
void write_activation_file(const std::string& path, const std::vector<PairedSample>& samples,
                           GridShape grid = {});
std::vector<PairedSample> read_activation_file(const std::string& path);
DatasetManifest read_manifest(const std::string& activation_path);
std::string manifest_path(const std::string& activation_path);

// Tokens round-tripped through 32-bit storage, as read_activation_file would
// return them.
Matrix quantize_f32(const Matrix& m);

struct ConceptEntry {
  std::string term;
  ActivationSet text_activations;
  Vector cluster_embedding;

  friend bool operator==(const ConceptEntry&, const ConceptEntry&) = default;
};

struct ConceptLibrary {
  std::vector<ConceptEntry> entries;

  // Unique terms and unit-norm embeddings (within 1e-6).
  void validate() const;
  friend bool operator==(const ConceptLibrary&, const ConceptLibrary&) = default;
};

void write_concept_library(const std::string& path, const ConceptLibrary& library);
ConceptLibrary read_concept_library(const std::string& path);

}  // namespace unisae
