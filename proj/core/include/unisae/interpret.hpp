#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unisae/numerics.hpp"
#include "unisae/sae.hpp"
#include "unisae/store.hpp"
#include "unisae/trainer.hpp"

namespace unisae {

struct ConceptCode {
  std::string term;
  Vector code;  // K_s, mean shared code over the concept's valid text tokens
};

// Text tokens of every concept through the text SAE, shared codes
// mean-pooled. Rejects libraries that fail ConceptLibrary::validate.
std::vector<ConceptCode> encode_concepts(const ConceptLibrary& library, const SaeParams& text_params,
                                         const SaeConfig& text_cfg);

struct IdfVector {
  Vector idf;
  std::vector<std::size_t> df;
  std::size_t n_concepts = 0;
};

// idf_m = ln(N / max(df_m, 1)), df_m = number of concepts with code_m > 0.
IdfVector compute_idf(const std::vector<ConceptCode>& concepts);

struct SpatialMatch {
  Vector activation_map;  // T_a
  std::size_t peak_patch = 0;
  double peak_score = 0.0;
  std::size_t dominant_neuron = 0;
};

// score_p = sum_m min(image_pm, concept_m) * idf_m; peak and dominant
// neuron by argmax with lowest-index ties.
SpatialMatch spatial_match(const Matrix& image_codes, const ConceptCode& query, const IdfVector& idf);

struct ClusterConfig {
  double sigma = 0.78;
  double purity_threshold = 0.55;
  std::size_t min_hits = 5;
  // Absent: the 75th percentile of all peak scores of the run.
  std::optional<double> peak_confidence;

  void validate() const;
};

struct ConceptHit {
  std::string term;
  double peak_score = 0.0;
};

struct Associations {
  std::map<std::size_t, std::vector<ConceptHit>> by_neuron;
  double peak_confidence = 0.0;  // threshold actually used
};

// Every (image, concept) pair is matched; a hit (score > peak_confidence)
// goes to the dominant neuron at the peak. Hits within a neuron are listed
// in (image, concept) order.
Associations associate_concepts(const std::vector<Matrix>& image_codes,
                                const std::vector<ConceptCode>& concepts, const IdfVector& idf,
                                const ClusterConfig& cfg, int threads = 1);

// Linear-interpolated percentile (q in [0,1]) of a nonempty sample.
double percentile(std::vector<double> values, double q);

// Items in input order join the first cluster whose renormalized running
// mean has cosine >= sigma, else open a new one. Returns clusters of input
// indices sorted by size descending, ties by creation order.
std::vector<std::vector<std::size_t>> greedy_cluster(const std::vector<Vector>& embeddings,
                                                     double sigma);

struct ConceptSummary {
  std::string term;
  std::size_t hit_count = 0;
  double peak_score = 0.0;  // best peak among the hits
};

struct NeuronReport {
  std::size_t neuron = 0;
  // Descending hit_count, then term; also the clustering order.
  std::vector<ConceptSummary> concepts;
  std::vector<std::vector<std::string>> clusters;
  std::size_t total_hits = 0;
  // Dominant cluster size over the number of distinct concepts.
  double purity = 0.0;
  bool interpretable = false;
};

// Neurons with fewer than min_hits hits are dropped; reports sorted by
// neuron index.
std::vector<NeuronReport> neuron_reports(const Associations& associations,
                                         const ConceptLibrary& library, const ClusterConfig& cfg);

struct InterpretResult {
  std::vector<ConceptCode> concepts;
  IdfVector idf;
  double peak_confidence = 0.0;
  std::vector<NeuronReport> reports;
};

// Full pipeline over the vision shared codes of every sample's valid patches.
InterpretResult interpret(const Checkpoint& ckpt, const std::vector<PairedSample>& dataset,
                          const ConceptLibrary& library, const ClusterConfig& cfg, int threads = 1);

std::string reports_to_json(const InterpretResult& result, const ClusterConfig& cfg);
// Columns: neuron, semantic (blank), purity, hits, interpretable, top terms.
std::string reports_to_table(const std::vector<NeuronReport>& reports, std::size_t top_terms = 5);

}  // namespace unisae
