#include "unisae/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "unisae/config.hpp"
#include "unisae/error.hpp"
#include "unisae/parallel.hpp"

namespace unisae {

std::vector<ConceptCode> encode_concepts(const ConceptLibrary& library, const SaeParams& text_params,
                                         const SaeConfig& text_cfg) {
  if (library.entries.empty()) throw InvalidArgument("concept library is empty");
  library.validate();
  std::vector<ConceptCode> out;
  out.reserve(library.entries.size());
  for (const ConceptEntry& e : library.entries) {
    if (e.text_activations.dim() != text_cfg.d)
      throw DimensionError("concept '" + e.term + "' has d=" + std::to_string(e.text_activations.dim()) +
                           ", text model expects " + std::to_string(text_cfg.d));
    const CodeMatrix codes = encode_rows(e.text_activations.valid_tokens(), text_params, text_cfg);
    out.push_back({e.term, column_mean(codes.shared)});
  }
  return out;
}

IdfVector compute_idf(const std::vector<ConceptCode>& concepts) {
  if (concepts.empty()) throw InvalidArgument("compute_idf needs at least one concept");
  const std::size_t k = concepts.front().code.size();
  IdfVector out{Vector(k), std::vector<std::size_t>(k, 0), concepts.size()};
  for (const ConceptCode& c : concepts) {
    if (c.code.size() != k) throw DimensionError("concept codes of different widths");
    for (std::size_t m = 0; m < k; ++m)
      if (c.code[m] > 0.0) ++out.df[m];
  }
  const double n = static_cast<double>(concepts.size());
  for (std::size_t m = 0; m < k; ++m)
    out.idf[m] = std::log(n / static_cast<double>(std::max<std::size_t>(out.df[m], 1)));
  return out;
}

SpatialMatch spatial_match(const Matrix& image_codes, const ConceptCode& query, const IdfVector& idf) {
  const std::size_t k = query.code.size();
  if (image_codes.cols() != k || idf.idf.size() != k)
    throw DimensionError("spatial_match: image codes have " + std::to_string(image_codes.cols()) +
                         " dims, concept has " + std::to_string(k));
  if (image_codes.rows() == 0) throw InvalidArgument("spatial_match: image has no patches");
  SpatialMatch out;
  out.activation_map.assign(image_codes.rows(), 0.0);
  for (std::size_t p = 0; p < image_codes.rows(); ++p) {
    double s = 0.0;
    for (std::size_t m = 0; m < k; ++m) s += std::min(image_codes(p, m), query.code[m]) * idf.idf[m];
    out.activation_map[p] = s;
    if (s > out.activation_map[out.peak_patch]) out.peak_patch = p;
  }
  out.peak_score = out.activation_map[out.peak_patch];
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < k; ++m) {
    const double v = std::min(image_codes(out.peak_patch, m), query.code[m]) * idf.idf[m];
    if (v > best) {
      best = v;
      out.dominant_neuron = m;
    }
  }
  return out;
}

void ClusterConfig::validate() const {
  if (!(sigma > 0.0 && sigma < 1.0)) throw InvalidArgument("sigma must lie in (0,1)");
  if (!(purity_threshold > 0.0 && purity_threshold <= 1.0))
    throw InvalidArgument("purity_threshold must lie in (0,1]");
  if (peak_confidence && std::isnan(*peak_confidence))
    throw InvalidArgument("peak_confidence is NaN");
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Associations associate_concepts(const std::vector<Matrix>& image_codes,
                                const std::vector<ConceptCode>& concepts, const IdfVector& idf,
                                const ClusterConfig& cfg, int threads) {
  cfg.validate();
  const std::size_t nc = concepts.size();
  std::vector<SpatialMatch> matches(image_codes.size() * nc);
  parallel_for(image_codes.size(), threads, [&](std::size_t i) {
    for (std::size_t c = 0; c < nc; ++c) matches[i * nc + c] = spatial_match(image_codes[i], concepts[c], idf);
  });
  Associations out;
  if (cfg.peak_confidence) {
    out.peak_confidence = *cfg.peak_confidence;
  } else {
    std::vector<double> peaks;
    peaks.reserve(matches.size());
    for (const auto& m : matches) peaks.push_back(m.peak_score);
    out.peak_confidence = peaks.empty() ? 0.0 : percentile(std::move(peaks), 0.75);
  }
  for (std::size_t k = 0; k < matches.size(); ++k) {
    const SpatialMatch& m = matches[k];
    if (m.peak_score > out.peak_confidence)
      out.by_neuron[m.dominant_neuron].push_back({concepts[k % nc].term, m.peak_score});
  }
  return out;
}

std::vector<std::vector<std::size_t>> greedy_cluster(const std::vector<Vector>& embeddings,
                                                     double sigma) {
  struct Cluster {
    Vector sum;
    std::vector<std::size_t> members;
  };
  std::vector<Cluster> clusters;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    const Vector& e = embeddings[i];
    if (std::abs(norm(e) - 1.0) > 1e-6)
      throw InvalidArgument("greedy_cluster: embedding " + std::to_string(i) + " is not unit norm");
    Cluster* home = nullptr;
    for (Cluster& c : clusters) {
      if (c.sum.size() != e.size()) throw DimensionError("embeddings of different lengths");
      // cosine() normalizes, so the summed members act as the renormalized mean.
      if (cosine(c.sum, e) >= sigma) {
        home = &c;
        break;
      }
    }
    if (!home) {
      clusters.push_back({Vector(e.size(), 0.0), {}});
      home = &clusters.back();
    }
    axpy(1.0, e, home->sum);
    home->members.push_back(i);
  }
  std::stable_sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    return a.members.size() > b.members.size();
  });
  std::vector<std::vector<std::size_t>> out;
  out.reserve(clusters.size());
  for (auto& c : clusters) out.push_back(std::move(c.members));
  return out;
}

std::vector<NeuronReport> neuron_reports(const Associations& associations,
                                         const ConceptLibrary& library, const ClusterConfig& cfg) {
  cfg.validate();
  std::map<std::string, const Vector*> embedding;
  for (const auto& e : library.entries) embedding[e.term] = &e.cluster_embedding;

  std::vector<NeuronReport> out;
  for (const auto& [neuron, hits] : associations.by_neuron) {
    if (hits.size() < cfg.min_hits) continue;
    NeuronReport rep;
    rep.neuron = neuron;
    rep.total_hits = hits.size();
    std::map<std::string, ConceptSummary> per_term;
    for (const ConceptHit& h : hits) {
      auto& s = per_term[h.term];
      if (s.hit_count == 0) {
        s.term = h.term;
        s.peak_score = h.peak_score;
      }
      ++s.hit_count;
      s.peak_score = std::max(s.peak_score, h.peak_score);
    }
    for (auto& [term, s] : per_term) rep.concepts.push_back(s);
    std::stable_sort(rep.concepts.begin(), rep.concepts.end(),
                     [](const ConceptSummary& a, const ConceptSummary& b) {
                       if (a.hit_count != b.hit_count) return a.hit_count > b.hit_count;
                       return a.term < b.term;
                     });
    std::vector<Vector> vecs;
    for (const auto& s : rep.concepts) {
      const auto it = embedding.find(s.term);
      if (it == embedding.end()) throw InvalidArgument("concept '" + s.term + "' missing from library");
      vecs.push_back(*it->second);
    }
    for (const auto& cluster : greedy_cluster(vecs, cfg.sigma)) {
      std::vector<std::string> terms;
      for (std::size_t i : cluster) terms.push_back(rep.concepts[i].term);
      rep.clusters.push_back(std::move(terms));
    }
    rep.purity = static_cast<double>(rep.clusters.front().size()) /
                 static_cast<double>(rep.concepts.size());
    rep.interpretable = rep.purity >= cfg.purity_threshold && rep.total_hits >= cfg.min_hits;
    out.push_back(std::move(rep));
  }
  return out;
}

InterpretResult interpret(const Checkpoint& ckpt, const std::vector<PairedSample>& dataset,
                          const ConceptLibrary& library, const ClusterConfig& cfg, int threads) {
  const ModelConfig& mc = ckpt.config.model;
  if (dataset.empty()) throw InvalidArgument("empty dataset");
  InterpretResult res;
  res.concepts = encode_concepts(library, ckpt.params.text, mc.text);
  res.idf = compute_idf(res.concepts);
  std::vector<Matrix> image_codes(dataset.size());
  for (const auto& s : dataset)
    if (s.vision.dim() != mc.vision.d)
      throw DimensionError("vision activations have d=" + std::to_string(s.vision.dim()) +
                           ", model expects " + std::to_string(mc.vision.d));
  parallel_for(dataset.size(), threads, [&](std::size_t n) {
    image_codes[n] = encode_rows(dataset[n].vision.valid_tokens(), ckpt.params.vision, mc.vision).shared;
  });
  const Associations assoc = associate_concepts(image_codes, res.concepts, res.idf, cfg, threads);
  res.peak_confidence = assoc.peak_confidence;
  res.reports = neuron_reports(assoc, library, cfg);
  return res;
}

std::string reports_to_json(const InterpretResult& result, const ClusterConfig& cfg) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["format"] = "unisae-neuron-reports";
  j["version"] = 1;
  j["settings"] = {{"sigma", cfg.sigma},
                   {"purity_threshold", cfg.purity_threshold},
                   {"min_hits", cfg.min_hits},
                   {"peak_confidence", result.peak_confidence}};
  ordered_json idf = ordered_json::array();
  for (std::size_t m = 0; m < result.idf.idf.size(); ++m)
    idf.push_back({{"neuron", m}, {"df", result.idf.df[m]}, {"idf", result.idf.idf[m]}});
  j["idf"] = std::move(idf);
  ordered_json reports = ordered_json::array();
  for (const NeuronReport& r : result.reports) {
    ordered_json concepts = ordered_json::array();
    for (const auto& c : r.concepts)
      concepts.push_back({{"term", c.term}, {"hit_count", c.hit_count}, {"peak_score", c.peak_score}});
    reports.push_back({{"neuron", r.neuron},
                       {"semantic", ""},
                       {"total_hits", r.total_hits},
                       {"purity", r.purity},
                       {"interpretable", r.interpretable},
                       {"concepts", std::move(concepts)},
                       {"clusters", r.clusters}});
  }
  j["reports"] = std::move(reports);
  return j.dump(2) + "\n";
}

std::string reports_to_table(const std::vector<NeuronReport>& reports, std::size_t top_terms) {
  std::ostringstream o;
  o << "neuron\tsemantic\tpurity\thits\tinterpretable\ttop_terms\n";
  for (const NeuronReport& r : reports) {
    char purity[32];
    std::snprintf(purity, sizeof purity, "%.3f", r.purity);
    o << r.neuron << "\t\t" << purity << "\t" << r.total_hits << "\t"
      << (r.interpretable ? "yes" : "no") << "\t";
    for (std::size_t i = 0; i < r.concepts.size() && i < top_terms; ++i)
      o << (i ? ", " : "") << r.concepts[i].term;
    o << "\n";
  }
  return o.str();
}

}  // namespace unisae
