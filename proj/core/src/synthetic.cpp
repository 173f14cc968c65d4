#include "unisae/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "unisae/base64.hpp"
#include "unisae/binary_io.hpp"
#include "unisae/error.hpp"

namespace unisae {

namespace {

void normalize_columns(Matrix& m) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c) * m(r, c);
    s = std::sqrt(s);
    for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) /= s;
  }
}

Matrix gaussian_columns(std::size_t d, std::size_t k, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(d, k);
  for (double& x : m.flat()) x = normal(rng);
  normalize_columns(m);
  return m;
}

// Modified Gram-Schmidt of `cols` against the fixed orthonormal `basis`
// columns and against each other.
void orthonormalize_against(const Matrix& basis, Matrix& cols) {
  const std::size_t d = cols.rows();
  for (std::size_t c = 0; c < cols.cols(); ++c) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t b = 0; b < basis.cols(); ++b) {
        double p = 0.0;
        for (std::size_t r = 0; r < d; ++r) p += basis(r, b) * cols(r, c);
        for (std::size_t r = 0; r < d; ++r) cols(r, c) -= p * basis(r, b);
      }
      for (std::size_t q = 0; q < c; ++q) {
        double p = 0.0;
        for (std::size_t r = 0; r < d; ++r) p += cols(r, q) * cols(r, c);
        for (std::size_t r = 0; r < d; ++r) cols(r, c) -= p * cols(r, q);
      }
    }
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) s += cols(r, c) * cols(r, c);
    s = std::sqrt(s);
    for (std::size_t r = 0; r < d; ++r) cols(r, c) /= s;
  }
}

void add_atom(std::span<double> token, const Matrix& dict, std::size_t atom, double coef) {
  for (std::size_t r = 0; r < token.size(); ++r) token[r] += coef * dict(r, atom);
}

}  // namespace

void SyntheticConfig::validate() const {
  if (n_samples == 0) throw InvalidArgument("n_samples must be positive");
  if (d < 2) throw InvalidArgument("d must be at least 2");
  if (grid_h == 0 || grid_w == 0 || text_tokens == 0)
    throw InvalidArgument("token counts must be positive");
  if (n_shared == 0 || k_active == 0 || k_active > n_shared)
    throw InvalidArgument("need 1 <= k_active <= n_shared");
  if (n_private > 0 && private_active > n_private)
    throw InvalidArgument("private_active exceeds n_private");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
    throw InvalidArgument("noise_sigma must be a nonnegative finite number");
  if (orthogonal && d < n_shared + n_private)
    throw InvalidArgument("orthogonal atoms need d >= n_shared + n_private");
}

std::pair<std::vector<PairedSample>, SyntheticGroundTruth> generate_synthetic(
    const SyntheticConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  SyntheticGroundTruth truth;
  truth.noise_sigma = cfg.noise_sigma;
  truth.shared_dictionary = gaussian_columns(cfg.d, cfg.n_shared, rng);
  truth.vision_private_dictionary = gaussian_columns(cfg.d, cfg.n_private, rng);
  truth.text_private_dictionary = gaussian_columns(cfg.d, cfg.n_private, rng);
  if (cfg.orthogonal) {
    orthonormalize_against(Matrix(cfg.d, 0), truth.shared_dictionary);
    orthonormalize_against(truth.shared_dictionary, truth.vision_private_dictionary);
    orthonormalize_against(truth.shared_dictionary, truth.text_private_dictionary);
  }

  std::uniform_real_distribution<double> coef(0.5, 1.5);
  std::normal_distribution<double> noise(0.0, 1.0);
  const std::size_t ta = cfg.vision_tokens();
  const std::size_t tb = cfg.text_tokens;
  const std::size_t ks = cfg.n_shared;
  const std::size_t kp = cfg.n_private;

  std::vector<std::size_t> all_atoms(ks);
  std::iota(all_atoms.begin(), all_atoms.end(), 0);
  std::vector<std::size_t> all_private(kp);
  std::iota(all_private.begin(), all_private.end(), 0);

  auto add_private = [&](std::span<double> token, std::span<double> code, const Matrix& dict) {
    if (kp == 0) return;
    std::shuffle(all_private.begin(), all_private.end(), rng);
    for (std::size_t q = 0; q < cfg.private_active; ++q) {
      const double c = coef(rng);
      add_atom(token, dict, all_private[q], c);
      code[all_private[q]] += c;
    }
  };
  auto add_noise = [&](std::span<double> token) {
    if (cfg.noise_sigma == 0.0) return;
    for (double& x : token) x += cfg.noise_sigma * noise(rng);
  };

  std::vector<PairedSample> samples;
  samples.reserve(cfg.n_samples);
  for (std::size_t n = 0; n < cfg.n_samples; ++n) {
    PlantedCodes planted;
    std::shuffle(all_atoms.begin(), all_atoms.end(), rng);
    planted.atoms.assign(all_atoms.begin(), all_atoms.begin() + static_cast<long>(cfg.k_active));
    std::vector<double> atom_scale(cfg.k_active);
    for (double& s : atom_scale) s = coef(rng);

    PairedSample sample;
    sample.id = "synth-" + std::to_string(n);

    // Object region.
    std::size_t r0 = 0, r1 = cfg.grid_h, c0 = 0, c1 = cfg.grid_w;
    if (cfg.plant_boxes) {
      std::uniform_int_distribution<std::size_t> hdist((cfg.grid_h + 3) / 4, (cfg.grid_h + 1) / 2);
      std::uniform_int_distribution<std::size_t> wdist((cfg.grid_w + 3) / 4, (cfg.grid_w + 1) / 2);
      const std::size_t bh = std::max<std::size_t>(1, hdist(rng));
      const std::size_t bw = std::max<std::size_t>(1, wdist(rng));
      r0 = std::uniform_int_distribution<std::size_t>(0, cfg.grid_h - bh)(rng);
      c0 = std::uniform_int_distribution<std::size_t>(0, cfg.grid_w - bw)(rng);
      r1 = r0 + bh;
      c1 = c0 + bw;
      sample.boxes.push_back({static_cast<double>(c0) / static_cast<double>(cfg.grid_w),
                              static_cast<double>(r0) / static_cast<double>(cfg.grid_h),
                              static_cast<double>(c1) / static_cast<double>(cfg.grid_w),
                              static_cast<double>(r1) / static_cast<double>(cfg.grid_h)});
    }

    Matrix vision(ta, cfg.d);
    planted.vision_shared = Matrix(ta, ks);
    planted.vision_private = Matrix(ta, kp);
    for (std::size_t p = 0; p < ta; ++p) {
      const std::size_t row = p / cfg.grid_w, col = p % cfg.grid_w;
      std::size_t slot = 0;
      bool has_shared = true;
      if (cfg.plant_boxes) {
        const bool inside = row >= r0 && row < r1 && col >= c0 && col < c1;
        if (!inside) {
          if (cfg.k_active == 1)
            has_shared = false;
          else
            slot = 1 + std::uniform_int_distribution<std::size_t>(0, cfg.k_active - 2)(rng);
        }
      } else {
        slot = std::uniform_int_distribution<std::size_t>(0, cfg.k_active - 1)(rng);
      }
      if (has_shared) {
        const double c = atom_scale[slot] * (0.8 + 0.4 * std::generate_canonical<double, 53>(rng));
        add_atom(vision.row(p), truth.shared_dictionary, planted.atoms[slot], c);
        planted.vision_shared(p, planted.atoms[slot]) = c;
      }
      add_private(vision.row(p), planted.vision_private.row(p), truth.vision_private_dictionary);
      add_noise(vision.row(p));
    }

    const std::size_t min_valid = std::min(cfg.k_active, tb);
    const std::size_t valid = std::uniform_int_distribution<std::size_t>(min_valid, tb)(rng);
    Matrix text(tb, cfg.d);
    std::vector<std::uint8_t> mask(tb, 0);
    planted.text_shared = Matrix(tb, ks);
    planted.text_private = Matrix(tb, kp);
    for (std::size_t j = 0; j < valid; ++j) {
      mask[j] = 1;
      const std::size_t slot = j % cfg.k_active;
      const double c = atom_scale[slot] * (0.8 + 0.4 * std::generate_canonical<double, 53>(rng));
      add_atom(text.row(j), truth.shared_dictionary, planted.atoms[slot], c);
      planted.text_shared(j, planted.atoms[slot]) = c;
      add_private(text.row(j), planted.text_private.row(j), truth.text_private_dictionary);
      add_noise(text.row(j));
    }

    sample.vision = ActivationSet::all_valid(Modality::kVision, std::move(vision));
    sample.text.modality = Modality::kText;
    sample.text.tokens = std::move(text);
    sample.text.valid_mask = std::move(mask);
    samples.push_back(std::move(sample));
    truth.planted_codes.push_back(std::move(planted));
  }
  return {std::move(samples), std::move(truth)};
}

void write_ground_truth(const std::string& path, const SyntheticConfig& cfg,
                        const SyntheticGroundTruth& truth) {
  auto dict = [](const Matrix& m) {
    return nlohmann::ordered_json{{"rows", m.rows()},
                                  {"cols", m.cols()},
                                  {"dtype", "f64"},
                                  {"data", base64::encode_f64(m.flat())}};
  };
  nlohmann::ordered_json j;
  j["version"] = 1;
  j["seed"] = cfg.seed;
  j["noise_sigma"] = truth.noise_sigma;
  j["shared_dictionary"] = dict(truth.shared_dictionary);
  j["vision_private_dictionary"] = dict(truth.vision_private_dictionary);
  j["text_private_dictionary"] = dict(truth.text_private_dictionary);
  auto& atoms = j["sample_atoms"] = nlohmann::ordered_json::array();
  for (const auto& p : truth.planted_codes) atoms.push_back(p.atoms);
  binary::write_text_file(path, j.dump(1) + "\n");
}

}  // namespace unisae

namespace unisae {

ConceptLibrary make_concept_library(const SyntheticConfig& cfg, const SyntheticGroundTruth& truth,
                                    std::size_t terms_per_family) {
  if (terms_per_family == 0) throw InvalidArgument("terms_per_family must be positive");
  const Matrix& dict = truth.shared_dictionary;
  const std::size_t k = dict.cols(), d = dict.rows();
  // Embedding space: one axis per family plus one spare axis per family for
  // the within-family spread.
  const std::size_t e = 2 * k;
  std::mt19937_64 rng(cfg.seed ^ 0x636f6e63657074ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> spread(-0.3, 0.3);
  ConceptLibrary lib;
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t t = 0; t < terms_per_family; ++t) {
      ConceptEntry entry;
      entry.term = "atom" + std::to_string(j) + "_" + std::to_string(t);
      Matrix tok(1, d);
      for (std::size_t r = 0; r < d; ++r) tok(0, r) = dict(r, j) + cfg.noise_sigma * normal(rng);
      entry.text_activations = ActivationSet::all_valid(Modality::kText, std::move(tok));
      Vector emb(e, 0.0);
      emb[j] = 1.0;
      emb[k + j] = spread(rng);
      const double n = norm(emb);
      for (double& x : emb) x /= n;
      entry.cluster_embedding = std::move(emb);
      lib.entries.push_back(std::move(entry));
    }
  }
  return lib;
}

}  // namespace unisae
