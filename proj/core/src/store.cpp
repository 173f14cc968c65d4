#include "unisae/store.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "unisae/base64.hpp"
#include "unisae/binary_io.hpp"
#include "unisae/error.hpp"

namespace unisae {

namespace binary {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, "write failed for " + path);
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot open " + path + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, "write failed for " + path);
}

}  // namespace binary

namespace {

constexpr char kMagic[4] = {'L', 'A', 'C', 'T'};

void put_activation_set(binary::Writer& w, const ActivationSet& set) {
  w.put(static_cast<std::uint32_t>(set.num_tokens()));
  w.put(static_cast<std::uint32_t>(set.dim()));
  std::string packed((set.num_tokens() + 7) / 8, '\0');
  for (std::size_t t = 0; t < set.num_tokens(); ++t)
    if (set.valid_mask[t]) packed[t / 8] = static_cast<char>(packed[t / 8] | (1u << (t % 8)));
  w.put_bytes(packed);
  for (double x : set.tokens.flat()) w.put(static_cast<float>(x));
}

ActivationSet get_activation_set(binary::Reader& r, Modality modality) {
  const auto rows = r.get<std::uint32_t>();
  const auto cols = r.get<std::uint32_t>();
  if (rows == 0 || cols == 0)
    throw FormatError(FormatErrorKind::kMalformed, "zero-sized activation set");
  ActivationSet set;
  set.modality = modality;
  const auto* packed = r.raw((rows + 7) / 8);
  set.valid_mask.resize(rows);
  for (std::size_t t = 0; t < rows; ++t) set.valid_mask[t] = (packed[t / 8] >> (t % 8)) & 1u;
  // Size check before allocating so a corrupt header cannot request gigabytes.
  if (r.remaining() / 4 < static_cast<std::size_t>(rows) * cols)
    throw FormatError(FormatErrorKind::kTruncated, "activation payload");
  set.tokens = Matrix(rows, cols);
  for (double& x : set.tokens.flat()) x = r.get<float>();
  return set;
}

GridShape infer_grid(std::size_t tokens) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (side * side == tokens) return {side, side};
  return {1, tokens};
}

}  // namespace

const char* to_string(Modality m) { return m == Modality::kVision ? "vision" : "text"; }

std::size_t ActivationSet::num_valid() const {
  std::size_t n = 0;
  for (auto v : valid_mask) n += v ? 1 : 0;
  return n;
}

Matrix ActivationSet::valid_tokens() const {
  Matrix out(num_valid(), dim());
  std::size_t k = 0;
  for (std::size_t t = 0; t < num_tokens(); ++t) {
    if (!valid_mask[t]) continue;
    auto src = tokens.row(t);
    std::copy(src.begin(), src.end(), out.row(k++).begin());
  }
  return out;
}

void ActivationSet::validate() const {
  if (tokens.rows() == 0 || tokens.cols() == 0)
    throw InvalidArgument("activation set must have T >= 1 and d >= 1");
  if (valid_mask.size() != tokens.rows())
    throw InvalidArgument("valid_mask length differs from token count");
  if (!tokens.all_finite()) throw InvalidArgument("non-finite activation");
  if (num_valid() == 0) throw InvalidArgument("activation set has no valid token");
}

ActivationSet ActivationSet::all_valid(Modality m, Matrix tokens) {
  ActivationSet set;
  set.modality = m;
  set.valid_mask.assign(tokens.rows(), 1);
  set.tokens = std::move(tokens);
  return set;
}

void Box::validate() const {
  if (!(x0 >= 0.0 && y0 >= 0.0 && x1 <= 1.0 && y1 <= 1.0 && x0 < x1 && y0 < y1))
    throw InvalidArgument("box must satisfy 0 <= x0 < x1 <= 1 and 0 <= y0 < y1 <= 1");
}

void PairedSample::validate() const {
  if (vision.modality != Modality::kVision) throw InvalidArgument("vision set has text modality");
  if (text.modality != Modality::kText) throw InvalidArgument("text set has vision modality");
  vision.validate();
  text.validate();
  for (const Box& b : boxes) b.validate();
}

std::string manifest_path(const std::string& activation_path) {
  return activation_path + ".json";
}

void write_activation_file(const std::string& path, const std::vector<PairedSample>& samples,
                           GridShape grid) {
  if (samples.empty()) throw InvalidArgument("empty dataset");
  for (const auto& s : samples) s.validate();
  if (grid.cells() == 0) grid = infer_grid(samples.front().vision.num_tokens());

  binary::Writer w;
  w.put_bytes({kMagic, 4});
  w.put(kActivationFileVersion);
  w.put(static_cast<std::uint32_t>(samples.size()));
  for (const auto& s : samples) {
    w.put_string(s.id);
    put_activation_set(w, s.vision);
    put_activation_set(w, s.text);
    w.put(static_cast<std::uint32_t>(s.boxes.size()));
    for (const Box& b : s.boxes) {
      w.put(static_cast<float>(b.x0));
      w.put(static_cast<float>(b.y0));
      w.put(static_cast<float>(b.x1));
      w.put(static_cast<float>(b.y1));
    }
  }
  binary::write_file(path, w.bytes());

  nlohmann::ordered_json manifest;
  manifest["version"] = kActivationFileVersion;
  manifest["n_samples"] = samples.size();
  manifest["d"] = samples.front().vision.dim();
  manifest["d_text"] = samples.front().text.dim();
  manifest["grid_h"] = grid.height;
  manifest["grid_w"] = grid.width;
  binary::write_text_file(manifest_path(path), manifest.dump(2) + "\n");
}

std::vector<PairedSample> read_activation_file(const std::string& path) {
  const auto bytes = binary::read_file(path);
  binary::Reader r(bytes);
  if (bytes.size() < 4) throw FormatError(FormatErrorKind::kTruncated, "header");
  if (r.get_bytes(4) != std::string_view(kMagic, 4))
    throw FormatError(FormatErrorKind::kBadMagic, path);
  const auto version = r.get<std::uint16_t>();
  if (version != kActivationFileVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      "expected " + std::to_string(kActivationFileVersion) + ", found " +
                          std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<PairedSample> samples;
  samples.reserve(std::min<std::size_t>(count, 1u << 16));
  for (std::uint32_t n = 0; n < count; ++n) {
    PairedSample s;
    s.id = r.get_string();
    s.vision = get_activation_set(r, Modality::kVision);
    s.text = get_activation_set(r, Modality::kText);
    const auto nbox = r.get<std::uint32_t>();
    for (std::uint32_t b = 0; b < nbox; ++b) {
      Box box;
      box.x0 = r.get<float>();
      box.y0 = r.get<float>();
      box.x1 = r.get<float>();
      box.y1 = r.get<float>();
      s.boxes.push_back(box);
    }
    samples.push_back(std::move(s));
  }
  if (!r.at_end()) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes");
  return samples;
}

DatasetManifest read_manifest(const std::string& activation_path) {
  const auto bytes = binary::read_file(manifest_path(activation_path));
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("manifest: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.version = j.at("version").get<std::uint16_t>();
    m.n_samples = j.at("n_samples").get<std::size_t>();
    m.d = j.at("d").get<std::size_t>();
    m.d_text = j.value("d_text", m.d);
    m.grid_h = j.at("grid_h").get<std::size_t>();
    m.grid_w = j.at("grid_w").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("manifest: ") + e.what());
  }
  if (m.version != kActivationFileVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch, "manifest");
  return m;
}

Matrix quantize_f32(const Matrix& m) {
  Matrix out = m;
  for (double& x : out.flat()) x = static_cast<float>(x);
  return out;
}

void ConceptLibrary::validate() const {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.term).second) throw InvalidArgument("duplicate concept term: " + e.term);
    if (e.text_activations.modality != Modality::kText)
      throw InvalidArgument("concept activations must be text: " + e.term);
    e.text_activations.validate();
    if (e.cluster_embedding.empty() || std::abs(norm(e.cluster_embedding) - 1.0) > 1e-6)
      throw InvalidArgument("cluster embedding is not unit norm: " + e.term);
  }
}

void write_concept_library(const std::string& path, const ConceptLibrary& library) {
  library.validate();
  nlohmann::ordered_json j;
  j["format"] = "unisae-concepts";
  j["version"] = 1;
  j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : library.entries) {
    nlohmann::ordered_json entry;
    entry["term"] = e.term;
    entry["tokens"] = {{"rows", e.text_activations.num_tokens()},
                       {"cols", e.text_activations.dim()},
                       {"dtype", "f32"},
                       {"data", base64::encode_f32(e.text_activations.tokens.flat())}};
    entry["valid_mask"] = e.text_activations.valid_mask;
    entry["embedding"] = {{"dtype", "f64"}, {"data", base64::encode_f64(e.cluster_embedding)}};
    j["entries"].push_back(std::move(entry));
  }
  binary::write_text_file(path, j.dump(1) + "\n");
}

namespace {

std::vector<double> decode_array(const nlohmann::json& blob) {
  const auto dtype = blob.at("dtype").get<std::string>();
  const auto data = blob.at("data").get<std::string>();
  if (dtype == "f32") return base64::decode_f32(data);
  if (dtype == "f64") return base64::decode_f64(data);
  throw FormatError(FormatErrorKind::kMalformed, "unknown dtype " + dtype);
}

}  // namespace

ConceptLibrary read_concept_library(const std::string& path) {
  const auto bytes = binary::read_file(path);
  ConceptLibrary lib;
  try {
    const auto j = nlohmann::json::parse(bytes.begin(), bytes.end());
    if (j.at("version").get<int>() != 1)
      throw FormatError(FormatErrorKind::kVersionMismatch, "concept library");
    for (const auto& entry : j.at("entries")) {
      ConceptEntry e;
      e.term = entry.at("term").get<std::string>();
      const auto& tok = entry.at("tokens");
      const auto rows = tok.at("rows").get<std::size_t>();
      const auto cols = tok.at("cols").get<std::size_t>();
      const auto values = decode_array(tok);
      if (values.size() != rows * cols)
        throw FormatError(FormatErrorKind::kMalformed, "token payload size for " + e.term);
      Matrix m(rows, cols);
      std::copy(values.begin(), values.end(), m.flat().begin());
      e.text_activations.modality = Modality::kText;
      e.text_activations.tokens = std::move(m);
      e.text_activations.valid_mask = entry.at("valid_mask").get<std::vector<std::uint8_t>>();
      e.cluster_embedding = decode_array(entry.at("embedding"));
      lib.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("concept library: ") + e.what());
  }
  lib.validate();
  return lib;
}

}  // namespace unisae
