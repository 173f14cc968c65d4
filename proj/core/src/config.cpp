#include "unisae/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "unisae/error.hpp"

namespace unisae {

namespace {

using KeyValues = std::map<std::string, std::pair<std::string, int>>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

KeyValues split_lines(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw InvalidArgument("config line " + std::to_string(lineno) + ": empty key or value");
    if (!out.emplace(key, std::make_pair(value, lineno)).second)
      throw InvalidArgument("config line " + std::to_string(lineno) + ": repeated key '" + key + "'");
  }
  return out;
}

// Consumes known keys; whatever remains afterwards is unknown.
class Fields {
 public:
  explicit Fields(KeyValues kv) : kv_(std::move(kv)) {}

  template <typename T>
  void read(const char* key, T& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return;
    const auto& [text, lineno] = it->second;
    if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1") out = true;
      else if (text == "false" || text == "0") out = false;
      else fail(key, lineno, text);
    } else {
      T value{};
      const auto* end = text.data() + text.size();
      const auto res = std::from_chars(text.data(), end, value);
      if (res.ec != std::errc() || res.ptr != end) fail(key, lineno, text);
      out = value;
    }
    kv_.erase(it);
  }

  bool take_string(const char* key, std::string& out) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return false;
    out = it->second.first;
    kv_.erase(it);
    return true;
  }

  void reject_unknown() const {
    if (!kv_.empty()) {
      const auto& [key, v] = *kv_.begin();
      throw InvalidArgument("config line " + std::to_string(v.second) + ": unknown key '" + key + "'");
    }
  }

 private:
  [[noreturn]] static void fail(const char* key, int lineno, const std::string& text) {
    throw InvalidArgument("config line " + std::to_string(lineno) + ": bad value '" + text +
                          "' for " + key);
  }
  KeyValues kv_;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* to_string(LrSchedule s) { return s == LrSchedule::kCosine ? "cosine" : "constant"; }

}  // namespace

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

TrainConfig parse_train_config(const std::string& text) {
  Fields f(split_lines(text));
  TrainConfig c;
  std::size_t d = 0, d_text = 0, n_shared = 0, n_private = 0, k_shared = 0, k_private = 0;
  f.read("d", d);
  d_text = d;
  f.read("d_text", d_text);
  f.read("n_shared", n_shared);
  f.read("n_private", n_private);
  f.read("k_shared", k_shared);
  f.read("k_private", k_private);
  c.model.vision = {d, n_shared, n_private, k_shared, k_private};
  c.model.text = {d_text, n_shared, n_private, k_shared, k_private};
  f.read("alpha", c.weights.alpha);
  f.read("beta_align", c.weights.beta_align);
  f.read("gamma_cross", c.weights.gamma_cross);
  f.read("epsilon", c.epsilon);
  f.read("sinkhorn_iters", c.sinkhorn_iters);
  f.read("sinkhorn_tol", c.sinkhorn_tol);
  std::string s;
  if (f.take_string("guidance_mode", s)) c.guidance.mode = parse_guidance_mode(s);
  f.read("lambda_global", c.guidance.lambda_global);
  f.read("mask_penalty", c.guidance.mask_penalty);
  f.read("batch_size", c.batch_size);
  f.read("steps", c.steps);
  f.read("lr", c.lr);
  f.read("weight_decay", c.weight_decay);
  f.read("seed", c.seed);
  if (f.take_string("lr_schedule", s)) {
    if (s == "constant") c.lr_schedule = LrSchedule::kConstant;
    else if (s == "cosine") c.lr_schedule = LrSchedule::kCosine;
    else throw InvalidArgument("unknown lr_schedule '" + s + "'");
  }
  f.reject_unknown();
  c.validate();
  return c;
}

SyntheticConfig parse_synthetic_config(const std::string& text) {
  Fields f(split_lines(text));
  SyntheticConfig c;
  f.read("n_samples", c.n_samples);
  f.read("grid_h", c.grid_h);
  f.read("grid_w", c.grid_w);
  f.read("text_tokens", c.text_tokens);
  f.read("d", c.d);
  f.read("n_shared", c.n_shared);
  f.read("n_private", c.n_private);
  f.read("k_active", c.k_active);
  f.read("private_active", c.private_active);
  f.read("noise_sigma", c.noise_sigma);
  f.read("seed", c.seed);
  f.read("plant_boxes", c.plant_boxes);
  f.read("orthogonal", c.orthogonal);
  f.reject_unknown();
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) { return parse_train_config(read_text(path)); }

SyntheticConfig load_synthetic_config(const std::string& path) {
  return parse_synthetic_config(read_text(path));
}

std::string format_train_config(const TrainConfig& c) {
  std::ostringstream o;
  const SaeConfig& v = c.model.vision;
  o << "d = " << v.d << "\n"
    << "d_text = " << c.model.text.d << "\n"
    << "n_shared = " << v.n_shared << "\n"
    << "n_private = " << v.n_private << "\n"
    << "k_shared = " << v.k_shared << "\n"
    << "k_private = " << v.k_private << "\n"
    << "alpha = " << format_double(c.weights.alpha) << "\n"
    << "beta_align = " << format_double(c.weights.beta_align) << "\n"
    << "gamma_cross = " << format_double(c.weights.gamma_cross) << "\n"
    << "epsilon = " << format_double(c.epsilon) << "\n"
    << "sinkhorn_iters = " << c.sinkhorn_iters << "\n"
    << "sinkhorn_tol = " << format_double(c.sinkhorn_tol) << "\n"
    << "guidance_mode = " << to_string(c.guidance.mode) << "\n"
    << "lambda_global = " << format_double(c.guidance.lambda_global) << "\n"
    << "mask_penalty = " << format_double(c.guidance.mask_penalty) << "\n"
    << "batch_size = " << c.batch_size << "\n"
    << "steps = " << c.steps << "\n"
    << "lr = " << format_double(c.lr) << "\n"
    << "weight_decay = " << format_double(c.weight_decay) << "\n"
    << "seed = " << c.seed << "\n"
    << "lr_schedule = " << to_string(c.lr_schedule) << "\n";
  return o.str();
}

std::string format_synthetic_config(const SyntheticConfig& c) {
  std::ostringstream o;
  o << "n_samples = " << c.n_samples << "\n"
    << "grid_h = " << c.grid_h << "\n"
    << "grid_w = " << c.grid_w << "\n"
    << "text_tokens = " << c.text_tokens << "\n"
    << "d = " << c.d << "\n"
    << "n_shared = " << c.n_shared << "\n"
    << "n_private = " << c.n_private << "\n"
    << "k_active = " << c.k_active << "\n"
    << "private_active = " << c.private_active << "\n"
    << "noise_sigma = " << format_double(c.noise_sigma) << "\n"
    << "seed = " << c.seed << "\n"
    << "plant_boxes = " << (c.plant_boxes ? "true" : "false") << "\n"
    << "orthogonal = " << (c.orthogonal ? "true" : "false") << "\n";
  return o.str();
}

}  // namespace unisae
