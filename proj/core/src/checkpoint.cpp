#include "unisae/binary_io.hpp"
#include "unisae/error.hpp"
#include "unisae/sae_io.hpp"
#include "unisae/trainer.hpp"

namespace unisae {

namespace {

constexpr char kMagic[4] = {'L', 'C', 'K', 'P'};

void put_config(binary::Writer& w, const TrainConfig& c) {
  for (const SaeConfig* s : {&c.model.vision, &c.model.text})
    for (std::size_t v : {s->d, s->n_shared, s->n_private, s->k_shared, s->k_private})
      w.put(static_cast<std::uint64_t>(v));
  w.put(c.weights.alpha);
  w.put(c.weights.beta_align);
  w.put(c.weights.gamma_cross);
  w.put(c.epsilon);
  w.put(static_cast<std::int32_t>(c.sinkhorn_iters));
  w.put(c.sinkhorn_tol);
  w.put(static_cast<std::uint8_t>(c.guidance.mode));
  w.put(c.guidance.lambda_global);
  w.put(c.guidance.mask_penalty);
  w.put(static_cast<std::uint64_t>(c.batch_size));
  w.put(static_cast<std::uint64_t>(c.steps));
  w.put(c.lr);
  w.put(c.weight_decay);
  w.put(c.seed);
  w.put(static_cast<std::uint8_t>(c.lr_schedule));
}

TrainConfig get_config(binary::Reader& r) {
  TrainConfig c;
  for (SaeConfig* s : {&c.model.vision, &c.model.text}) {
    s->d = r.get<std::uint64_t>();
    s->n_shared = r.get<std::uint64_t>();
    s->n_private = r.get<std::uint64_t>();
    s->k_shared = r.get<std::uint64_t>();
    s->k_private = r.get<std::uint64_t>();
  }
  c.weights.alpha = r.get<double>();
  c.weights.beta_align = r.get<double>();
  c.weights.gamma_cross = r.get<double>();
  c.epsilon = r.get<double>();
  c.sinkhorn_iters = r.get<std::int32_t>();
  c.sinkhorn_tol = r.get<double>();
  const auto mode = r.get<std::uint8_t>();
  if (mode > static_cast<std::uint8_t>(GuidanceMode::kBoth))
    throw FormatError(FormatErrorKind::kMalformed, "guidance mode");
  c.guidance.mode = static_cast<GuidanceMode>(mode);
  c.guidance.lambda_global = r.get<double>();
  c.guidance.mask_penalty = r.get<double>();
  c.batch_size = r.get<std::uint64_t>();
  c.steps = r.get<std::uint64_t>();
  c.lr = r.get<double>();
  c.weight_decay = r.get<double>();
  c.seed = r.get<std::uint64_t>();
  const auto schedule = r.get<std::uint8_t>();
  if (schedule > static_cast<std::uint8_t>(LrSchedule::kCosine))
    throw FormatError(FormatErrorKind::kMalformed, "lr schedule");
  c.lr_schedule = static_cast<LrSchedule>(schedule);
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  binary::Writer w;
  w.put_bytes({kMagic, 4});
  w.put(kCheckpointVersion);
  put_config(w, ckpt.config);
  w.put(ckpt.step);
  // Batch order is a pure function of (seed, step); this is the whole
  // sampler state.
  w.put(ckpt.config.seed);
  put_sae(w, ckpt.config.model.vision, ckpt.params.vision);
  put_sae(w, ckpt.config.model.text, ckpt.params.text);
  w.put(static_cast<std::uint32_t>(ckpt.adam.size()));
  for (const AdamState& s : ckpt.adam) {
    w.put(s.t);
    w.put(static_cast<std::uint64_t>(s.m.size()));
    for (double x : s.m) w.put(x);
    for (double x : s.v) w.put(x);
  }
  w.put(static_cast<std::uint64_t>(ckpt.history.size()));
  for (const LossBreakdown& l : ckpt.history)
    for (double x : {l.self_v, l.self_t, l.align, l.cross, l.total}) w.put(x);
  binary::write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto bytes = binary::read_file(path);
  binary::Reader r(bytes);
  if (bytes.size() < 4) throw FormatError(FormatErrorKind::kTruncated, "checkpoint header");
  if (r.get_bytes(4) != std::string_view(kMagic, 4))
    throw FormatError(FormatErrorKind::kBadMagic, path);
  if (r.get<std::uint16_t>() != kCheckpointVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch, "checkpoint");
  Checkpoint ckpt;
  ckpt.config = get_config(r);
  try {
    ckpt.config.validate();
  } catch (const UserError& e) {
    throw FormatError(FormatErrorKind::kMalformed, std::string("checkpoint config: ") + e.what());
  }
  ckpt.step = r.get<std::uint64_t>();
  if (r.get<std::uint64_t>() != ckpt.config.seed)
    throw FormatError(FormatErrorKind::kMalformed, "sampler seed differs from config");
  auto [cfg_v, params_v] = get_sae(r);
  auto [cfg_t, params_t] = get_sae(r);
  if (!(cfg_v == ckpt.config.model.vision) || !(cfg_t == ckpt.config.model.text))
    throw FormatError(FormatErrorKind::kMalformed, "SAE blocks disagree with config");
  ckpt.params = {std::move(params_v), std::move(params_t)};

  std::vector<std::size_t> sizes;
  ckpt.params.for_each([&](std::string_view, std::span<const double> s) { sizes.push_back(s.size()); });
  const auto n_states = r.get<std::uint32_t>();
  if (n_states != sizes.size())
    throw FormatError(FormatErrorKind::kMalformed, "optimizer state count");
  for (std::size_t k = 0; k < n_states; ++k) {
    AdamState s;
    s.t = r.get<std::uint64_t>();
    const auto n = r.get<std::uint64_t>();
    if (n != sizes[k]) throw FormatError(FormatErrorKind::kMalformed, "optimizer state size");
    if (r.remaining() / 16 < n) throw FormatError(FormatErrorKind::kTruncated, "optimizer state");
    s.m.resize(n);
    s.v.resize(n);
    for (double& x : s.m) x = r.get<double>();
    for (double& x : s.v) x = r.get<double>();
    ckpt.adam.push_back(std::move(s));
  }
  const auto n_hist = r.get<std::uint64_t>();
  if (r.remaining() / 40 < n_hist) throw FormatError(FormatErrorKind::kTruncated, "history");
  ckpt.history.resize(n_hist);
  for (auto& l : ckpt.history) {
    l.self_v = r.get<double>();
    l.self_t = r.get<double>();
    l.align = r.get<double>();
    l.cross = r.get<double>();
    l.total = r.get<double>();
  }
  if (!r.at_end()) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes in checkpoint");
  return ckpt;
}

}  // namespace unisae
