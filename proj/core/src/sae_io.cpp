#include "unisae/sae_io.hpp"

namespace unisae {

namespace {
constexpr char kMagic[4] = {'L', 'S', 'A', 'E'};
}

void put_sae(binary::Writer& w, const SaeConfig& cfg, const SaeParams& params) {
  params.check_shapes(cfg);
  w.put_bytes({kMagic, 4});
  w.put(kSaeFileVersion);
  for (std::size_t v : {cfg.d, cfg.n_shared, cfg.n_private, cfg.k_shared, cfg.k_private})
    w.put(static_cast<std::uint64_t>(v));
  params.for_each([&](std::string_view, std::span<const double> t) {
    for (double x : t) w.put(x);
  });
}

std::pair<SaeConfig, SaeParams> get_sae(binary::Reader& r) {
  if (r.get_bytes(4) != std::string_view(kMagic, 4))
    throw FormatError(FormatErrorKind::kBadMagic, "expected LSAE block");
  if (r.get<std::uint16_t>() != kSaeFileVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch, "LSAE");
  SaeConfig cfg;
  cfg.d = r.get<std::uint64_t>();
  cfg.n_shared = r.get<std::uint64_t>();
  cfg.n_private = r.get<std::uint64_t>();
  cfg.k_shared = r.get<std::uint64_t>();
  cfg.k_private = r.get<std::uint64_t>();
  try {
    cfg.validate();
  } catch (const UserError& e) {
    throw FormatError(FormatErrorKind::kMalformed, e.what());
  }
  const std::size_t values = cfg.d * (2 * cfg.n_shared + 2 * cfg.n_private + 1) + cfg.n_shared +
                             cfg.n_private;
  if (r.remaining() / 8 < values) throw FormatError(FormatErrorKind::kTruncated, "LSAE tensors");
  SaeParams params = SaeParams::zeros(cfg);
  params.for_each([&](std::string_view, std::span<double> t) {
    for (double& x : t) x = r.get<double>();
  });
  return {cfg, std::move(params)};
}

void save_sae(const std::string& path, const SaeConfig& cfg, const SaeParams& params) {
  binary::Writer w;
  put_sae(w, cfg, params);
  binary::write_file(path, w.bytes());
}

std::pair<SaeConfig, SaeParams> load_sae(const std::string& path) {
  const auto bytes = binary::read_file(path);
  binary::Reader r(bytes);
  auto out = get_sae(r);
  if (!r.at_end()) throw FormatError(FormatErrorKind::kMalformed, "trailing bytes after LSAE");
  return out;
}

}  // namespace unisae
