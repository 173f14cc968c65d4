#pragma once

#include <string>

#include "unisae/binary_io.hpp"
#include "unisae/sae.hpp"

namespace unisae {

inline constexpr std::uint16_t kSaeFileVersion = 1;

// "LSAE" block: magic, u16 version, config as five u64, then every tensor of
// SaeParams in declared order as little-endian f64.
void put_sae(binary::Writer& w, const SaeConfig& cfg, const SaeParams& params);
std::pair<SaeConfig, SaeParams> get_sae(binary::Reader& r);

void save_sae(const std::string& path, const SaeConfig& cfg, const SaeParams& params);
std::pair<SaeConfig, SaeParams> load_sae(const std::string& path);

}  // namespace unisae
