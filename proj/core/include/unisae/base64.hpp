#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace unisae::base64 {

std::string encode(std::span<const std::uint8_t> bytes);
// Throws FormatError(kMalformed) on characters outside the standard alphabet.
std::vector<std::uint8_t> decode(std::string_view text);

// Little-endian float arrays as used by the concept-library JSON.
std::string encode_f32(std::span<const double> values);
std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f32(std::string_view text);
std::vector<double> decode_f64(std::string_view text);

}  // namespace unisae::base64
