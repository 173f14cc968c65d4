#include "unisae/error.hpp"

namespace unisae {

namespace {

const char* prefix(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kIo: return "io error";
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kVersionMismatch: return "version mismatch";
    case FormatErrorKind::kTruncated: return "truncated";
    case FormatErrorKind::kMalformed: return "malformed";
  }
  return "format error";
}

}  // namespace

FormatError::FormatError(FormatErrorKind kind, const std::string& what)
    : UserError(std::string(prefix(kind)) + (what.empty() ? "" : ": " + what)),
      kind_(kind) {}

}  // namespace unisae
