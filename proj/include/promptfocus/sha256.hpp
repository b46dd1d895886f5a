#pragma once

#include <span>
#include <string>

namespace pf {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::span<const unsigned char> bytes);

}  // namespace pf
