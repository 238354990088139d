#pragma once

#include <string>

namespace fbl {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

}  // namespace fbl
