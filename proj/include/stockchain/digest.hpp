#pragma once

#include <string>
#include <string_view>

namespace stockchain {

// Lowercase hex SHA-256 of the bytes of `data`. Used to key replay fixtures
// and to stamp run configurations.
std::string sha256_hex(std::string_view data);

}  // namespace stockchain
