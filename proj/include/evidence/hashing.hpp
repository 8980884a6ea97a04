#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace evidence {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

std::string base64_encode(std::string_view data);

/// Stable 64-bit seed for one record, derived from the run seed and the
/// record id so that serial and parallel runs draw identical streams.
std::uint64_t record_seed(std::uint64_t seed, std::string_view record_id);

} // namespace evidence
