#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hbhc {

using Bytes = std::vector<std::uint8_t>;

std::string to_hex(std::span<const std::uint8_t> data);

// Returns nullopt on odd length or non-hex characters.
std::optional<Bytes> from_hex(std::string_view hex);

void put_be64(std::uint8_t* out, std::uint64_t v);
std::uint64_t get_be64(const std::uint8_t* in);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace hbhc
