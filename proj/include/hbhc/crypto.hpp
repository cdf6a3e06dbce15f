#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>

#include "hbhc/bytes.hpp"

namespace hbhc {

using Digest = std::array<std::uint8_t, 32>;

// 32-byte secret interpreted as a scalar; nonzero and below the secp256k1
// group order. Construct through scalar_from_bytes so the invariant holds.
struct SecretScalar {
  std::array<std::uint8_t, 32> bytes{};
  bool operator==(const SecretScalar&) const = default;
};

// Affine point, serialized as raw x||y (64 bytes, no prefix byte).
struct PublicPoint {
  std::array<std::uint8_t, 32> x{};
  std::array<std::uint8_t, 32> y{};

  std::array<std::uint8_t, 64> serialize() const;
  static PublicPoint from_bytes(std::span<const std::uint8_t, 64> raw);
  bool operator==(const PublicPoint&) const = default;
};

// ECDSA signature, raw r||s (64 bytes). s is kept in the low half of the
// group order; verify() refuses high-s encodings.
struct Signature {
  std::array<std::uint8_t, 32> r{};
  std::array<std::uint8_t, 32> s{};

  std::array<std::uint8_t, 64> serialize() const;
  static Signature from_bytes(std::span<const std::uint8_t, 64> raw);
  bool operator==(const Signature&) const = default;
};

Digest hash(std::span<const std::uint8_t> data);
Digest hash(std::string_view data);

// HMAC-SHA256(key, label). Throws std::invalid_argument on an empty key.
std::array<std::uint8_t, 32> kdf(std::span<const std::uint8_t> key,
                                 std::span<const std::uint8_t> label);
std::array<std::uint8_t, 32> kdf(std::span<const std::uint8_t> key,
                                 std::string_view label);

// Maps 32 candidate bytes to a valid scalar. A candidate that reduces to
// zero mod the group order is re-derived via kdf(candidate, context || ctr)
// with ctr = 1,2,... (single byte); gives up after 255 retries.
SecretScalar scalar_from_bytes(const std::array<std::uint8_t, 32>& candidate,
                               std::string_view context);

PublicPoint keypair(const SecretScalar& sk);

// True iff the coordinates satisfy the curve equation (and are not the
// point at infinity).
bool is_valid_point(const PublicPoint& pk);

// Deterministic ECDSA over SHA-256(message) with RFC 6979 nonces, low-s.
Signature sign(const SecretScalar& sk, std::span<const std::uint8_t> message);

// Accept iff sig is a valid low-s ECDSA signature on SHA-256(message) under
// pk. Malformed points or out-of-range scalars reject, never throw.
bool verify(const PublicPoint& pk, std::span<const std::uint8_t> message,
            const Signature& sig);

// Process-wide tallies of signature operations, for cost accounting.
struct CryptoOpCounts {
  std::uint64_t signs = 0;
  std::uint64_t verifies = 0;
};
CryptoOpCounts crypto_op_counts();
void reset_crypto_op_counts();

}  // namespace hbhc
