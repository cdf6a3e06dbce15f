#include "hbhc/crypto.hpp"

#include <openssl/bn.h>
#include <openssl/ec.h>
#include <openssl/hmac.h>
#include <openssl/obj_mac.h>
#include <openssl/sha.h>

#include <atomic>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace hbhc {

namespace {

struct BnDeleter {
  void operator()(BIGNUM* p) const { BN_free(p); }
};
struct CtxDeleter {
  void operator()(BN_CTX* p) const { BN_CTX_free(p); }
};
struct PointDeleter {
  void operator()(EC_POINT* p) const { EC_POINT_free(p); }
};
using BnPtr = std::unique_ptr<BIGNUM, BnDeleter>;
using CtxPtr = std::unique_ptr<BN_CTX, CtxDeleter>;
using PointPtr = std::unique_ptr<EC_POINT, PointDeleter>;

// Shared read-only curve context: the group and a few derived constants.
// OpenSSL EC_GROUP is safe for concurrent read-only use.
struct Curve {
  EC_GROUP* group;
  BIGNUM* order;
  BIGNUM* half_order;

  Curve() {
    group = EC_GROUP_new_by_curve_name(NID_secp256k1);
    if (!group) throw std::runtime_error("secp256k1 group unavailable");
    order = BN_new();
    half_order = BN_new();
    CtxPtr ctx(BN_CTX_new());
    if (!EC_GROUP_get_order(group, order, ctx.get()))
      throw std::runtime_error("curve order unavailable");
    BN_rshift1(half_order, order);
  }
};

const Curve& curve() {
  static const Curve c;
  return c;
}

BnPtr bn_from(std::span<const std::uint8_t> b) {
  return BnPtr(BN_bin2bn(b.data(), static_cast<int>(b.size()), nullptr));
}

std::array<std::uint8_t, 32> bn_to32(const BIGNUM* v) {
  std::array<std::uint8_t, 32> out{};
  if (BN_bn2binpad(v, out.data(), 32) != 32)
    throw std::runtime_error("scalar too large for 32 bytes");
  return out;
}

std::array<std::uint8_t, 32> hmac_sha256(std::span<const std::uint8_t> key,
                                         std::span<const std::uint8_t> data) {
  std::array<std::uint8_t, 32> out{};
  unsigned int len = 0;
  if (!HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), data.data(),
            data.size(), out.data(), &len) ||
      len != 32)
    throw std::runtime_error("hmac failure");
  return out;
}

// RFC 6979 HMAC-DRBG nonce stream for a 256-bit order and SHA-256 digests
// (bits2int is the identity in this configuration).
class NonceStream {
 public:
  NonceStream(const std::array<std::uint8_t, 32>& x,
              const std::array<std::uint8_t, 32>& h1) {
    v_.fill(0x01);
    k_.fill(0x00);

    BnPtr z(bn_from(h1));
    CtxPtr ctx(BN_CTX_new());
    BN_mod(z.get(), z.get(), curve().order, ctx.get());
    std::array<std::uint8_t, 32> h1_mod = bn_to32(z.get());

    std::array<std::uint8_t, 97> block{};
    std::memcpy(block.data(), v_.data(), 32);
    block[32] = 0x00;
    std::memcpy(block.data() + 33, x.data(), 32);
    std::memcpy(block.data() + 65, h1_mod.data(), 32);
    k_ = hmac_sha256(k_, block);
    v_ = hmac_sha256(k_, v_);
    std::memcpy(block.data(), v_.data(), 32);
    block[32] = 0x01;
    k_ = hmac_sha256(k_, block);
    v_ = hmac_sha256(k_, v_);
  }

  // Next candidate k in [1, order).
  BnPtr next() {
    for (;;) {
      v_ = hmac_sha256(k_, v_);
      BnPtr k(bn_from(v_));
      if (!BN_is_zero(k.get()) && BN_cmp(k.get(), curve().order) < 0) return k;
      step();
    }
  }

  // Advance the chain after an unusable candidate (r or s was zero).
  void step() {
    std::array<std::uint8_t, 33> block{};
    std::memcpy(block.data(), v_.data(), 32);
    block[32] = 0x00;
    k_ = hmac_sha256(k_, block);
    v_ = hmac_sha256(k_, v_);
  }

 private:
  std::array<std::uint8_t, 32> v_{};
  std::array<std::uint8_t, 32> k_{};
};

}  // namespace

std::array<std::uint8_t, 64> PublicPoint::serialize() const {
  std::array<std::uint8_t, 64> out;
  std::memcpy(out.data(), x.data(), 32);
  std::memcpy(out.data() + 32, y.data(), 32);
  return out;
}

PublicPoint PublicPoint::from_bytes(std::span<const std::uint8_t, 64> raw) {
  PublicPoint p;
  std::memcpy(p.x.data(), raw.data(), 32);
  std::memcpy(p.y.data(), raw.data() + 32, 32);
  return p;
}

std::array<std::uint8_t, 64> Signature::serialize() const {
  std::array<std::uint8_t, 64> out;
  std::memcpy(out.data(), r.data(), 32);
  std::memcpy(out.data() + 32, s.data(), 32);
  return out;
}

Signature Signature::from_bytes(std::span<const std::uint8_t, 64> raw) {
  Signature sig;
  std::memcpy(sig.r.data(), raw.data(), 32);
  std::memcpy(sig.s.data(), raw.data() + 32, 32);
  return sig;
}

Digest hash(std::span<const std::uint8_t> data) {
  Digest out;
  SHA256(data.data(), data.size(), out.data());
  return out;
}

Digest hash(std::string_view data) { return hash(as_bytes(data)); }

std::array<std::uint8_t, 32> kdf(std::span<const std::uint8_t> key,
                                 std::span<const std::uint8_t> label) {
  if (key.empty()) throw std::invalid_argument("kdf: empty key");
  return hmac_sha256(key, label);
}

std::array<std::uint8_t, 32> kdf(std::span<const std::uint8_t> key,
                                 std::string_view label) {
  return kdf(key, as_bytes(label));
}

SecretScalar scalar_from_bytes(const std::array<std::uint8_t, 32>& candidate,
                               std::string_view context) {
  CtxPtr ctx(BN_CTX_new());
  std::array<std::uint8_t, 32> cur = candidate;
  for (int attempt = 0; attempt <= 255; ++attempt) {
    BnPtr v(bn_from(cur));
    BN_mod(v.get(), v.get(), curve().order, ctx.get());
    if (!BN_is_zero(v.get())) return SecretScalar{bn_to32(v.get())};
    Bytes label(context.begin(), context.end());
    label.push_back(static_cast<std::uint8_t>(attempt + 1));
    cur = kdf(cur, std::span<const std::uint8_t>(label));
  }
  throw std::runtime_error("scalar_from_bytes: no valid scalar in 255 retries");
}

PublicPoint keypair(const SecretScalar& sk) {
  const Curve& c = curve();
  CtxPtr ctx(BN_CTX_new());
  BnPtr d(bn_from(sk.bytes));
  PointPtr p(EC_POINT_new(c.group));
  if (!EC_POINT_mul(c.group, p.get(), d.get(), nullptr, nullptr, ctx.get()))
    throw std::runtime_error("point multiplication failed");
  BnPtr px(BN_new()), py(BN_new());
  if (!EC_POINT_get_affine_coordinates(c.group, p.get(), px.get(), py.get(),
                                       ctx.get()))
    throw std::runtime_error("affine conversion failed");
  PublicPoint out;
  out.x = bn_to32(px.get());
  out.y = bn_to32(py.get());
  return out;
}

bool is_valid_point(const PublicPoint& pk) {
  const Curve& c = curve();
  CtxPtr ctx(BN_CTX_new());
  BnPtr qx(bn_from(pk.x)), qy(bn_from(pk.y));
  PointPtr q(EC_POINT_new(c.group));
  if (!EC_POINT_set_affine_coordinates(c.group, q.get(), qx.get(), qy.get(),
                                       ctx.get()))
    return false;
  return !EC_POINT_is_at_infinity(c.group, q.get());
}

namespace {
std::atomic<std::uint64_t> g_signs{0};
std::atomic<std::uint64_t> g_verifies{0};
}  // namespace

CryptoOpCounts crypto_op_counts() {
  return {g_signs.load(std::memory_order_relaxed),
          g_verifies.load(std::memory_order_relaxed)};
}

void reset_crypto_op_counts() {
  g_signs.store(0, std::memory_order_relaxed);
  g_verifies.store(0, std::memory_order_relaxed);
}

Signature sign(const SecretScalar& sk, std::span<const std::uint8_t> message) {
  g_signs.fetch_add(1, std::memory_order_relaxed);
  const Curve& c = curve();
  CtxPtr ctx(BN_CTX_new());
  Digest h1 = hash(message);

  BnPtr z(bn_from(h1));
  BN_mod(z.get(), z.get(), c.order, ctx.get());
  BnPtr d(bn_from(sk.bytes));

  NonceStream nonces(sk.bytes, h1);
  BnPtr r(BN_new()), s(BN_new()), tmp(BN_new());
  PointPtr R(EC_POINT_new(c.group));
  for (;;) {
    BnPtr k = nonces.next();
    if (!EC_POINT_mul(c.group, R.get(), k.get(), nullptr, nullptr, ctx.get()))
      throw std::runtime_error("point multiplication failed");
    BnPtr rx(BN_new()), ry(BN_new());
    EC_POINT_get_affine_coordinates(c.group, R.get(), rx.get(), ry.get(),
                                    ctx.get());
    BN_mod(r.get(), rx.get(), c.order, ctx.get());
    if (BN_is_zero(r.get())) {
      nonces.step();
      continue;
    }
    // s = k^-1 (z + r d) mod n
    BN_mod_mul(tmp.get(), r.get(), d.get(), c.order, ctx.get());
    BN_mod_add(tmp.get(), tmp.get(), z.get(), c.order, ctx.get());
    BnPtr kinv(BN_mod_inverse(nullptr, k.get(), c.order, ctx.get()));
    BN_mod_mul(s.get(), kinv.get(), tmp.get(), c.order, ctx.get());
    if (BN_is_zero(s.get())) {
      nonces.step();
      continue;
    }
    if (BN_cmp(s.get(), c.half_order) > 0) BN_sub(s.get(), c.order, s.get());
    Signature sig;
    sig.r = bn_to32(r.get());
    sig.s = bn_to32(s.get());
    return sig;
  }
}

bool verify(const PublicPoint& pk, std::span<const std::uint8_t> message,
            const Signature& sig) {
  g_verifies.fetch_add(1, std::memory_order_relaxed);
  const Curve& c = curve();
  CtxPtr ctx(BN_CTX_new());

  BnPtr r(bn_from(sig.r)), s(bn_from(sig.s));
  if (BN_is_zero(r.get()) || BN_is_zero(s.get())) return false;
  if (BN_cmp(r.get(), c.order) >= 0) return false;
  if (BN_cmp(s.get(), c.order) >= 0) return false;
  if (BN_cmp(s.get(), c.half_order) > 0) return false;  // low-s only

  BnPtr qx(bn_from(pk.x)), qy(bn_from(pk.y));
  PointPtr q(EC_POINT_new(c.group));
  // Rejects coordinates that do not satisfy the curve equation.
  if (!EC_POINT_set_affine_coordinates(c.group, q.get(), qx.get(), qy.get(),
                                       ctx.get()))
    return false;
  if (EC_POINT_is_at_infinity(c.group, q.get())) return false;

  Digest h1 = hash(message);
  BnPtr z(bn_from(h1));
  BN_mod(z.get(), z.get(), c.order, ctx.get());

  BnPtr w(BN_mod_inverse(nullptr, s.get(), c.order, ctx.get()));
  if (!w) return false;
  BnPtr u1(BN_new()), u2(BN_new());
  BN_mod_mul(u1.get(), z.get(), w.get(), c.order, ctx.get());
  BN_mod_mul(u2.get(), r.get(), w.get(), c.order, ctx.get());

  PointPtr point(EC_POINT_new(c.group));
  if (!EC_POINT_mul(c.group, point.get(), u1.get(), q.get(), u2.get(),
                    ctx.get()))
    return false;
  if (EC_POINT_is_at_infinity(c.group, point.get())) return false;

  BnPtr rx(BN_new()), ry(BN_new());
  EC_POINT_get_affine_coordinates(c.group, point.get(), rx.get(), ry.get(),
                                  ctx.get());
  BN_mod(rx.get(), rx.get(), c.order, ctx.get());
  return BN_cmp(rx.get(), r.get()) == 0;
}

}  // namespace hbhc
